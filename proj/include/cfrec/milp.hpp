#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cfrec {

enum class VarKind { Continuous, Binary, Integer };
enum class Sense { Le, Eq, Ge };

struct Variable {
  std::string name;
  VarKind kind = VarKind::Continuous;
  double lower = 0.0;
  double upper = 0.0;

  bool is_integral() const { return kind != VarKind::Continuous; }
};

struct Term {
  int var = 0;
  double coeff = 0.0;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::Le;
  double rhs = 0.0;
};

/// Affine expression over model variables.
struct LinearExpr {
  std::vector<Term> terms;
  double constant = 0.0;

  LinearExpr& add(int var, double coeff) {
    if (coeff != 0.0) terms.push_back({var, coeff});
    return *this;
  }
  LinearExpr& add(const LinearExpr& other, double scale = 1.0);
  double evaluate(std::span<const double> values) const;
};

/// Solver-agnostic MILP: minimize objective subject to linear rows and
/// finite variable bounds.
class MilpModel {
 public:
  int add_variable(std::string name, VarKind kind, double lower, double upper);
  int add_binary(std::string name) { return add_variable(std::move(name), VarKind::Binary, 0.0, 1.0); }

  /// Merges duplicate terms and drops zero coefficients. The expression
  /// constant is moved to the right-hand side.
  int add_constraint(std::string name, const LinearExpr& lhs, Sense sense, double rhs);

  void add_objective(const LinearExpr& expr, double scale = 1.0);
  void set_objective(LinearExpr expr);

  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const LinearExpr& objective() const { return objective_; }

  Variable& variable(int index) { return variables_.at(index); }
  Constraint& constraint(int index) { return constraints_.at(index); }
  const Variable& variable(int index) const { return variables_.at(index); }

  int n_variables() const { return static_cast<int>(variables_.size()); }
  int n_constraints() const { return static_cast<int>(constraints_.size()); }

  int find_variable(const std::string& name) const;

  /// Throws Error(InvalidArgument) if a row references an undeclared
  /// variable, a coefficient is not finite, a bound is infinite, a binary
  /// has bounds outside [0,1], or a name repeats.
  void check() const;

 private:
  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
  LinearExpr objective_;
  std::unordered_map<std::string, int> by_name_;
};

/// Largest violation of any row, bound or integrality requirement.
struct Violation {
  double row = 0.0;
  double bound = 0.0;
  double integrality = 0.0;

  double max() const;
};

/// Independent re-check of an assignment against a model.
Violation check_assignment(const MilpModel& model, std::span<const double> values);

double objective_value(const MilpModel& model, std::span<const double> values);

}  // namespace cfrec
