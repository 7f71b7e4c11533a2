#include "cfrec/milp.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cfrec/error.hpp"

namespace cfrec {

namespace {

std::vector<Term> merge_terms(const std::vector<Term>& terms) {
  std::map<int, double> acc;
  for (const Term& t : terms) acc[t.var] += t.coeff;
  std::vector<Term> out;
  out.reserve(acc.size());
  for (const auto& [var, coeff] : acc) {
    if (coeff != 0.0) out.push_back({var, coeff});
  }
  return out;
}

}  // namespace

LinearExpr& LinearExpr::add(const LinearExpr& other, double scale) {
  for (const Term& t : other.terms) add(t.var, t.coeff * scale);
  constant += other.constant * scale;
  return *this;
}

double LinearExpr::evaluate(std::span<const double> values) const {
  double v = constant;
  for (const Term& t : terms) v += t.coeff * values[t.var];
  return v;
}

int MilpModel::add_variable(std::string name, VarKind kind, double lower, double upper) {
  const int index = static_cast<int>(variables_.size());
  if (!by_name_.emplace(name, index).second) {
    fail(ErrorKind::InvalidArgument, "duplicate variable name '" + name + "'");
  }
  variables_.push_back({std::move(name), kind, lower, upper});
  return index;
}

int MilpModel::add_constraint(std::string name, const LinearExpr& lhs, Sense sense,
                              double rhs) {
  Constraint row;
  row.name = std::move(name);
  row.terms = merge_terms(lhs.terms);
  row.sense = sense;
  row.rhs = rhs - lhs.constant;
  for (const Term& t : row.terms) {
    if (t.var < 0 || t.var >= n_variables()) {
      fail(ErrorKind::InvalidArgument, "row '" + row.name + "' references an undeclared variable");
    }
  }
  constraints_.push_back(std::move(row));
  return static_cast<int>(constraints_.size()) - 1;
}

void MilpModel::add_objective(const LinearExpr& expr, double scale) {
  objective_.add(expr, scale);
  objective_.terms = merge_terms(objective_.terms);
}

void MilpModel::set_objective(LinearExpr expr) {
  objective_ = std::move(expr);
  objective_.terms = merge_terms(objective_.terms);
}

int MilpModel::find_variable(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

void MilpModel::check() const {
  for (const Variable& v : variables_) {
    if (!std::isfinite(v.lower) || !std::isfinite(v.upper)) {
      fail(ErrorKind::InvalidArgument, "variable '" + v.name + "' has an infinite bound");
    }
    if (v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0)) {
      fail(ErrorKind::InvalidArgument, "binary '" + v.name + "' has bounds outside [0,1]");
    }
  }
  for (const Constraint& c : constraints_) {
    if (!std::isfinite(c.rhs)) {
      fail(ErrorKind::InvalidArgument, "row '" + c.name + "' has a non-finite rhs");
    }
    for (const Term& t : c.terms) {
      if (t.var < 0 || t.var >= n_variables() || !std::isfinite(t.coeff)) {
        fail(ErrorKind::InvalidArgument, "row '" + c.name + "' has an invalid term");
      }
    }
  }
  for (const Term& t : objective_.terms) {
    if (t.var < 0 || t.var >= n_variables() || !std::isfinite(t.coeff)) {
      fail(ErrorKind::InvalidArgument, "objective has an invalid term");
    }
  }
}

double Violation::max() const { return std::max({row, bound, integrality}); }

Violation check_assignment(const MilpModel& model, std::span<const double> values) {
  if (static_cast<int>(values.size()) != model.n_variables()) {
    fail(ErrorKind::InvalidArgument, "assignment size does not match the model");
  }
  Violation v;
  for (int i = 0; i < model.n_variables(); ++i) {
    const Variable& var = model.variable(i);
    const double x = values[i];
    v.bound = std::max({v.bound, var.lower - x, x - var.upper});
    if (var.is_integral()) v.integrality = std::max(v.integrality, std::abs(x - std::round(x)));
  }
  for (const Constraint& c : model.constraints()) {
    double lhs = 0.0;
    for (const Term& t : c.terms) lhs += t.coeff * values[t.var];
    double viol = 0.0;
    switch (c.sense) {
      case Sense::Le: viol = lhs - c.rhs; break;
      case Sense::Ge: viol = c.rhs - lhs; break;
      case Sense::Eq: viol = std::abs(lhs - c.rhs); break;
    }
    v.row = std::max(v.row, viol);
  }
  return v;
}

double objective_value(const MilpModel& model, std::span<const double> values) {
  return model.objective().evaluate(values);
}

}  // namespace cfrec
