#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <queue>

#include "cfrec/error.hpp"
#include "cfrec/solver.hpp"

namespace cfrec {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Feasible: return "Feasible";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::NoSolutionTimeLimit: return "NoSolutionTimeLimit";
  }
  return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Node {
  std::vector<double> lower;
  std::vector<double> upper;
  double bound = -kInf;  // parent's LP objective
  std::int64_t id = 0;
};

struct NodeOrder {
  bool operator()(const std::unique_ptr<Node>& a, const std::unique_ptr<Node>& b) const {
    if (a->bound != b->bound) return a->bound > b->bound;
    return a->id > b->id;
  }
};

/// True when every integer-valued objective change is a whole number, so
/// any node bound can be rounded up.
bool has_integral_objective(const MilpModel& model) {
  for (const Term& t : model.objective().terms) {
    if (!model.variable(t.var).is_integral()) return false;
    if (t.coeff != std::round(t.coeff)) return false;
  }
  return true;
}

class BranchAndBound {
 public:
  BranchAndBound(const MilpModel& model, const SolveLimits& limits)
      : model_(model), limits_(limits), start_(std::chrono::steady_clock::now()),
        integral_objective_(has_integral_objective(model)),
        in_objective_(model.n_variables(), false) {
    for (const Term& t : model.objective().terms) {
      if (t.coeff != 0.0) in_objective_[t.var] = true;
    }
  }

  MilpSolution run() {
    model_.check();
    auto root = std::make_unique<Node>();
    for (const Variable& v : model_.variables()) {
      root->lower.push_back(v.is_integral() ? std::ceil(v.lower - limits_.integrality_tol) : v.lower);
      root->upper.push_back(v.is_integral() ? std::floor(v.upper + limits_.integrality_tol) : v.upper);
    }
    root->id = next_id_++;
    open_.push(std::move(root));

    bool stopped = false;
    while (!open_.empty()) {
      if (limit_reached()) {
        stopped = true;
        break;
      }
      std::unique_ptr<Node> node = std::move(const_cast<std::unique_ptr<Node>&>(open_.top()));
      open_.pop();
      if (pruned(node->bound)) continue;
      if (!dive(std::move(node))) {
        stopped = true;
        break;
      }
    }

    MilpSolution sol;
    sol.nodes_explored = nodes_;
    sol.bound_trace = std::move(trace_);
    const bool exhausted = !stopped && unresolved_ == 0;
    if (has_incumbent_) {
      sol.values = incumbent_;
      sol.objective = incumbent_obj_;
      sol.status = exhausted ? SolveStatus::Optimal : SolveStatus::Feasible;
      sol.best_bound = exhausted ? incumbent_obj_ : std::min(global_bound(), incumbent_obj_);
    } else {
      sol.status = exhausted ? SolveStatus::Infeasible : SolveStatus::NoSolutionTimeLimit;
      sol.best_bound = exhausted ? kInf : global_bound();
    }
    sol.wall_seconds = elapsed();
    return sol;
  }

 private:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  bool limit_reached() const {
    if (elapsed() >= limits_.time_limit_seconds) return true;
    return limits_.node_limit >= 0 && nodes_ >= limits_.node_limit;
  }

  bool pruned(double bound) const {
    if (!has_incumbent_) return false;
    const double gap = std::max(limits_.absolute_gap,
                                limits_.relative_gap * std::abs(incumbent_obj_));
    if (bound >= incumbent_obj_ - gap) return true;
    return integral_objective_ && bound > incumbent_obj_ - 1.0 + 1e-6;
  }

  double global_bound() const {
    double b = open_.empty() ? kInf : open_.top()->bound;
    b = std::min(b, diving_bound_);
    if (has_incumbent_) b = std::min(b, incumbent_obj_);
    return std::max(b, last_bound_);
  }

  void record_bound() {
    const double b = global_bound();
    if (std::isfinite(b)) last_bound_ = std::max(last_bound_, b);
    trace_.push_back(last_bound_);
  }

  /// Activity-based bound tightening of integer variables on every row and,
  /// once an incumbent exists, on the objective cutoff. False: infeasible.
  bool propagate(Node& node) const {
    std::vector<const std::vector<Term>*> rows;
    std::vector<double> rhs;
    std::vector<double> sign;
    for (const Constraint& c : model_.constraints()) {
      if (c.sense != Sense::Ge) {
        rows.push_back(&c.terms);
        rhs.push_back(c.rhs);
        sign.push_back(1.0);
      }
      if (c.sense != Sense::Le) {
        rows.push_back(&c.terms);
        rhs.push_back(-c.rhs);
        sign.push_back(-1.0);
      }
    }
    if (has_incumbent_) {
      const double cut = integral_objective_ ? incumbent_obj_ - 1.0 + 1e-6
                                             : incumbent_obj_;
      rows.push_back(&model_.objective().terms);
      rhs.push_back(cut - model_.objective().constant);
      sign.push_back(1.0);
    }
    const double tol = limits_.feasibility_tol;
    for (int pass = 0; pass < 8; ++pass) {
      bool changed = false;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double minact = 0.0;
        for (const Term& t : *rows[r]) {
          const double a = sign[r] * t.coeff;
          minact += a > 0 ? a * node.lower[t.var] : a * node.upper[t.var];
        }
        const double slack = rhs[r] - minact;
        if (slack < -tol) return false;
        for (const Term& t : *rows[r]) {
          if (!model_.variable(t.var).is_integral()) continue;
          const double a = sign[r] * t.coeff;
          double& lo = node.lower[t.var];
          double& hi = node.upper[t.var];
          if (lo == hi) continue;
          if (a > 0) {
            const double cap = std::floor(lo + slack / a + limits_.integrality_tol);
            if (cap < hi) {
              hi = cap;
              changed = true;
            }
          } else {
            const double cap = std::ceil(hi + slack / a - limits_.integrality_tol);
            if (cap > lo) {
              lo = cap;
              changed = true;
            }
          }
          if (lo > hi) return false;
        }
      }
      if (!changed) break;
    }
    return true;
  }

  /// Copy of the model whose indicator coefficients are shrunk to what the
  /// node's bounds require (big-M tightening, valid within the subtree).
  MilpModel node_model(const Node& node) const {
    MilpModel m = model_;
    for (int i = 0; i < m.n_constraints(); ++i) {
      Constraint& c = m.constraint(i);
      if (c.sense == Sense::Eq) continue;
      const double s = c.sense == Sense::Le ? 1.0 : -1.0;
      double maxact = 0.0;
      for (const Term& t : c.terms) {
        const double a = s * t.coeff;
        maxact += a > 0 ? a * node.upper[t.var] : a * node.lower[t.var];
      }
      double rhs = s * c.rhs;
      for (Term& t : c.terms) {
        const Variable& v = model_.variable(t.var);
        if (v.kind != VarKind::Binary || node.lower[t.var] == node.upper[t.var]) continue;
        const double a = s * t.coeff;
        if (a > 0) {
          const double rest = maxact - a;
          const double d = std::min(a, rhs - rest);
          if (d > 1e-9) {
            t.coeff = s * (a - d);
            rhs -= d;
            maxact -= d;
          }
        } else {
          // b = 0 contributes nothing to maxact here
          const double d = std::min(-a, rhs - a - maxact);
          if (d > 1e-9) t.coeff = s * (a + d);
        }
      }
      c.rhs = s * rhs;
    }
    return m;
  }

  std::optional<LpResult> relax(const Node& node) {
    const MilpModel local = node_model(node);
    return relax(local, node);
  }

  std::optional<LpResult> relax(const MilpModel& model, const Node& node) {
    try {
      return solve_lp(model, node.lower, node.upper, limits_.lp);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric) throw;
    }
    // One retry from scratch with tighter numerics.
    LpOptions retry = limits_.lp;
    retry.refactor_interval = 20;
    retry.degeneracy_stall = 0;
    try {
      return solve_lp(model, node.lower, node.upper, retry);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric) throw;
    }
    return std::nullopt;
  }

  /// Most fractional variable, preferring those with an objective
  /// coefficient: fixing them moves the bound, the rest usually follow.
  /// When only non-objective variables are fractional, an unfixed
  /// objective variable is split instead, picked by its weight in the rows
  /// the fractional ones live in. -1: the LP point is integral.
  int branching_variable(const Node& node, const std::vector<double>& values) const {
    int best = -1;
    double best_score = limits_.integrality_tol;
    bool any_fractional = false;
    for (int j = 0; j < model_.n_variables(); ++j) {
      if (!model_.variable(j).is_integral()) continue;
      const double f = values[j] - std::floor(values[j]);
      const double dist = std::min(f, 1.0 - f);
      if (dist <= limits_.integrality_tol) continue;
      any_fractional = true;
      const double score = dist + (in_objective_[j] ? 1.0 : 0.0);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (!any_fractional || in_objective_[best]) return best;

    std::vector<double> weight(model_.n_variables(), 0.0);
    for (const Constraint& c : model_.constraints()) {
      double frac = 0.0;
      for (const Term& t : c.terms) {
        if (!model_.variable(t.var).is_integral()) continue;
        const double f = values[t.var] - std::floor(values[t.var]);
        frac += std::min(f, 1.0 - f) > limits_.integrality_tol ? std::min(f, 1.0 - f) : 0.0;
      }
      if (frac == 0.0) continue;
      for (const Term& t : c.terms) weight[t.var] += frac * std::abs(t.coeff);
    }
    int pick = -1;
    double pick_weight = 0.0;
    for (int j = 0; j < model_.n_variables(); ++j) {
      if (!in_objective_[j] || !model_.variable(j).is_integral()) continue;
      if (node.lower[j] == node.upper[j]) continue;
      if (weight[j] > pick_weight) {
        pick_weight = weight[j];
        pick = j;
      }
    }
    return pick >= 0 ? pick : best;
  }

  void offer_incumbent(std::vector<double> values) {
    for (int j = 0; j < model_.n_variables(); ++j) {
      if (model_.variable(j).is_integral()) values[j] = std::round(values[j]);
    }
    const Violation v = check_assignment(model_, values);
    if (v.max() > limits_.feasibility_tol) {
      ++unresolved_;
      return;
    }
    const double obj = objective_value(model_, values);
    if (!has_incumbent_ || obj < incumbent_obj_) {
      has_incumbent_ = true;
      incumbent_obj_ = obj;
      incumbent_ = std::move(values);
    }
  }

  /// Depth-first dive from `node`. Returns false when a limit stopped it.
  bool dive(std::unique_ptr<Node> node) {
    while (node) {
      diving_bound_ = node->bound;
      if (limit_reached()) {
        open_.push(std::move(node));
        diving_bound_ = kInf;
        return false;
      }
      ++nodes_;
      if (!propagate(*node)) break;
      auto lp = relax(*node);
      if (!lp) {
        ++unresolved_;
        break;
      }
      if (lp->status != LpStatus::Optimal) {
        if (lp->status == LpStatus::Unbounded) ++unresolved_;
        break;
      }
      const double bound = std::max(lp->objective, node->bound);
      if (pruned(bound)) break;
      const int j = branching_variable(*node, lp->values);
      if (j < 0) {
        offer_incumbent(std::move(lp->values));
        break;
      }
      const double v = lp->values[j];
      // An integral value splits as {<= v-1, >= v} or {<= v, >= v+1}.
      double split = std::floor(v);
      if (std::abs(v - std::round(v)) <= limits_.integrality_tol) {
        split = std::round(v) < node->upper[j] ? std::round(v) : std::round(v) - 1.0;
      }
      auto down = std::make_unique<Node>(*node);
      down->upper[j] = split;
      down->bound = bound;
      down->id = next_id_++;
      auto up = std::move(node);
      up->lower[j] = split + 1.0;
      up->bound = bound;
      up->id = next_id_++;
      diving_bound_ = bound;
      if (v - split >= 0.5) {
        open_.push(std::move(down));
        node = std::move(up);
      } else {
        open_.push(std::move(up));
        node = std::move(down);
      }
      record_bound();
    }
    diving_bound_ = kInf;
    record_bound();
    return true;
  }

  const MilpModel& model_;
  const SolveLimits& limits_;
  std::chrono::steady_clock::time_point start_;
  bool integral_objective_;
  std::vector<bool> in_objective_;
  std::priority_queue<std::unique_ptr<Node>, std::vector<std::unique_ptr<Node>>, NodeOrder> open_;
  std::int64_t next_id_ = 0;
  std::int64_t nodes_ = 0;
  int unresolved_ = 0;
  bool has_incumbent_ = false;
  double incumbent_obj_ = kInf;
  std::vector<double> incumbent_;
  double diving_bound_ = kInf;
  double last_bound_ = -kInf;
  std::vector<double> trace_;
};

}  // namespace

MilpSolution solve(const MilpModel& model, const SolveLimits& limits) {
  if (!(limits.time_limit_seconds > 0) || !(limits.absolute_gap > 0) ||
      !(limits.relative_gap > 0)) {
    fail(ErrorKind::InvalidArgument, "solve limits must be positive");
  }
  return BranchAndBound(model, limits).run();
}

}  // namespace cfrec
