#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "cfrec/error.hpp"
#include "cfrec/solver.hpp"

namespace cfrec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// LP after removing fixed columns and rows that cannot bind.
struct ReducedLp {
  std::vector<int> columns;  // reduced column -> model variable
  RowMatrix a;               // rows x columns
  std::vector<double> row_lo, row_hi;
  std::vector<double> col_lo, col_hi;
  std::vector<double> cost;
  double cost_offset = 0.0;
  bool infeasible = false;
};

ReducedLp reduce(const MilpModel& model, std::span<const double> lower,
                 std::span<const double> upper, double tol) {
  ReducedLp lp;
  const int n = model.n_variables();
  std::vector<int> local(n, -1);
  std::vector<double> fixed(n, 0.0);
  for (int j = 0; j < n; ++j) {
    if (lower[j] > upper[j] + tol) {
      lp.infeasible = true;
      return lp;
    }
    if (upper[j] - lower[j] <= 1e-12) {
      fixed[j] = lower[j];
    } else {
      local[j] = static_cast<int>(lp.columns.size());
      lp.columns.push_back(j);
      lp.col_lo.push_back(lower[j]);
      lp.col_hi.push_back(upper[j]);
    }
  }
  lp.cost.assign(lp.columns.size(), 0.0);
  lp.cost_offset = model.objective().constant;
  for (const Term& t : model.objective().terms) {
    if (local[t.var] >= 0) {
      lp.cost[local[t.var]] += t.coeff;
    } else {
      lp.cost_offset += t.coeff * fixed[t.var];
    }
  }

  std::vector<const Constraint*> kept;
  std::vector<std::pair<double, double>> kept_bounds;
  for (const Constraint& c : model.constraints()) {
    double offset = 0.0;
    double min_act = 0.0;
    double max_act = 0.0;
    for (const Term& t : c.terms) {
      if (local[t.var] < 0) {
        offset += t.coeff * fixed[t.var];
      } else if (t.coeff > 0) {
        min_act += t.coeff * lower[t.var];
        max_act += t.coeff * upper[t.var];
      } else {
        min_act += t.coeff * upper[t.var];
        max_act += t.coeff * lower[t.var];
      }
    }
    const double rhs = c.rhs - offset;
    const double lo = c.sense == Sense::Le ? -kInf : rhs;
    const double hi = c.sense == Sense::Ge ? kInf : rhs;
    if (min_act > hi + tol || max_act < lo - tol) {
      lp.infeasible = true;
      return lp;
    }
    if (min_act >= lo - tol && max_act <= hi + tol) continue;  // cannot bind
    kept.push_back(&c);
    kept_bounds.emplace_back(lo, hi);
  }

  lp.a = RowMatrix::Zero(static_cast<Eigen::Index>(kept.size()),
                         static_cast<Eigen::Index>(lp.columns.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (const Term& t : kept[i]->terms) {
      if (local[t.var] >= 0) lp.a(static_cast<Eigen::Index>(i), local[t.var]) += t.coeff;
    }
    lp.row_lo.push_back(kept_bounds[i].first);
    lp.row_hi.push_back(kept_bounds[i].second);
  }
  return lp;
}

/// Bounded-variable primal simplex on the tableau B^{-1} [A | -I], where
/// logical column n+i carries the activity of row i.
class TableauSimplex {
 public:
  TableauSimplex(const ReducedLp& lp, const LpOptions& opt)
      : lp_(lp), opt_(opt), m_(static_cast<int>(lp.a.rows())), n_(static_cast<int>(lp.a.cols())),
        total_(m_ + n_) {
    lb_.resize(total_);
    ub_.resize(total_);
    cost_.assign(total_, 0.0);
    for (int j = 0; j < n_; ++j) {
      lb_[j] = lp.col_lo[j];
      ub_[j] = lp.col_hi[j];
      cost_[j] = lp.cost[j];
    }
    for (int i = 0; i < m_; ++i) {
      lb_[n_ + i] = lp.row_lo[i];
      ub_[n_ + i] = lp.row_hi[i];
    }
    x_.assign(total_, 0.0);
    at_upper_.assign(total_, 0);
    pos_.assign(total_, -1);
    basis_.resize(m_);
    for (int j = 0; j < n_; ++j) {
      at_upper_[j] = cost_[j] < 0.0 ? 1 : 0;
      x_[j] = at_upper_[j] ? ub_[j] : lb_[j];
    }
    for (int i = 0; i < m_; ++i) {
      basis_[i] = n_ + i;
      pos_[n_ + i] = i;
    }
    tableau_ = RowMatrix::Zero(m_, total_);
    tableau_.leftCols(n_) = -lp.a;
    for (int i = 0; i < m_; ++i) tableau_(i, n_ + i) = 1.0;
    recompute_basics();
  }

  LpStatus run() {
    LpStatus status = LpStatus::Infeasible;
    for (int round = 0; round < 4; ++round) {
      status = iterate();
      refactor();
      if (status == LpStatus::Unbounded) return status;
      const bool feasible = max_infeasibility() <= opt_.feasibility_tol;
      if (status == LpStatus::Optimal && feasible) {
        if (reduced_cost_ok()) return status;
      } else if (status == LpStatus::Infeasible && !feasible) {
        if (!has_phase1_candidate()) return status;
      }
    }
    fail(ErrorKind::Numeric, "numerical failure: simplex did not settle");
  }

  double value(int j) const { return x_[j]; }
  int iterations() const { return iterations_; }

 private:
  double infeasibility_cost(int j) const {
    if (x_[j] < lb_[j] - opt_.feasibility_tol) return -1.0;
    if (x_[j] > ub_[j] + opt_.feasibility_tol) return 1.0;
    return 0.0;
  }

  double max_infeasibility() const {
    double worst = 0.0;
    for (int j = 0; j < total_; ++j) {
      worst = std::max({worst, lb_[j] - x_[j], x_[j] - ub_[j]});
    }
    return worst;
  }

  bool phase_one() const {
    for (int b : basis_) {
      if (infeasibility_cost(b) != 0.0) return true;
    }
    return false;
  }

  void compute_reduced_costs(bool phase1) {
    reduced_.resize(total_);
    for (int j = 0; j < total_; ++j) reduced_(j) = phase1 ? 0.0 : cost_[j];
    for (int i = 0; i < m_; ++i) {
      const double cb = phase1 ? infeasibility_cost(basis_[i]) : cost_[basis_[i]];
      if (cb != 0.0) reduced_ -= cb * tableau_.row(i).transpose();
    }
    for (int i = 0; i < m_; ++i) reduced_(basis_[i]) = 0.0;
  }

  bool eligible(int j, double d) const {
    if (pos_[j] >= 0 || ub_[j] - lb_[j] <= 0.0) return false;
    return at_upper_[j] ? d > opt_.optimality_tol : d < -opt_.optimality_tol;
  }

  bool reduced_cost_ok() {
    compute_reduced_costs(false);
    for (int j = 0; j < total_; ++j) {
      if (eligible(j, reduced_(j))) return false;
    }
    return true;
  }

  bool has_phase1_candidate() {
    compute_reduced_costs(true);
    for (int j = 0; j < total_; ++j) {
      if (eligible(j, reduced_(j))) return true;
    }
    return false;
  }

  int choose_entering(bool bland) const {
    int best = -1;
    double best_score = 0.0;
    for (int j = 0; j < total_; ++j) {
      const double d = reduced_(j);
      if (!eligible(j, d)) continue;
      if (bland) return j;
      if (std::abs(d) > best_score) {
        best_score = std::abs(d);
        best = j;
      }
    }
    return best;
  }

  /// Effective bounds of a basic variable during the ratio test. In phase 1
  /// an infeasible variable may move freely away from its violated bound but
  /// stops when it reaches it.
  std::pair<double, double> ratio_bounds(int j, bool phase1) const {
    if (phase1) {
      if (x_[j] < lb_[j] - opt_.feasibility_tol) return {-kInf, lb_[j]};
      if (x_[j] > ub_[j] + opt_.feasibility_tol) return {ub_[j], kInf};
    }
    return {lb_[j], ub_[j]};
  }

  LpStatus iterate() {
    int degenerate_run = 0;
    int since_refactor = 0;
    std::vector<double> alpha(m_);
    while (true) {
      if (iterations_ >= opt_.max_iterations) {
        fail(ErrorKind::Numeric, "numerical failure: simplex iteration limit");
      }
      const bool phase1 = phase_one();
      compute_reduced_costs(phase1);
      const bool bland = degenerate_run >= opt_.degeneracy_stall;
      const int q = choose_entering(bland);
      if (q < 0) return phase1 ? LpStatus::Infeasible : LpStatus::Optimal;
      ++iterations_;

      const double dir = at_upper_[q] ? -1.0 : 1.0;
      for (int i = 0; i < m_; ++i) alpha[i] = -tableau_(i, q) * dir;

      // Harris pass 1: largest step with bounds relaxed by the tolerance.
      const double relax = opt_.feasibility_tol * 0.5;
      double theta_max = ub_[q] - lb_[q];
      for (int i = 0; i < m_; ++i) {
        const double a = alpha[i];
        if (std::abs(a) <= opt_.pivot_tol) continue;
        const auto [lo, hi] = ratio_bounds(basis_[i], phase1);
        const double xb = x_[basis_[i]];
        double limit = kInf;
        if (a > 0 && hi < kInf) limit = (hi + (bland ? 0.0 : relax) - xb) / a;
        if (a < 0 && lo > -kInf) limit = (lo - (bland ? 0.0 : relax) - xb) / a;
        theta_max = std::min(theta_max, limit);
      }
      if (!std::isfinite(theta_max)) return LpStatus::Unbounded;

      // Pass 2: among rows blocking within theta_max, take the largest pivot
      // (Bland: the lowest basic index).
      int leave = -1;
      double best_pivot = 0.0;
      double step = 0.0;
      double leave_value = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double a = alpha[i];
        if (std::abs(a) <= opt_.pivot_tol) continue;
        const auto [lo, hi] = ratio_bounds(basis_[i], phase1);
        const double xb = x_[basis_[i]];
        double ratio = kInf;
        if (a > 0 && hi < kInf) ratio = (hi - xb) / a;
        if (a < 0 && lo > -kInf) ratio = (lo - xb) / a;
        if (ratio > theta_max) continue;
        const bool better = bland ? (leave < 0 || basis_[i] < basis_[leave])
                                  : std::abs(a) > best_pivot;
        if (better) {
          leave = i;
          best_pivot = std::abs(a);
          step = std::max(ratio, 0.0);
          leave_value = a > 0 ? hi : lo;
        }
      }

      const double flip = ub_[q] - lb_[q];
      if (leave < 0 || flip <= step) {
        // Entering variable runs to its opposite bound: no basis change.
        const double t = flip;
        for (int i = 0; i < m_; ++i) x_[basis_[i]] += alpha[i] * t;
        at_upper_[q] = !at_upper_[q];
        x_[q] = at_upper_[q] ? ub_[q] : lb_[q];
        degenerate_run = t > 1e-12 ? 0 : degenerate_run + 1;
        continue;
      }

      for (int i = 0; i < m_; ++i) x_[basis_[i]] += alpha[i] * step;
      x_[q] += dir * step;

      const int out = basis_[leave];
      x_[out] = leave_value;
      at_upper_[out] = x_[out] >= ub_[out] ? 1 : 0;
      pivot(leave, q);
      degenerate_run = step > 1e-12 ? 0 : degenerate_run + 1;
      if (++since_refactor >= opt_.refactor_interval) {
        refactor();
        since_refactor = 0;
      }
    }
  }

  void pivot(int r, int q) {
    const int out = basis_[r];
    const double piv = tableau_(r, q);
    tableau_.row(r) /= piv;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = tableau_(i, q);
      if (f != 0.0) tableau_.row(i) -= f * tableau_.row(r);
    }
    pos_[out] = -1;
    basis_[r] = q;
    pos_[q] = r;
  }

  void recompute_basics() {
    for (int i = 0; i < m_; ++i) {
      double v = 0.0;
      for (int j = 0; j < total_; ++j) {
        if (pos_[j] < 0 && x_[j] != 0.0) v -= tableau_(i, j) * x_[j];
      }
      x_[basis_[i]] = v;
    }
  }

  void refactor() {
    if (m_ == 0) return;
    Eigen::MatrixXd b(m_, m_);
    for (int i = 0; i < m_; ++i) {
      const int j = basis_[i];
      if (j < n_) {
        b.col(i) = lp_.a.col(j);
      } else {
        b.col(i).setZero();
        b(j - n_, i) = -1.0;
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
    if (!(lu.rcond() > 1e-14)) fail(ErrorKind::Numeric, "numerical failure: singular basis");
    Eigen::MatrixXd full(m_, total_);
    full.leftCols(n_) = lp_.a;
    full.rightCols(m_) = -Eigen::MatrixXd::Identity(m_, m_);
    tableau_ = lu.solve(full);
    recompute_basics();
  }

  const ReducedLp& lp_;
  const LpOptions& opt_;
  int m_;
  int n_;
  int total_;
  std::vector<double> lb_, ub_, cost_, x_;
  std::vector<char> at_upper_;
  std::vector<int> pos_, basis_;
  RowMatrix tableau_;
  Eigen::VectorXd reduced_;
  int iterations_ = 0;
};

}  // namespace

LpResult solve_lp(const MilpModel& model, std::span<const double> lower,
                  std::span<const double> upper, const LpOptions& options) {
  const int n = model.n_variables();
  if (static_cast<int>(lower.size()) != n || static_cast<int>(upper.size()) != n) {
    fail(ErrorKind::InvalidArgument, "solve_lp: bound vectors do not match the model");
  }
  LpResult result;
  const ReducedLp lp = reduce(model, lower, upper, options.feasibility_tol);
  if (lp.infeasible) {
    result.status = LpStatus::Infeasible;
    return result;
  }
  TableauSimplex simplex(lp, options);
  result.status = simplex.run();
  result.iterations = simplex.iterations();
  if (result.status != LpStatus::Optimal) return result;

  result.values.assign(n, 0.0);
  for (int j = 0; j < n; ++j) result.values[j] = lower[j];
  for (std::size_t k = 0; k < lp.columns.size(); ++k) {
    const int j = lp.columns[k];
    result.values[j] = std::clamp(simplex.value(static_cast<int>(k)), lower[j], upper[j]);
  }
  result.objective = objective_value(model, result.values);
  return result;
}

LpResult solve_lp(const MilpModel& model, const LpOptions& options) {
  std::vector<double> lower, upper;
  for (const Variable& v : model.variables()) {
    lower.push_back(v.lower);
    upper.push_back(v.upper);
  }
  return solve_lp(model, lower, upper, options);
}

}  // namespace cfrec
