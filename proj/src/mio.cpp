#include "cfrec/mio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfrec/error.hpp"

namespace cfrec {

namespace {

constexpr double kMinLeafProb = 1e-6;
constexpr double kIntegralityReject = 1e-4;
constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr double kMaxGridPoints = 1e6;
// Row violation the solver accepts; bounds derived here must allow it.
constexpr double kRowSlack = 1e-6;

std::string idx(int i) { return std::to_string(i); }

/// Expression for score_j(x') over the non-fixed counterfactual variables.
LinearExpr score_expr(const CeModel& ce, const EaseModel& model, int j) {
  LinearExpr e;
  for (int l = 0; l < model.n_items(); ++l) {
    const double w = model.weights(j, l);
    if (w == 0.0) continue;
    const Interval& b = ce.var_bounds[l];
    if (b.lower == b.upper) {
      e.constant += w * b.lower;
    } else {
      e.add(ce.x[l], w);
    }
  }
  return e;
}

/// Range of an affine expression over the box of its variables' bounds.
Interval expr_range(const MilpModel& m, const LinearExpr& e) {
  std::vector<std::pair<int, double>> merged;
  merged.reserve(e.terms.size());
  for (const Term& t : e.terms) merged.emplace_back(t.var, t.coeff);
  std::sort(merged.begin(), merged.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Interval r{e.constant, e.constant};
  for (std::size_t i = 0; i < merged.size();) {
    const int v = merged[i].first;
    double a = 0.0;
    for (; i < merged.size() && merged[i].first == v; ++i) a += merged[i].second;
    const Variable& var = m.variable(v);
    r.lower += a >= 0 ? a * var.lower : a * var.upper;
    r.upper += a >= 0 ? a * var.upper : a * var.lower;
  }
  return r;
}

/// Lower bound on the l1 distance needed for item j to lead the target by
/// eps, moving one coordinate at a time from the factual. Exact for binary
/// inputs (largest gains first); the fractional relaxation otherwise.
/// +inf when no move set gets there.
double overtake_cost(const CeQuery& query, const EaseModel& model,
                     const std::vector<Interval>& bounds, int j, double eps, bool binary) {
  const int c = query.target_item;
  const int d = model.n_items();
  double gap = eps - kRowSlack;
  for (int l = 0; l < d; ++l) {
    gap += (model.weights(c, l) - model.weights(j, l)) * query.factual[l];
  }
  if (gap <= 0.0) return 0.0;
  std::vector<std::pair<double, double>> moves;  // (gain per unit, room)
  for (int l = 0; l < d; ++l) {
    const double w = model.weights(c, l) - model.weights(j, l);
    if (w == 0.0) continue;
    const double x = query.factual[l];
    const double room = w > 0 ? x - bounds[l].lower : bounds[l].upper - x;
    if (room > 0.0) moves.emplace_back(std::abs(w), room);
  }
  if (binary) {
    std::vector<double> gains;
    for (const auto& [w, room] : moves) gains.push_back(w * room);
    std::sort(gains.rbegin(), gains.rend());
    double sum = 0.0;
    for (std::size_t i = 0; i < gains.size(); ++i) {
      sum += gains[i];
      if (sum >= gap) return static_cast<double>(i + 1);
    }
    return kInfinity;
  }
  std::sort(moves.rbegin(), moves.rend());
  double cost = 0.0;
  for (const auto& [w, room] : moves) {
    const double take = std::min(room, gap / w);
    cost += take;
    gap -= take * w;
    if (gap <= 1e-12) return cost * (1.0 - 1e-9);
  }
  return kInfinity;
}

}  // namespace

std::vector<Interval> query_var_bounds(const CeQuery& query) {
  const int d = static_cast<int>(query.factual.size());
  std::vector<Interval> b(d);
  for (int l = 0; l < d; ++l) {
    const double x = query.factual[l];
    b[l] = query.decrease_only ? Interval{0.0, x} : Interval{0.0, 1.0};
  }
  if (query.fix_target && query.target_item >= 0 && query.target_item < d) {
    const double x = query.factual[query.target_item];
    b[query.target_item] = {x, x};
  }
  return b;
}

CeModel build_core(const CeQuery& query, const EaseModel& model) {
  const int d = model.n_items();
  if (static_cast<int>(query.factual.size()) != d) {
    fail(ErrorKind::InvalidArgument, "factual has " + std::to_string(query.factual.size()) +
                                         " entries, model has " + std::to_string(d) + " items");
  }
  if (query.target_item < 0 || query.target_item >= d) {
    fail(ErrorKind::InvalidArgument, "target item out of range");
  }
  if (query.domain.kind == ValueDomain::Kind::Raw) {
    fail(ErrorKind::InvalidArgument, "counterfactuals need binary or normalized inputs");
  }
  for (double v : query.factual) {
    if (v != 0.0 && !query.domain.contains(v)) {
      fail(ErrorKind::InvalidArgument, "factual value " + std::to_string(v) + " outside its domain");
    }
  }

  CeModel ce;
  ce.var_bounds = query_var_bounds(query);
  ce.x.assign(d, -1);
  ce.levels.assign(d, {});
  ce.rank.assign(d, -1);
  MilpModel& m = ce.milp;
  LinearExpr objective;
  const bool binary = query.domain.is_binary();

  for (int l = 0; l < d; ++l) {
    const double x = query.factual[l];
    const Interval b = ce.var_bounds[l];
    if (binary) {
      ce.x[l] = m.add_variable("x_" + idx(l), VarKind::Binary, b.lower, b.upper);
      // |x - x'|: (1 - x') when x = 1, x' when x = 0
      if (x == 1.0) {
        objective.constant += 1.0;
        objective.add(ce.x[l], -1.0);
      } else {
        objective.add(ce.x[l], 1.0);
      }
      continue;
    }
    ce.x[l] = m.add_variable("x_" + idx(l), VarKind::Continuous, b.lower, b.upper);
    if (b.lower == b.upper) {
      objective.constant += std::abs(x - b.lower);
      continue;
    }
    std::vector<double> admissible{0.0};
    for (double v : query.domain.levels) {
      if (v >= b.lower && v <= b.upper) admissible.push_back(v);
    }
    LinearExpr onehot;
    LinearExpr link;
    link.add(ce.x[l], 1.0);
    for (std::size_t k = 0; k < admissible.size(); ++k) {
      const int u = m.add_binary("u_lv_" + idx(l) + "_" + idx(static_cast<int>(k)));
      ce.levels[l].emplace_back(u, admissible[k]);
      onehot.add(u, 1.0);
      link.add(u, -admissible[k]);
      if (!query.decrease_only) objective.add(u, std::abs(x - admissible[k]));
    }
    m.add_constraint("onehot_x_" + idx(l), onehot, Sense::Eq, 1.0);
    m.add_constraint("link_x_" + idx(l), link, Sense::Eq, 0.0);
    if (query.decrease_only) {
      objective.constant += x;
      objective.add(ce.x[l], -1.0);
    }
  }
  ce.distance = objective;
  m.set_objective(std::move(objective));

  if (query.fix_target) {
    const int c = query.target_item;
    m.add_constraint("fix_target", LinearExpr{}.add(ce.x[c], 1.0), Sense::Eq, query.factual[c]);
  }
  ce.target_score = score_expr(ce, model, query.target_item);
  return ce;
}

void add_rank_drop(CeModel& ce, const CeQuery& query, const EaseModel& model,
                   const ScoreBounds& bounds) {
  const auto* rd = std::get_if<RankDrop>(&query.validity);
  if (!rd) fail(ErrorKind::InvalidArgument, "add_rank_drop needs a RankDrop query");
  const int d = model.n_items();
  const int c = query.target_item;
  if (rd->rho < 1 || rd->rho >= d) {
    fail(ErrorKind::InvalidArgument, "rank drop rho=" + std::to_string(rd->rho) +
                                         " outside [1, " + std::to_string(d - 1) + "]");
  }
  const double eps = query.rank_margin;
  MilpModel& m = ce.milp;
  const bool binary = query.domain.is_binary();
  LinearExpr cardinality;
  std::vector<double> costs;
  std::vector<double> cost_of(d, 0.0);
  for (int j = 0; j < d; ++j) {
    if (j == c) continue;
    // diff = score_c - score_j; r_j = 1 requires diff <= -eps.
    LinearExpr diff = ce.target_score;
    diff.add(score_expr(ce, model, j), -1.0);
    const Interval range = expr_range(m, diff);
    // Fall back to the per-score bounds if those happen to be tighter.
    const double hi = std::min(range.upper, bounds.upper[c] - bounds.lower[j]);
    const double lo = std::max(range.lower, bounds.lower[c] - bounds.upper[j]);
    const double cost = overtake_cost(query, model, ce.var_bounds, j, eps, binary);
    const bool reachable = lo <= -eps && std::isfinite(cost);
    const bool forced = hi <= -eps;
    if (reachable) costs.push_back(cost);
    cost_of[j] = reachable ? cost : 0.0;
    ce.rank[j] = m.add_variable("r_" + idx(j), VarKind::Binary, forced ? 1.0 : 0.0,
                                reachable ? 1.0 : 0.0);
    const double big_m = std::max(0.0, hi + eps);
    // score_c - score_j + eps <= (1 - r_j) * M_j
    diff.add(ce.rank[j], big_m);
    m.add_constraint("rank_" + idx(j), diff, Sense::Le, big_m - eps);
    cardinality.add(ce.rank[j], 1.0);
  }
  // Each of the rho overtaking items needs its own cost in moves, so the
  // distance is at least the rho-th smallest of them.
  if (static_cast<int>(costs.size()) >= rd->rho) {
    std::nth_element(costs.begin(), costs.begin() + (rd->rho - 1), costs.end());
    const double floor_cost = costs[rd->rho - 1];
    if (floor_cost > 0.0) m.add_constraint("rank_dist", ce.distance, Sense::Ge, floor_cost);
    // Pricier items only count if the distance covers them too.
    for (int j = 0; j < d; ++j) {
      if (j == c || cost_of[j] <= floor_cost) continue;
      LinearExpr row = ce.distance;
      row.add(ce.rank[j], -cost_of[j]);
      m.add_constraint("rank_cost_" + idx(j), row, Sense::Ge, 0.0);
    }
  }
  m.add_constraint("rank_card", cardinality, Sense::Ge, rd->rho);
}

void add_score_threshold(CeModel& ce, double tau) {
  if (std::isinf(tau) && tau > 0) return;
  ce.milp.add_constraint("score_thr", ce.target_score, Sense::Le, tau);
}

void add_aggregation(CeModel& ce, const CategoryMap& cmap, Aggregator agg) {
  MilpModel& m = ce.milp;
  const bool binary_x = std::all_of(ce.levels.begin(), ce.levels.end(),
                                    [](const auto& l) { return l.empty(); }) &&
                        std::all_of(ce.x.begin(), ce.x.end(), [&](int v) {
                          return m.variable(v).kind == VarKind::Binary;
                        });
  if (agg != Aggregator::Mean && !binary_x) {
    fail(ErrorKind::InvalidArgument, to_string(agg) + " aggregation needs binary counterfactual variables");
  }
  const double step = binary_x ? 1.0 : [&] {
    double s = 1.0;
    for (const auto& lv : ce.levels) {
      for (const auto& [u, v] : lv) {
        if (v > 0.0) s = std::min(s, v);
      }
    }
    return s;
  }();

  ce.aggregator = agg;
  ce.z.clear();
  ce.z_grid.clear();
  for (int j = 0; j < cmap.n_categories(); ++j) {
    const auto& members = cmap.members[j];
    if (members.empty()) fail(ErrorKind::InvalidArgument, "empty category");
    const double inv = 1.0 / static_cast<double>(members.size());
    double lo = 0.0;
    double hi = 0.0;
    LinearExpr sum;
    for (int l : members) {
      if (l < 0 || l >= static_cast<int>(ce.x.size())) {
        fail(ErrorKind::InvalidArgument, "category member outside the item range");
      }
      lo += ce.var_bounds[l].lower;
      hi += ce.var_bounds[l].upper;
      sum.add(ce.x[l], 1.0);
    }
    const std::string name = "z_" + idx(j);
    int z = -1;
    switch (agg) {
      case Aggregator::Sum: {
        z = m.add_variable(name, VarKind::Integer, lo, hi);
        LinearExpr row = sum;
        row.add(z, -1.0);
        m.add_constraint("agg_" + idx(j), row, Sense::Eq, 0.0);
        break;
      }
      case Aggregator::Mean: {
        z = m.add_variable(name, VarKind::Continuous, lo * inv, hi * inv);
        LinearExpr row;
        row.add(sum, inv);
        row.add(z, -1.0);
        m.add_constraint("agg_" + idx(j), row, Sense::Eq, 0.0);
        break;
      }
      case Aggregator::Disjunction: {
        z = m.add_variable(name, VarKind::Binary, lo > 0.0 ? 1.0 : 0.0, hi > 0.0 ? 1.0 : 0.0);
        // z <= sum x'  forces z = 0 when nothing in the category is kept
        LinearExpr upper;
        upper.add(z, 1.0).add(sum, -1.0);
        m.add_constraint("agg_ub_" + idx(j), upper, Sense::Le, 0.0);
        // z >= sum x' / |K_j|  forces z = 1 otherwise
        LinearExpr lower;
        lower.add(z, 1.0).add(sum, -inv);
        m.add_constraint("agg_lb_" + idx(j), lower, Sense::Ge, 0.0);
        break;
      }
    }
    ce.z.push_back(z);
    ce.z_grid.push_back(agg == Aggregator::Mean ? step * inv : 1.0);
  }
}

void add_spn(CeModel& ce, const Spn& spn, const SpnMode& mode) {
  if (std::holds_alternative<NoSpn>(mode)) {
    fail(ErrorKind::InvalidArgument, "add_spn called without an SPN mode");
  }
  if (!ce.aggregator || *ce.aggregator != spn.aggregator) {
    fail(ErrorKind::InvalidArgument, "SPN aggregator does not match the model's aggregation");
  }
  if (static_cast<int>(ce.z.size()) != spn.scope_size) {
    fail(ErrorKind::InvalidArgument, "SPN scope size does not match the category count");
  }
  MilpModel& m = ce.milp;
  const auto& bounds = spn.node_ll_bounds.size() == spn.nodes.size() ? spn.node_ll_bounds
                                                                     : ll_bounds(spn);
  ce.node_ll.assign(spn.nodes.size(), -1);
  for (std::size_t i = 0; i < spn.nodes.size(); ++i) {
    const int node = static_cast<int>(i);
    const std::string tag = idx(node);
    const int ll = m.add_variable("ll_" + tag, VarKind::Continuous, bounds[i].lower, bounds[i].upper);
    ce.node_ll[i] = ll;
    const SpnNode& n = spn.nodes[i];

    if (const auto* b = std::get_if<BernoulliLeaf>(&n)) {
      const double p = std::clamp(b->p, kMinLeafProb, 1.0 - kMinLeafProb);
      const double log_p = std::log(p);
      const double log_q = std::log1p(-p);
      // ll = z log p + (1 - z) log(1 - p)
      LinearExpr row;
      row.add(ll, 1.0).add(ce.z[b->feature], -(log_p - log_q));
      m.add_constraint("leaf_" + tag, row, Sense::Eq, log_q);
    } else if (const auto* h = std::get_if<HistogramLeaf>(&n)) {
      const int zv = ce.z[h->feature];
      const Variable zvar = m.variable(zv);
      LinearExpr onehot;
      LinearExpr value;
      value.add(ll, 1.0);
      LinearExpr link;
      link.add(zv, 1.0);
      // Attainable z values per bin. Continuous features live on a grid
      // (multiples of z_grid), so each bin gets the exact span of grid
      // points that evaluation would put into it.
      std::vector<Interval> span(h->bin_count(), {kInfinity, -kInfinity});
      if (!h->integer_support) {
        const double g = ce.z_grid[h->feature];
        const double first = std::ceil(zvar.lower / g - 1e-9);
        const double last = std::floor(zvar.upper / g + 1e-9);
        if (!(g > 0.0) || last - first > kMaxGridPoints) {
          fail(ErrorKind::InvalidArgument, "aggregated feature grid too fine to encode");
        }
        for (double t = first; t <= last; t += 1.0) {
          const double v = t * g;
          Interval& b = span[histogram_bin(*h, v)];
          b.lower = std::min(b.lower, v);
          b.upper = std::max(b.upper, v);
        }
      }
      for (int k = 0; k < h->bin_count(); ++k) {
        bool reachable = true;
        double lo = 0.0;
        double hi = 0.0;
        if (h->integer_support) {
          reachable = h->points[k] >= zvar.lower - 1e-9 && h->points[k] <= zvar.upper + 1e-9;
        } else {
          reachable = span[k].lower <= span[k].upper;
          const double pad = 0.25 * ce.z_grid[h->feature];
          lo = span[k].lower - pad;
          hi = span[k].upper + pad;
        }
        const int u = m.add_variable("u_bin_" + tag + "_" + idx(k), VarKind::Binary, 0.0,
                                     reachable ? 1.0 : 0.0);
        ce.bins.push_back(u);
        onehot.add(u, 1.0);
        value.add(u, -histogram_log_value(*h, k));
        if (h->integer_support) {
          link.add(u, -h->points[k]);
        } else if (reachable) {
          // u = 1  =>  lo <= z <= hi
          const double m_lo = std::max(0.0, lo - zvar.lower);
          const double m_hi = std::max(0.0, zvar.upper - hi);
          LinearExpr lower_row;
          lower_row.add(zv, 1.0).add(u, -m_lo);
          m.add_constraint("bin_lo_" + tag + "_" + idx(k), lower_row, Sense::Ge, lo - m_lo);
          LinearExpr upper_row;
          upper_row.add(zv, 1.0).add(u, m_hi);
          m.add_constraint("bin_hi_" + tag + "_" + idx(k), upper_row, Sense::Le, hi + m_hi);
        }
      }
      m.add_constraint("onehot_" + tag, onehot, Sense::Eq, 1.0);
      m.add_constraint("leaf_" + tag, value, Sense::Eq, 0.0);
      if (h->integer_support) m.add_constraint("val_" + tag, link, Sense::Eq, 0.0);
    } else if (const auto* p = std::get_if<ProductNode>(&n)) {
      LinearExpr row;
      row.add(ll, 1.0);
      for (int c : p->children) row.add(ce.node_ll[c], -1.0);
      m.add_constraint("prod_" + tag, row, Sense::Eq, 0.0);
    } else {
      const auto& s = std::get<SumNode>(n);
      LinearExpr onehot;
      for (std::size_t c = 0; c < s.children.size(); ++c) {
        const int child = s.children[c];
        const int sel = m.add_binary("s_" + tag + "_" + idx(static_cast<int>(c)));
        ce.selection.push_back(sel);
        onehot.add(sel, 1.0);
        // ll <= log w_c + ll_child + M_c (1 - s_c)
        const double big_m = std::max(0.0, bounds[i].upper - (s.log_weights[c] + bounds[child].lower));
        LinearExpr row;
        row.add(ll, 1.0).add(ce.node_ll[child], -1.0).add(sel, big_m);
        m.add_constraint("sum_" + tag + "_" + idx(static_cast<int>(c)), row, Sense::Le,
                         s.log_weights[c] + big_m);
      }
      m.add_constraint("sel_" + tag, onehot, Sense::Eq, 1.0);
    }
  }
  ce.root_ll = ce.node_ll[spn.root];

  if (const auto* t = std::get_if<SpnThreshold>(&mode)) {
    m.add_constraint("ll_thr", LinearExpr{}.add(ce.root_ll, 1.0), Sense::Ge, t->threshold);
  } else if (const auto* o = std::get_if<SpnOptimize>(&mode)) {
    if (!(o->alpha >= 0.0)) fail(ErrorKind::InvalidArgument, "alpha must be non-negative");
    m.add_objective(LinearExpr{}.add(ce.root_ll, 1.0), -o->alpha);
  }
}

CeModel compile(const CeQuery& query, const EaseModel& model, const CategoryMap* cmap,
                const Spn* spn) {
  CeModel ce = build_core(query, model);
  if (std::holds_alternative<RankDrop>(query.validity)) {
    add_rank_drop(ce, query, model, score_bounds(model, ce.var_bounds));
  } else {
    add_score_threshold(ce, std::get<ScoreThreshold>(query.validity).tau);
  }
  if (!std::holds_alternative<NoSpn>(query.spn_mode)) {
    if (!cmap || !spn) fail(ErrorKind::InvalidArgument, "SPN mode needs a category map and an SPN");
    add_aggregation(ce, *cmap, spn->aggregator);
    add_spn(ce, *spn, query.spn_mode);
  }
  return ce;
}

std::string to_string(CeStatus s) {
  switch (s) {
    case CeStatus::Optimal: return "Optimal";
    case CeStatus::FeasibleTimeLimit: return "FeasibleTimeLimit";
    case CeStatus::Infeasible: return "Infeasible";
    case CeStatus::TimeLimitNoSolution: return "TimeLimitNoSolution";
  }
  return "?";
}

CeResult decode(const CeModel& ce, std::span<const double> raw, const CeQuery& query,
                const EaseModel& model, const Spn* spn, const CategoryMap* cmap) {
  const MilpModel& m = ce.milp;
  if (static_cast<int>(raw.size()) != m.n_variables()) {
    fail(ErrorKind::InvalidArgument, "raw solution does not cover the model");
  }
  for (int j = 0; j < m.n_variables(); ++j) {
    if (m.variable(j).is_integral() && std::abs(raw[j] - std::round(raw[j])) > kIntegralityReject) {
      fail(ErrorKind::Numeric, "solution not integral: '" + m.variable(j).name + "' = " +
                                   std::to_string(raw[j]));
    }
  }
  const int d = model.n_items();
  CeResult r;
  r.status = CeStatus::Optimal;
  r.counterfactual.assign(d, 0.0);
  for (int l = 0; l < d; ++l) {
    double v = 0.0;
    if (!ce.levels[l].empty()) {
      for (const auto& [u, level] : ce.levels[l]) {
        if (std::round(raw[u]) == 1.0) v = level;
      }
    } else if (m.variable(ce.x[l]).is_integral()) {
      v = std::round(raw[ce.x[l]]);
    } else {
      v = raw[ce.x[l]];
    }
    r.counterfactual[l] = v + 0.0;  // no -0 in output
    const double old = query.factual[l];
    r.l1_distance += std::abs(old - v);
    if (old != v) r.changed_items.push_back({l, old, r.counterfactual[l]});
  }
  const auto scores = score(model, r.counterfactual);
  r.target_score = scores[query.target_item];
  r.target_rank = rank_of(scores, query.target_item);
  r.valid_rank_drop = r.target_rank > query.k_context;
  if (spn && cmap) {
    r.exact_ll = log_likelihood(*spn, aggregate(r.counterfactual, *cmap, spn->aggregator));
  }
  if (ce.root_ll >= 0) r.encoded_ll = raw[ce.root_ll];
  r.objective = objective_value(m, raw);
  return r;
}

CeResult explain(const CeQuery& query, const EaseModel& model, const CategoryMap* cmap,
                 const Spn* spn, const SolveLimits& limits) {
  const CeModel ce = compile(query, model, cmap, spn);
  const MilpSolution sol = solve(ce.milp, limits);
  CeResult r;
  if (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::Feasible) {
    r = decode(ce, sol.values, query, model, spn, cmap);
    r.status = sol.status == SolveStatus::Optimal ? CeStatus::Optimal : CeStatus::FeasibleTimeLimit;
    r.objective = sol.objective;
  } else {
    r.status = sol.status == SolveStatus::Infeasible ? CeStatus::Infeasible
                                                     : CeStatus::TimeLimitNoSolution;
  }
  r.objective_bound = sol.best_bound;
  r.solve_seconds = sol.wall_seconds;
  r.nodes = sol.nodes_explored;
  return r;
}

}  // namespace cfrec
