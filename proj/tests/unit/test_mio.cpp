#include "doctest.h"

#include <cmath>

#include "cfrec/error.hpp"
#include "cfrec/mio.hpp"
#include "cfrec/random.hpp"
#include "oracles/enumerate.hpp"
#include "support/instances.hpp"

using namespace cfrec;

namespace {

EaseModel from_rows(std::vector<std::vector<double>> w) {
  EaseModel m;
  const int d = static_cast<int>(w.size());
  m.weights.resize(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) m.weights(i, j) = w[i][j];
  }
  return m;
}

int count_binaries(const MilpModel& m) {
  int n = 0;
  for (const auto& v : m.variables()) n += v.kind == VarKind::Binary && v.lower < v.upper;
  return n;
}

Spn tiny_spn(std::vector<SpnNode> nodes, int k) {
  Spn s;
  s.nodes = std::move(nodes);
  s.root = static_cast<int>(s.nodes.size()) - 1;
  s.scope_size = k;
  s.aggregator = Aggregator::Disjunction;
  s.domains.assign(k, {FeatureDomain::Kind::Binary, 1});
  s.node_ll_bounds = ll_bounds(s);
  return s;
}

/// CeModel holding only fixed z variables, ready for add_spn.
CeModel fixed_z(const std::vector<double>& z, Aggregator agg) {
  CeModel ce;
  ce.aggregator = agg;
  for (std::size_t j = 0; j < z.size(); ++j) {
    ce.z.push_back(ce.milp.add_variable("z_" + std::to_string(j), VarKind::Continuous, z[j], z[j]));
    ce.z_grid.push_back(1.0);
  }
  return ce;
}

}  // namespace

TEST_CASE("core model for a binary user") {
  const EaseModel m = from_rows({{0, 1, 0}, {1, 0, 0}, {0, 0, 0}});
  CeQuery q;
  q.factual = {1, 1, 0};
  q.target_item = 0;
  CeModel ce = build_core(q, m);
  CHECK(count_binaries(ce.milp) == 2);
  CHECK(ce.milp.variable(ce.x[2]).upper == 0.0);
  // (1 - x0) + (1 - x1)
  const std::vector<double> keep{1, 1, 0}, drop{0, 0, 0};
  CHECK(objective_value(ce.milp, keep) == 0.0);
  CHECK(objective_value(ce.milp, drop) == 2.0);
  CHECK(check_assignment(ce.milp, keep).max() == 0.0);
  CHECK_THROWS_AS(build_core(CeQuery{{1, 1}, 0}, m), Error);
}

TEST_CASE("core model for a rating user uses admissible levels") {
  EaseModel m = from_rows({{0, 1}, {1, 0}});
  CeQuery q;
  q.factual = {0.6, 0.0};
  q.domain = ValueDomain::rating_levels(5);
  CeModel ce = build_core(q, m);
  REQUIRE(ce.levels[0].size() == 4);  // 0, .2, .4, .6
  CHECK(ce.levels[0].back().second == doctest::Approx(0.6));
  CHECK(ce.levels[1].empty());
  std::vector<double> vals(ce.milp.n_variables(), 0.0);
  vals[ce.x[0]] = 0.2;
  vals[ce.levels[0][1].first] = 1.0;
  CHECK(check_assignment(ce.milp, vals).max() <= 1e-12);
  CHECK(objective_value(ce.milp, vals) == doctest::Approx(0.4));
}

TEST_CASE("rank drop rows and counts") {
  const EaseModel m = from_rows({{0, 2, 0}, {1, 0, 0}, {0, 0, 1}});
  CeQuery q;
  q.factual = {1, 1, 1};
  q.target_item = 0;
  q.validity = RankDrop{2};
  CeModel ce = build_core(q, m);
  const int before = ce.milp.n_constraints();
  add_rank_drop(ce, q, m, score_bounds(m, ce.var_bounds));
  int rank_rows = 0;
  int cuts = 0;
  for (int i = before; i < ce.milp.n_constraints(); ++i) {
    const std::string& name = ce.milp.constraints()[i].name;
    if (name == "rank_dist" || name.rfind("rank_cost_", 0) == 0) {
      ++cuts;
      CHECK(ce.milp.constraints()[i].sense == Sense::Ge);
    } else {
      ++rank_rows;
    }
  }
  CHECK(rank_rows == 3);  // one per other item plus the cardinality row
  CHECK(cuts <= 2);
  CHECK(ce.rank[0] == -1);
  CHECK(ce.rank[1] >= 0);
  q.validity = RankDrop{3};
  CeModel again = build_core(q, m);
  CHECK_THROWS_AS(add_rank_drop(again, q, m, score_bounds(m, again.var_bounds)), Error);
}

TEST_CASE("three-item toy matches enumeration and re-scores valid") {
  const EaseModel m = from_rows({{0, 2, 0}, {1, 0, 0}, {0, 0, 1}});
  CeQuery q;
  q.factual = {1, 1, 1};
  q.target_item = 0;
  q.validity = RankDrop{2};
  q.k_context = 2;
  const CeResult r = explain(q, m, nullptr, nullptr);
  REQUIRE(r.status == CeStatus::Optimal);
  oracle::CeProblem p;
  p.weights = {{0, 2, 0}, {1, 0, 0}, {0, 0, 1}};
  p.factual = {1, 1, 1};
  p.target = 0;
  p.rho = 2;
  const auto best = oracle::min_removals(p);
  REQUIRE(best);
  CHECK(r.l1_distance == *best);
  CHECK(r.target_rank == 3);
  CHECK(r.valid_rank_drop);
}

TEST_CASE("zero big-M leaves the indicator free") {
  // target can never beat item 1: y_c <= 0 <= y_1
  const EaseModel m = from_rows({{0, 0, -1}, {0, 0, 1}, {0, 0, 0}});
  CeQuery q;
  q.factual = {0, 0, 1};
  q.target_item = 0;
  q.validity = RankDrop{1};
  const CeResult r = explain(q, m, nullptr, nullptr);
  REQUIRE(r.status == CeStatus::Optimal);
  CHECK(r.l1_distance == 0.0);
}

TEST_CASE("score threshold semantics") {
  const EaseModel m = from_rows({{0, 1, 1}, {1, 0, 0}, {1, 0, 0}});
  CeQuery q;
  q.factual = {0, 1, 1};
  q.target_item = 0;
  q.validity = ScoreThreshold{1.0};
  const CeResult r = explain(q, m, nullptr, nullptr);
  REQUIRE(r.status == CeStatus::Optimal);
  CHECK(r.l1_distance == 1.0);
  CHECK(r.target_score <= 1.0);
  q.validity = ScoreThreshold{std::numeric_limits<double>::infinity()};
  const CeResult free = explain(q, m, nullptr, nullptr);
  CHECK(free.l1_distance == 0.0);
  CHECK(free.changed_items.empty());
}

TEST_CASE("fix_target keeps the target interaction") {
  const EaseModel m = from_rows({{0, 1, 1}, {1, 0, 0}, {1, 0, 0}});
  CeQuery q;
  q.factual = {1, 1, 1};
  q.target_item = 0;
  q.fix_target = true;
  q.validity = ScoreThreshold{0.5};
  const CeResult r = explain(q, m, nullptr, nullptr);
  REQUIRE(r.status == CeStatus::Optimal);
  CHECK(r.counterfactual[0] == 1.0);
}

TEST_CASE("MILP optimum equals enumeration on random binary instances") {
  Rng rng(101);
  for (int t = 0; t < 30; ++t) {
    const bool rank = t % 2 == 0;
    auto inst = fixture::random_small_ce(rng, 10, 8, 3, rank);
    const auto best = oracle::min_removals(inst.problem);
    const CeResult r = explain(inst.query, inst.model, nullptr, nullptr);
    CAPTURE(t);
    if (!best) {
      CHECK(r.status == CeStatus::Infeasible);
      continue;
    }
    REQUIRE(r.status == CeStatus::Optimal);
    CHECK(r.l1_distance == *best);
    for (std::size_t l = 0; l < r.counterfactual.size(); ++l) {
      CHECK(r.counterfactual[l] <= inst.query.factual[l]);
    }
    if (rank) CHECK(r.valid_rank_drop);
  }
}

TEST_CASE("MILP optimum equals grid enumeration for two-way flips and rating levels") {
  Rng rng(202);
  const int d = 7;
  for (int t = 0; t < 24; ++t) {
    const bool ratings = t % 2 == 1;
    const bool rank = (t / 2) % 2 == 0;
    Eigen::MatrixXd x(30, d);
    for (int u = 0; u < 30; ++u) {
      for (int l = 0; l < d; ++l) x(u, l) = rng.uniform() < 0.4 ? 1.0 : 0.0;
    }
    const EaseModel model = train_ease(x, 0.5 + rng.uniform() * 2.0);
    CeQuery q;
    q.domain = ratings ? ValueDomain::rating_levels(5) : ValueDomain::binary();
    q.decrease_only = ratings;  // ratings: shrink only; binary: any flip
    q.factual.assign(d, 0.0);
    for (int l = 0; l < d; ++l) {
      if (rng.uniform() < 0.6) q.factual[l] = ratings ? q.domain.levels[rng.below(5)] : 1.0;
    }
    const auto y = score(model, q.factual);
    const auto top = top_k(y, 3);
    q.target_item = top[rng.below(3)];
    q.k_context = 2;
    oracle::GridProblem g;
    g.weights.assign(d, std::vector<double>(d));
    for (int j = 0; j < d; ++j) {
      for (int l = 0; l < d; ++l) g.weights[j][l] = model.weights(j, l);
    }
    g.factual = q.factual;
    g.target = q.target_item;
    for (int l = 0; l < d; ++l) {
      std::vector<double> c{0.0};
      if (ratings) {
        for (double v : q.domain.levels) {
          if (v <= q.factual[l] + 1e-12) c.push_back(v);
        }
      } else {
        c.push_back(1.0);
      }
      g.choices.push_back(c);
    }
    if (rank) {
      q.validity = RankDrop{2};
      g.rho = 2;
    } else {
      q.validity = ScoreThreshold{y[top[2]]};
      g.tau = y[top[2]];
    }
    const auto best = oracle::min_distance(g);
    const CeResult r = explain(q, model, nullptr, nullptr);
    CAPTURE(t);
    if (!best) {
      CHECK(r.status == CeStatus::Infeasible);
      continue;
    }
    REQUIRE(r.status == CeStatus::Optimal);
    CHECK(r.l1_distance == doctest::Approx(*best).epsilon(1e-9));
  }
}

TEST_CASE("disjunction aggregation forces z") {
  MilpModel dummy;
  CeQuery q;
  q.factual = {1, 1, 1, 1};
  q.validity = ScoreThreshold{1e9};
  const EaseModel m = from_rows({{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});
  CategoryMap c;
  c.members = {{0, 1}, {2, 3}};
  c.labels = {"a", "b"};
  CeModel ce = build_core(q, m);
  add_aggregation(ce, c, Aggregator::Disjunction);
  REQUIRE(ce.z.size() == 2);
  auto feasible = [&](std::vector<double> x, double z0) {
    std::vector<double> v(ce.milp.n_variables(), 0.0);
    for (int l = 0; l < 4; ++l) v[ce.x[l]] = x[l];
    v[ce.z[0]] = z0;
    v[ce.z[1]] = 1.0;
    return check_assignment(ce.milp, v).max() <= 1e-9;
  };
  CHECK(feasible({0, 0, 1, 0}, 0.0));
  CHECK_FALSE(feasible({0, 0, 1, 0}, 1.0));
  CHECK(feasible({1, 0, 1, 0}, 1.0));
  CHECK_FALSE(feasible({1, 0, 1, 0}, 0.0));
}

TEST_CASE("mean aggregation and rating restrictions") {
  const EaseModel m = from_rows({{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});
  CategoryMap c;
  c.members = {{0, 1, 2, 3}};
  c.labels = {"all"};
  CeQuery q;
  q.factual = {1, 1, 0, 0};
  CeModel ce = build_core(q, m);
  add_aggregation(ce, c, Aggregator::Mean);
  std::vector<double> v(ce.milp.n_variables(), 0.0);
  v[ce.x[0]] = 1;
  v[ce.x[1]] = 1;
  v[ce.z[0]] = 0.5;
  CHECK(check_assignment(ce.milp, v).max() <= 1e-12);

  CeQuery r;
  r.factual = {0.6, 0.2, 0, 0};
  r.domain = ValueDomain::rating_levels(5);
  CeModel rc = build_core(r, m);
  CHECK_THROWS_AS(add_aggregation(rc, c, Aggregator::Disjunction), Error);
  CHECK_NOTHROW(add_aggregation(rc, c, Aggregator::Mean));
}

TEST_CASE("SPN encoding examples") {
  const Spn leaf = tiny_spn({BernoulliLeaf{0, 0.5}}, 1);
  for (double z : {0.0, 1.0}) {
    CeModel ce = fixed_z({z}, Aggregator::Disjunction);
    add_spn(ce, leaf, SpnOptimize{1.0});
    const MilpSolution s = solve(ce.milp);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.values[ce.root_ll] == doctest::Approx(std::log(0.5)));
  }
  const Spn mix = tiny_spn({BernoulliLeaf{0, 0.9}, BernoulliLeaf{0, 0.1},
                            SumNode{{0, 1}, {std::log(0.5), std::log(0.5)}}},
                           1);
  CeModel ce = fixed_z({1.0}, Aggregator::Disjunction);
  add_spn(ce, mix, SpnOptimize{1.0});
  const MilpSolution s = solve(ce.milp);
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(s.values[ce.root_ll] == doctest::Approx(std::log(0.45)));
  CHECK(s.values[ce.root_ll] <= log_likelihood(mix, std::vector<double>{1}));

  CeModel wrong = fixed_z({1.0}, Aggregator::Sum);
  CHECK_THROWS_AS(add_spn(wrong, mix, SpnOptimize{1.0}), Error);
  CeModel none = fixed_z({1.0}, Aggregator::Disjunction);
  CHECK_THROWS_AS(add_spn(none, mix, NoSpn{}), Error);
}

TEST_CASE("encoded LL never exceeds the exact LL on random small SPNs") {
  Rng rng(77);
  int checked = 0;
  for (int t = 0; t < 12; ++t) {
    const int k = 2 + static_cast<int>(rng.below(5));
    std::vector<FeatureDomain> d(k, {FeatureDomain::Kind::Binary, 1});
    Eigen::MatrixXd data(150, k);
    for (int r = 0; r < 150; ++r) {
      const bool g = rng.uniform() < 0.5;
      for (int f = 0; f < k; ++f) data(r, f) = rng.uniform() < (g ? 0.85 : 0.2);
    }
    SpnParams p;
    p.min_instances_split = 30;
    p.seed = t;
    const Spn s = learn_spn(data, d, Aggregator::Disjunction, p);
    for (int q = 0; q < 5; ++q) {
      std::vector<double> z(k);
      for (double& v : z) v = static_cast<double>(rng.below(2));
      CeModel ce = fixed_z(z, Aggregator::Disjunction);
      add_spn(ce, s, SpnOptimize{1.0});
      const MilpSolution sol = solve(ce.milp);
      REQUIRE(sol.status == SolveStatus::Optimal);
      const double encoded = sol.values[ce.root_ll];
      CHECK(encoded <= log_likelihood(s, z) + 1e-6);
      // maximization pressure makes the encoding tight to the max form
      CHECK(encoded == doctest::Approx(node_max_log_likelihoods(s, z)[s.root]).epsilon(1e-6));
      ++checked;
    }
  }
  CHECK(checked == 60);
}

TEST_CASE("histogram leaves encode for integer and continuous features") {
  Rng rng(15);
  Eigen::MatrixXd data(80, 2);
  for (int r = 0; r < 80; ++r) {
    data(r, 0) = rng.below(4);
    data(r, 1) = std::round(rng.uniform() * 4) / 4;
  }
  const std::vector<FeatureDomain> d{{FeatureDomain::Kind::Integer, 3}, {FeatureDomain::Kind::Continuous, 1}};
  const Spn s = learn_spn(data, d, Aggregator::Mean, SpnParams{});
  for (double a : {0.0, 2.0, 3.0}) {
    for (double b : {0.0, 0.25, 0.5, 1.0}) {
      CeModel ce = fixed_z({a, b}, Aggregator::Mean);
      ce.z_grid = {1.0, 0.25};
      add_spn(ce, s, SpnOptimize{1.0});
      const MilpSolution sol = solve(ce.milp);
      REQUIRE(sol.status == SolveStatus::Optimal);
      CHECK(sol.values[ce.root_ll] == doctest::Approx(log_likelihood(s, std::vector<double>{a, b})));
    }
  }
}

TEST_CASE("decode tolerances") {
  const EaseModel m = from_rows({{0, 1}, {1, 0}});
  CeQuery q;
  q.factual = {1, 1};
  q.validity = ScoreThreshold{1e9};
  const CeModel ce = build_core(q, m);
  std::vector<double> raw(ce.milp.n_variables(), 0.0);
  raw[ce.x[0]] = 0.9999999;
  raw[ce.x[1]] = 1.0;
  const CeResult r = decode(ce, raw, q, m);
  CHECK(r.l1_distance == 0.0);
  CHECK(r.changed_items.empty());
  raw[ce.x[0]] = 0.9;
  CHECK_THROWS_AS(decode(ce, raw, q, m), Error);
}

TEST_CASE("threshold and optimize modes bracket the plain optimum") {
  Rng rng(303);
  CategoryMap c;
  c.members = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}, {9}};
  c.labels = {"a", "b", "c", "d"};
  for (int t = 0; t < 6; ++t) {
    auto inst = fixture::random_small_ce(rng, 10, 8, 3, true);
    Eigen::MatrixXd data(120, 4);
    for (int r = 0; r < 120; ++r) {
      for (int f = 0; f < 4; ++f) data(r, f) = rng.uniform() < 0.5 + 0.1 * f;
    }
    SpnParams p;
    p.min_instances_split = 40;
    const Spn s = learn_spn(data, feature_domains(c, Aggregator::Disjunction), Aggregator::Disjunction, p);
    const CeResult plain = explain(inst.query, inst.model, &c, &s);
    if (plain.status != CeStatus::Optimal) continue;
    CeQuery opt = inst.query;
    opt.spn_mode = SpnOptimize{0.1};
    const CeResult o = explain(opt, inst.model, &c, &s);
    REQUIRE(o.status == CeStatus::Optimal);
    CHECK(o.l1_distance >= plain.l1_distance);
    REQUIRE(o.encoded_ll);
    REQUIRE(o.exact_ll);
    CHECK(*o.exact_ll >= *o.encoded_ll - 1e-6);
    const double plain_encoded = node_max_log_likelihoods(s, aggregate(plain.counterfactual, c, s.aggregator))[s.root];
    CHECK(*o.encoded_ll >= plain_encoded - 1e-6);

    CeQuery thr = inst.query;
    thr.spn_mode = SpnThreshold{s.median_train_ll};
    const CeResult th = explain(thr, inst.model, &c, &s);
    if (th.status == CeStatus::Optimal) {
      CHECK(th.l1_distance >= plain.l1_distance);
      CHECK(*th.exact_ll >= s.median_train_ll - 1e-6);
    } else {
      CHECK(th.status == CeStatus::Infeasible);
    }
  }
}
