#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cfrec/dataset.hpp"
#include "cfrec/ease.hpp"
#include "cfrec/milp.hpp"
#include "cfrec/solver.hpp"
#include "cfrec/spn.hpp"

namespace cfrec {

/// At least `rho` other items must score above the target (rank >= rho+1).
struct RankDrop {
  int rho = 1;
};

/// Target score must not exceed `tau`.
struct ScoreThreshold {
  double tau = 0.0;
};

using Validity = std::variant<RankDrop, ScoreThreshold>;

struct NoSpn {};
/// Encoded root log-likelihood must be at least `threshold`.
struct SpnThreshold {
  double threshold = 0.0;
};
/// Subtract alpha * encoded root log-likelihood from the objective.
struct SpnOptimize {
  double alpha = 0.1;
};

using SpnMode = std::variant<NoSpn, SpnThreshold, SpnOptimize>;

struct CeQuery {
  std::vector<double> factual;
  int target_item = 0;
  Validity validity = RankDrop{};
  SpnMode spn_mode = NoSpn{};
  bool decrease_only = true;
  bool fix_target = false;
  int k_context = 5;
  /// Binary or RatingLevels: admissible counterfactual values.
  ValueDomain domain = ValueDomain::binary();
  /// Required score lead of an item counted as ranked above the target.
  double rank_margin = 1e-5;
};

/// Compiled query: the MILP plus where each modeling role lives in it.
struct CeModel {
  MilpModel milp;
  std::vector<int> x;  // counterfactual value per item
  /// Rating inputs: per item, (selector variable, level) pairs.
  std::vector<std::vector<std::pair<int, double>>> levels;
  std::vector<int> rank;  // r_j per item, -1 for the target
  std::vector<int> z;     // aggregated feature per category
  std::vector<double> z_grid;  // spacing of attainable z values (mean)
  std::optional<Aggregator> aggregator;
  std::vector<int> node_ll;  // per SPN node
  int root_ll = -1;
  std::vector<int> selection;  // sum-node child selectors
  std::vector<int> bins;       // histogram bin indicators
  LinearExpr target_score;
  LinearExpr distance;  // l1 to the factual
  std::vector<Interval> var_bounds;  // per item, bounds of x'
};

/// Per-item bounds [lb, ub] of the counterfactual under the query's
/// actionability rules.
std::vector<Interval> query_var_bounds(const CeQuery& query);

/// Counterfactual variables, the l1 objective and the target score.
CeModel build_core(const CeQuery& query, const EaseModel& model);
void add_rank_drop(CeModel& ce, const CeQuery& query, const EaseModel& model,
                   const ScoreBounds& bounds);
void add_score_threshold(CeModel& ce, double tau);
void add_aggregation(CeModel& ce, const CategoryMap& cmap, Aggregator agg);
void add_spn(CeModel& ce, const Spn& spn, const SpnMode& mode);

/// All stages for a query. `cmap` and `spn` are needed only when the mode
/// is not NoSpn.
CeModel compile(const CeQuery& query, const EaseModel& model,
                const CategoryMap* cmap = nullptr, const Spn* spn = nullptr);

enum class CeStatus { Optimal, FeasibleTimeLimit, Infeasible, TimeLimitNoSolution };

std::string to_string(CeStatus s);

struct ChangedItem {
  int item = 0;
  double old_value = 0.0;
  double new_value = 0.0;
};

struct CeResult {
  CeStatus status = CeStatus::TimeLimitNoSolution;
  std::vector<double> counterfactual;
  double l1_distance = 0.0;
  std::optional<double> exact_ll;
  std::optional<double> encoded_ll;
  std::vector<ChangedItem> changed_items;
  double solve_seconds = 0.0;
  double objective = 0.0;
  double objective_bound = 0.0;
  std::int64_t nodes = 0;
  int target_rank = 0;
  double target_score = 0.0;
  bool valid_rank_drop = false;

  bool has_solution() const {
    return status == CeStatus::Optimal || status == CeStatus::FeasibleTimeLimit;
  }
};

/// Rebuilds the counterfactual from a raw assignment and recomputes every
/// metric from scratch (distance, exact SPN log-likelihood, rank). Binaries
/// farther than 1e-4 from integral are rejected.
CeResult decode(const CeModel& ce, std::span<const double> raw, const CeQuery& query,
                const EaseModel& model, const Spn* spn = nullptr,
                const CategoryMap* cmap = nullptr);

/// compile + solve + decode.
CeResult explain(const CeQuery& query, const EaseModel& model, const CategoryMap* cmap,
                 const Spn* spn, const SolveLimits& limits = {});

}  // namespace cfrec
