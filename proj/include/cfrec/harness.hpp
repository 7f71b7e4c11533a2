#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfrec/dataset.hpp"
#include "cfrec/ease.hpp"
#include "cfrec/mio.hpp"
#include "cfrec/spn.hpp"

namespace cfrec {

/// Built-in generator for desk-scale experiments: users with a few favourite
/// release-year groups, popularity-skewed items, 1..5 ratings.
struct SyntheticSpec {
  int users = 500;
  int items = 200;
  int categories = 15;
  int min_per_user = 8;
  int max_per_user = 30;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  std::string interactions_csv;  // user_id,item_id,rating
  std::string item_meta_csv;     // item_id,category,tags,year
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

enum class ValidityKind { RankDrop, Score };
enum class SpnModeKind { None, Threshold, Optimize };

ValidityKind parse_validity(const std::string& s);
std::string to_string(ValidityKind v);
SpnModeKind parse_spn_mode(const std::string& s);
std::string to_string(SpnModeKind m);

/// One benchmark cell: validity variant x SPN usage x k.
struct CellSpec {
  ValidityKind validity = ValidityKind::RankDrop;
  SpnModeKind spn_mode = SpnModeKind::None;
  int k = 5;

  std::string label() const;
};

struct ExperimentConfig {
  // data
  std::string interactions_path;
  std::string item_meta_path;
  CsvSchema schema;
  std::optional<SyntheticSpec> synthetic;
  // preprocessing
  bool binarize = true;
  int rating_scale = 5;  // 0: values are used as given (must be 1 or rating levels)
  int min_user_interactions = 5;
  int min_item_interactions = 5;
  CategoryStrategy category_strategy = CategoryStrategy::ByYear;
  // models
  Aggregator aggregator = Aggregator::Disjunction;
  SpnParams spn;
  EaseOptions ease;
  // queries
  CellSpec query;
  double alpha = 0.1;
  std::optional<double> threshold;  // absent: the SPN's median training LL
  bool decrease_only = true;
  bool fix_target = false;
  double time_limit_seconds = 600.0;
  // protocol
  int fold_count = 3;
  int users_sampled = 50;
  int items_per_user = 3;
  bool sample_held_out = true;
  std::vector<CellSpec> cells;  // empty: just `query`
  std::uint64_t seed = 0;
  std::string output_dir = "cfrec-out";

  /// Hash of everything that determines the trained artifacts.
  std::string artifact_hash() const;
};

inline constexpr const char* kOutputDirEnv = "CFREC_OUTPUT_DIR";

/// Parses and validates a JSON config. Unknown keys and bad values raise
/// Error(Config). Relative paths resolve against `base_dir`. The output
/// directory environment variable overrides `output_dir`.
ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);
/// Applies a JSON merge patch to the config document before parsing.
ExperimentConfig patch_config(const ExperimentConfig& base, const std::string& json_patch);
std::string config_to_json(const ExperimentConfig& config);

/// Data after loading, preprocessing, categorisation and fold assignment.
struct PreparedData {
  InteractionMatrix matrix;
  CategoryMap categories;
  FoldSplit folds;
  ValueDomain ce_domain;
};

/// Deterministic in the config; checks referenced files first.
PreparedData prepare_data(const ExperimentConfig& config);

struct FoldModels {
  EaseModel ease;
  Spn spn;
};

struct TrainSummary {
  std::string hash;
  std::vector<std::string> ease_files;
  std::vector<std::string> spn_files;
  std::string manifest_file;
};

std::string ease_artifact(const ExperimentConfig& config, int fold);
std::string spn_artifact(const ExperimentConfig& config, int fold);

/// Per fold: EASE on the users outside the fold, SPN on those users'
/// aggregated vectors.
FoldModels train_fold(const ExperimentConfig& config, const PreparedData& data, int fold);
TrainSummary cmd_train(const ExperimentConfig& config);
/// Loads persisted artifacts; Error(Io) if they were never trained.
FoldModels load_fold(const ExperimentConfig& config, int fold);

/// Query for one user/item under a cell of the config.
CeQuery make_query(const ExperimentConfig& config, const CellSpec& cell,
                   const PreparedData& data, const FoldModels& models, int user, int item);

/// Independent check of a counterfactual: it re-scores and re-ranks using
/// only EaseModel scores.
struct ValidityReport {
  int target_rank = 0;
  double target_score = 0.0;
  bool leaves_top_k = false;
  bool decrease_only_ok = true;
  bool domain_ok = true;
  std::optional<bool> score_ok;  // score variant only
  bool valid = false;
};

ValidityReport verify_ce(const EaseModel& model, const CeQuery& query,
                         std::span<const double> counterfactual);

struct ExplainReport {
  std::string user_id;
  std::string item_id;
  int fold = 0;
  CellSpec cell;
  bool target_in_top_k = true;
  CeResult result;
  ValidityReport verdict;
  std::optional<double> median_train_ll;
  std::vector<std::string> item_ids;  // for external ids of changed items
};

ExplainReport cmd_explain(const ExperimentConfig& config, const std::string& user_id,
                          const std::string& item_id);
std::string explain_to_json(const ExplainReport& report);

/// Writes the compiled query as MPS and returns the path.
std::string cmd_export_mps(const ExperimentConfig& config, const std::string& user_id,
                           const std::string& item_id, const std::string& path);

/// Re-verifies a counterfactual given as an explain JSON document.
ValidityReport cmd_verify(const ExperimentConfig& config, const std::string& explain_json);

struct QueryRecord {
  std::string cell;
  int fold = 0;
  std::string user_id;
  std::string item_id;
  CeStatus status = CeStatus::TimeLimitNoSolution;
  double l1_distance = 0.0;
  std::optional<double> exact_ll;
  std::optional<double> encoded_ll;
  double solve_seconds = 0.0;
  std::int64_t nodes = 0;
  int target_rank = 0;
  bool still_in_top_k = false;
  bool verified = false;
  std::optional<double> threshold;
};

struct CellMetrics {
  CellSpec cell;
  int attempts = 0;
  int successes = 0;
  int optimal = 0;
  int infeasible = 0;
  int time_limit = 0;
  double success_rate = 0.0;
  double optimal_rate = 0.0;
  double ll_mean = 0.0, ll_std = 0.0;
  double l1_mean = 0.0, l1_std = 0.0;
  double time_mean = 0.0, time_median = 0.0;
  double still_in_top_k = 0.0;  // among successes
  double infeasible_share_of_failures = 0.0;
};

struct MetricsReport {
  std::string hash;
  std::vector<CellMetrics> cells;
  std::vector<QueryRecord> records;
};

/// Trains (or reuses) fold models, samples users per fold and runs every
/// cell on each of their top items. Failures are recorded, never fatal.
MetricsReport run_benchmark(const ExperimentConfig& config);
CellMetrics summarize(const CellSpec& cell, std::span<const QueryRecord> records);
std::string report_to_json(const MetricsReport& report, bool with_records = true);
std::string report_to_csv(const MetricsReport& report);
/// Writes metrics_<hash>.csv and metrics_<hash>.json into the output dir.
std::vector<std::string> write_report(const ExperimentConfig& config, const MetricsReport& report);

}  // namespace cfrec
