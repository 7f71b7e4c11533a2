#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfrec/dataset.hpp"
#include "cfrec/interval.hpp"

namespace cfrec {

/// Linear item-item recommender. Row j of `weights` holds the regression
/// coefficients predicting item j, so score_j(x) = weights.row(j) . x.
/// The diagonal is exactly zero.
struct EaseModel {
  Eigen::MatrixXd weights;
  double ridge = 0.0;

  int n_items() const { return static_cast<int>(weights.rows()); }
};

struct EaseOptions {
  double ridge = 100.0;
  /// Refuse to allocate a dense model larger than this many items.
  int max_items = 20000;
};

EaseModel train_ease(const InteractionMatrix& x, const EaseOptions& options = {});

/// Dense variant used for small problems and tests (rows are users).
EaseModel train_ease(const Eigen::MatrixXd& x, double ridge);

std::vector<double> score(const EaseModel& model, std::span<const double> x);

/// The k best items outside `exclude`, best first. Ties go to the lower
/// item index.
std::vector<int> top_k(std::span<const double> scores, int k,
                       std::span<const int> exclude = {});

/// 1-based rank of `item` under the same ordering as top_k (no exclusions).
int rank_of(std::span<const double> scores, int item);

struct ScoreBounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

ScoreBounds score_bounds(const EaseModel& model,
                         std::span<const Interval> var_bounds);

void save_ease(const EaseModel& model, const std::string& path);
EaseModel load_ease(const std::string& path);
std::string ease_to_json(const EaseModel& model);
EaseModel ease_from_json(const std::string& text);

}  // namespace cfrec
