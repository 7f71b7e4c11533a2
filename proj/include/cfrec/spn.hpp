#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "cfrec/dataset.hpp"
#include "cfrec/interval.hpp"

namespace cfrec {

enum class Aggregator { Sum, Mean, Disjunction };

Aggregator parse_aggregator(const std::string& name);
std::string to_string(Aggregator a);

/// Collapses a user vector to one value per category:
///   Sum          z_j = sum of x_l over the category
///   Mean         z_j = that sum divided by the category size
///   Disjunction  z_j = 1 iff some x_l > 0 in the category
/// Sum and Disjunction require a binary x.
std::vector<double> aggregate(std::span<const double> x, const CategoryMap& cmap,
                              Aggregator agg);

/// Value domain of one aggregated feature.
struct FeatureDomain {
  enum class Kind { Binary, Integer, Continuous };
  Kind kind = Kind::Binary;
  int max_value = 1;  // Integer support is {0..max_value}; Continuous is [0,1]
};

std::vector<FeatureDomain> feature_domains(const CategoryMap& cmap, Aggregator agg);

struct SumNode {
  std::vector<int> children;
  std::vector<double> log_weights;
};

struct ProductNode {
  std::vector<int> children;
};

struct BernoulliLeaf {
  int feature = 0;
  double p = 0.5;  // probability of value 1
};

/// Integer support: `points` are consecutive support values and each one
/// carries a probability mass. Continuous: `points` are bin edges
/// (bins + 1 of them) and the leaf is a piecewise-constant density.
struct HistogramLeaf {
  int feature = 0;
  bool integer_support = true;
  std::vector<double> points;
  std::vector<double> log_mass;

  int bin_count() const { return static_cast<int>(log_mass.size()); }
};

using SpnNode = std::variant<SumNode, ProductNode, BernoulliLeaf, HistogramLeaf>;

/// Bin that a feature value falls into. Out-of-range values clamp to the
/// nearest bin; `clamped` is set when that happens.
int histogram_bin(const HistogramLeaf& leaf, double z, bool* clamped = nullptr);
/// Log mass (integer support) or log density (continuous) of a bin.
double histogram_log_value(const HistogramLeaf& leaf, int bin);

/// Sum-product network over aggregated features. Nodes are stored in
/// topological order: every child index is smaller than its parent's.
struct Spn {
  std::vector<SpnNode> nodes;
  int root = -1;
  int scope_size = 0;
  Aggregator aggregator = Aggregator::Disjunction;
  std::vector<FeatureDomain> domains;
  double median_train_ll = 0.0;
  std::vector<Interval> node_ll_bounds;

  std::vector<std::vector<int>> scopes() const;
};

struct SpnParams {
  int min_instances_split = 100;
  double independence_threshold = 0.001;
  double smoothing = 1.0;
  std::uint64_t seed = 0;
  int bins = 10;
};

/// LearnSPN-style structure learning. Rows of `data` are aggregated
/// vectors. Feature groups that pass a pairwise G-test of independence
/// become product nodes; otherwise rows are split by seeded 2-means into a
/// sum node. Small row sets and singleton scopes become smoothed leaves.
Spn learn_spn(const Eigen::MatrixXd& data, std::span<const FeatureDomain> domains,
              Aggregator aggregator, const SpnParams& params = {});

struct LlEvaluation {
  double root = 0.0;
  int clamped_features = 0;
};

double log_likelihood(const Spn& spn, std::span<const double> z);
LlEvaluation evaluate(const Spn& spn, std::span<const double> z);

/// Exact per-node log-likelihoods (sum nodes use log-sum-exp).
std::vector<double> node_log_likelihoods(const Spn& spn, std::span<const double> z);
/// Per-node values where each sum node takes the best weighted child
/// instead of log-sum-exp. This is the quantity the MILP encodes.
std::vector<double> node_max_log_likelihoods(const Spn& spn, std::span<const double> z);

/// Median of the root log-likelihood over the rows; lower middle for even
/// counts.
double median_ll(const Spn& spn, const Eigen::MatrixXd& data);

/// Interval propagation of the max-form node values over the whole input
/// domain.
std::vector<Interval> ll_bounds(const Spn& spn);

/// Throws Error(Data) when a structural or parameter invariant is broken.
void validate(const Spn& spn);

std::string spn_to_json(const Spn& spn);
Spn spn_from_json(const std::string& text);
void save_spn(const Spn& spn, const std::string& path);
Spn load_spn(const std::string& path);

}  // namespace cfrec
