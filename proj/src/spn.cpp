#include "cfrec/spn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>
#include <json.hpp>

#include "cfrec/error.hpp"
#include "cfrec/random.hpp"
#include "csv.hpp"

namespace cfrec {

namespace {

constexpr int kSpnFormatVersion = 1;
constexpr double kBinEdgeSlack = 1e-9;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

Aggregator parse_aggregator(const std::string& name) {
  if (name == "sum") return Aggregator::Sum;
  if (name == "mean") return Aggregator::Mean;
  if (name == "disjunction") return Aggregator::Disjunction;
  fail(ErrorKind::Config, "unknown aggregator '" + name + "'");
}

std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::Sum: return "sum";
    case Aggregator::Mean: return "mean";
    case Aggregator::Disjunction: return "disjunction";
  }
  return "?";
}

std::vector<double> aggregate(std::span<const double> x, const CategoryMap& cmap,
                              Aggregator agg) {
  if (agg != Aggregator::Mean) {
    for (double v : x) {
      if (v != 0.0 && v != 1.0) {
        fail(ErrorKind::InvalidArgument,
             to_string(agg) + " aggregation requires a binary vector");
      }
    }
  }
  std::vector<double> z(cmap.n_categories(), 0.0);
  for (int j = 0; j < cmap.n_categories(); ++j) {
    double sum = 0.0;
    bool any = false;
    for (int l : cmap.members[j]) {
      if (l < 0 || l >= static_cast<int>(x.size())) {
        fail(ErrorKind::InvalidArgument, "category member outside the user vector");
      }
      sum += x[l];
      any = any || x[l] > 0.0;
    }
    switch (agg) {
      case Aggregator::Sum: z[j] = sum; break;
      case Aggregator::Mean: z[j] = sum / static_cast<double>(cmap.members[j].size()); break;
      case Aggregator::Disjunction: z[j] = any ? 1.0 : 0.0; break;
    }
  }
  return z;
}

std::vector<FeatureDomain> feature_domains(const CategoryMap& cmap, Aggregator agg) {
  std::vector<FeatureDomain> out;
  for (const auto& members : cmap.members) {
    switch (agg) {
      case Aggregator::Disjunction:
        out.push_back({FeatureDomain::Kind::Binary, 1});
        break;
      case Aggregator::Sum:
        out.push_back({FeatureDomain::Kind::Integer, static_cast<int>(members.size())});
        break;
      case Aggregator::Mean:
        out.push_back({FeatureDomain::Kind::Continuous, 1});
        break;
    }
  }
  return out;
}

int histogram_bin(const HistogramLeaf& leaf, double z, bool* clamped) {
  const int bins = leaf.bin_count();
  bool out = false;
  int b = 0;
  if (leaf.integer_support) {
    const double first = leaf.points.front();
    const double idx = std::round(z - first);
    if (idx < 0) {
      b = 0;
      out = true;
    } else if (idx > bins - 1) {
      b = bins - 1;
      out = true;
    } else {
      b = static_cast<int>(idx);
      out = std::abs(z - leaf.points[b]) > kBinEdgeSlack;
    }
  } else {
    if (z < leaf.points.front() - kBinEdgeSlack) {
      b = 0;
      out = true;
    } else if (z > leaf.points.back() + kBinEdgeSlack) {
      b = bins - 1;
      out = true;
    } else {
      auto it = std::upper_bound(leaf.points.begin(), leaf.points.end(),
                                 z + kBinEdgeSlack);
      b = static_cast<int>(it - leaf.points.begin()) - 1;
      b = std::clamp(b, 0, bins - 1);
    }
  }
  if (clamped) *clamped = out;
  return b;
}

double histogram_log_value(const HistogramLeaf& leaf, int bin) {
  if (leaf.integer_support) return leaf.log_mass[bin];
  return leaf.log_mass[bin] - std::log(leaf.points[bin + 1] - leaf.points[bin]);
}

std::vector<std::vector<int>> Spn::scopes() const {
  std::vector<std::vector<int>> out(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::visit(Overloaded{
                   [&](const SumNode& n) { out[i] = out[n.children.front()]; },
                   [&](const ProductNode& n) {
                     for (int c : n.children) {
                       out[i].insert(out[i].end(), out[c].begin(), out[c].end());
                     }
                     std::sort(out[i].begin(), out[i].end());
                   },
                   [&](const BernoulliLeaf& n) { out[i] = {n.feature}; },
                   [&](const HistogramLeaf& n) { out[i] = {n.feature}; },
               },
               nodes[i]);
  }
  return out;
}

namespace {

double leaf_value(const SpnNode& node, std::span<const double> z, int& clamped) {
  if (const auto* b = std::get_if<BernoulliLeaf>(&node)) {
    const double v = z[b->feature];
    if (v != 0.0 && v != 1.0) ++clamped;
    return v >= 0.5 ? std::log(b->p) : std::log1p(-b->p);
  }
  const auto& h = std::get<HistogramLeaf>(node);
  bool c = false;
  const int bin = histogram_bin(h, z[h.feature], &c);
  if (c) ++clamped;
  return histogram_log_value(h, bin);
}

template <bool UseMax>
std::vector<double> evaluate_nodes(const Spn& spn, std::span<const double> z,
                                   int& clamped) {
  if (static_cast<int>(z.size()) != spn.scope_size) {
    fail(ErrorKind::InvalidArgument, "aggregated vector has " + std::to_string(z.size()) +
                                         " features, SPN expects " +
                                         std::to_string(spn.scope_size));
  }
  std::vector<double> ll(spn.nodes.size(), 0.0);
  std::vector<double> terms;
  for (std::size_t i = 0; i < spn.nodes.size(); ++i) {
    const SpnNode& node = spn.nodes[i];
    if (const auto* s = std::get_if<SumNode>(&node)) {
      terms.clear();
      for (std::size_t c = 0; c < s->children.size(); ++c) {
        terms.push_back(s->log_weights[c] + ll[s->children[c]]);
      }
      ll[i] = UseMax ? *std::max_element(terms.begin(), terms.end()) : log_sum_exp(terms);
    } else if (const auto* p = std::get_if<ProductNode>(&node)) {
      double acc = 0.0;
      for (int c : p->children) acc += ll[c];
      ll[i] = acc;
    } else {
      ll[i] = leaf_value(node, z, clamped);
    }
  }
  return ll;
}

// --- structure learning ----------------------------------------------------

struct Learner {
  const Eigen::MatrixXd& data;
  std::span<const FeatureDomain> domains;
  const SpnParams& params;
  Rng rng;
  std::vector<SpnNode> nodes;

  int emit(SpnNode node) {
    nodes.push_back(std::move(node));
    return static_cast<int>(nodes.size()) - 1;
  }

  int code(int row, int feature) const {
    const double v = data(row, feature);
    const FeatureDomain& d = domains[feature];
    switch (d.kind) {
      case FeatureDomain::Kind::Binary:
        return v >= 0.5 ? 1 : 0;
      case FeatureDomain::Kind::Integer:
        return std::clamp(static_cast<int>(std::lround(v)), 0, d.max_value);
      case FeatureDomain::Kind::Continuous: {
        const int b = static_cast<int>(std::floor(v * params.bins + kBinEdgeSlack));
        return std::clamp(b, 0, params.bins - 1);
      }
    }
    return 0;
  }

  int cardinality(int feature) const {
    const FeatureDomain& d = domains[feature];
    switch (d.kind) {
      case FeatureDomain::Kind::Binary: return 2;
      case FeatureDomain::Kind::Integer: return d.max_value + 1;
      case FeatureDomain::Kind::Continuous: return params.bins;
    }
    return 1;
  }

  int make_leaf(const std::vector<int>& rows, int feature) {
    const double s = params.smoothing;
    const double n = static_cast<double>(rows.size());
    const FeatureDomain& d = domains[feature];
    if (d.kind == FeatureDomain::Kind::Binary) {
      double ones = 0.0;
      for (int r : rows) ones += code(r, feature);
      return emit(BernoulliLeaf{feature, (ones + s) / (n + 2.0 * s)});
    }
    const int card = cardinality(feature);
    std::vector<double> counts(card, 0.0);
    for (int r : rows) counts[code(r, feature)] += 1.0;
    HistogramLeaf leaf;
    leaf.feature = feature;
    leaf.integer_support = d.kind == FeatureDomain::Kind::Integer;
    for (int b = 0; b <= (leaf.integer_support ? card - 1 : card); ++b) {
      leaf.points.push_back(leaf.integer_support ? b : static_cast<double>(b) / card);
    }
    for (int b = 0; b < card; ++b) {
      leaf.log_mass.push_back(std::log((counts[b] + s) / (n + s * card)));
    }
    return emit(std::move(leaf));
  }

  int naive_factorization(const std::vector<int>& rows, const std::vector<int>& features) {
    if (features.size() == 1) return make_leaf(rows, features[0]);
    ProductNode prod;
    for (int f : features) prod.children.push_back(make_leaf(rows, f));
    return emit(std::move(prod));
  }

  double g_test_p_value(const std::vector<int>& rows, int a, int b) const {
    const int ca = cardinality(a);
    const int cb = cardinality(b);
    std::vector<double> table(static_cast<std::size_t>(ca) * cb, 0.0);
    std::vector<double> ra(ca, 0.0), rb(cb, 0.0);
    for (int r : rows) {
      const int x = code(r, a);
      const int y = code(r, b);
      table[static_cast<std::size_t>(x) * cb + y] += 1.0;
      ra[x] += 1.0;
      rb[y] += 1.0;
    }
    const double n = static_cast<double>(rows.size());
    const int nza = static_cast<int>(std::count_if(ra.begin(), ra.end(), [](double v) { return v > 0; }));
    const int nzb = static_cast<int>(std::count_if(rb.begin(), rb.end(), [](double v) { return v > 0; }));
    const int dof = (nza - 1) * (nzb - 1);
    if (dof <= 0) return 1.0;
    double g = 0.0;
    for (int x = 0; x < ca; ++x) {
      for (int y = 0; y < cb; ++y) {
        const double o = table[static_cast<std::size_t>(x) * cb + y];
        if (o > 0.0) g += o * std::log(o * n / (ra[x] * rb[y]));
      }
    }
    g *= 2.0;
    if (g <= 0.0) return 1.0;
    return boost::math::gamma_q(dof / 2.0, g / 2.0);
  }

  /// Connected components of the dependency graph over `features`.
  std::vector<std::vector<int>> independent_groups(const std::vector<int>& rows,
                                                   const std::vector<int>& features) const {
    const int k = static_cast<int>(features.size());
    std::vector<int> parent(k);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (int i = 0; i < k; ++i) {
      for (int j = i + 1; j < k; ++j) {
        if (find(i) == find(j)) continue;
        if (g_test_p_value(rows, features[i], features[j]) < params.independence_threshold) {
          parent[find(i)] = find(j);
        }
      }
    }
    std::vector<std::vector<int>> groups;
    std::vector<int> group_of(k, -1);
    for (int i = 0; i < k; ++i) {
      const int r = find(i);
      if (group_of[r] < 0) {
        group_of[r] = static_cast<int>(groups.size());
        groups.emplace_back();
      }
      groups[group_of[r]].push_back(features[i]);
    }
    return groups;
  }

  double scaled(int row, int feature) const {
    const FeatureDomain& d = domains[feature];
    const double v = data(row, feature);
    return d.kind == FeatureDomain::Kind::Integer && d.max_value > 0 ? v / d.max_value : v;
  }

  /// Seeded 2-means over the rows restricted to `features`. Returns false
  /// when the rows cannot be separated.
  bool two_means(const std::vector<int>& rows, const std::vector<int>& features,
                 std::vector<int>& left, std::vector<int>& right) {
    const int n = static_cast<int>(rows.size());
    const int k = static_cast<int>(features.size());
    auto point = [&](int i, int f) { return scaled(rows[i], features[f]); };
    auto dist_to = [&](int i, const std::vector<double>& c) {
      double d = 0.0;
      for (int f = 0; f < k; ++f) {
        const double t = point(i, f) - c[f];
        d += t * t;
      }
      return d;
    };
    const int first = static_cast<int>(rng.below(n));
    std::vector<double> c0(k), c1(k);
    for (int f = 0; f < k; ++f) c0[f] = point(first, f);
    int far = -1;
    double far_d = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = dist_to(i, c0);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far < 0) return false;
    for (int f = 0; f < k; ++f) c1[f] = point(far, f);

    std::vector<char> assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = iter == 0;
      for (int i = 0; i < n; ++i) {
        const char a = dist_to(i, c1) < dist_to(i, c0) ? 1 : 0;
        if (a != assign[i]) {
          assign[i] = a;
          changed = true;
        }
      }
      if (!changed) break;
      std::vector<double> s0(k, 0.0), s1(k, 0.0);
      int n0 = 0, n1 = 0;
      for (int i = 0; i < n; ++i) {
        auto& s = assign[i] ? s1 : s0;
        (assign[i] ? n1 : n0)++;
        for (int f = 0; f < k; ++f) s[f] += point(i, f);
      }
      if (n0 == 0 || n1 == 0) return false;
      for (int f = 0; f < k; ++f) {
        c0[f] = s0[f] / n0;
        c1[f] = s1[f] / n1;
      }
    }
    left.clear();
    right.clear();
    for (int i = 0; i < n; ++i) (assign[i] ? right : left).push_back(rows[i]);
    return !left.empty() && !right.empty();
  }

  int build(const std::vector<int>& rows, const std::vector<int>& features) {
    if (features.size() == 1) return make_leaf(rows, features[0]);
    if (static_cast<int>(rows.size()) < params.min_instances_split) {
      return naive_factorization(rows, features);
    }
    auto groups = independent_groups(rows, features);
    if (groups.size() > 1) {
      ProductNode prod;
      for (const auto& g : groups) prod.children.push_back(build(rows, g));
      return emit(std::move(prod));
    }
    std::vector<int> left, right;
    if (!two_means(rows, features, left, right)) {
      return naive_factorization(rows, features);
    }
    const double n = static_cast<double>(rows.size());
    SumNode sum;
    sum.children.push_back(build(left, features));
    sum.children.push_back(build(right, features));
    sum.log_weights = {std::log(left.size() / n), std::log(right.size() / n)};
    return emit(std::move(sum));
  }
};

}  // namespace

Spn learn_spn(const Eigen::MatrixXd& data, std::span<const FeatureDomain> domains,
              Aggregator aggregator, const SpnParams& params) {
  if (data.rows() == 0) fail(ErrorKind::InvalidArgument, "cannot learn an SPN from no data");
  if (data.cols() == 0 || static_cast<Eigen::Index>(domains.size()) != data.cols()) {
    fail(ErrorKind::InvalidArgument, "SPN feature domains do not match the data");
  }
  if (!(params.smoothing > 0.0)) {
    fail(ErrorKind::InvalidArgument, "SPN smoothing must be positive");
  }
  if (params.bins < 1) fail(ErrorKind::InvalidArgument, "SPN bins must be >= 1");

  Learner learner{data, domains, params, Rng(params.seed), {}};
  std::vector<int> rows(data.rows());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<int> features(data.cols());
  std::iota(features.begin(), features.end(), 0);
  const int root = learner.build(rows, features);

  Spn spn;
  spn.nodes = std::move(learner.nodes);
  spn.root = root;
  spn.scope_size = static_cast<int>(data.cols());
  spn.aggregator = aggregator;
  spn.domains.assign(domains.begin(), domains.end());
  spn.node_ll_bounds = ll_bounds(spn);
  spn.median_train_ll = median_ll(spn, data);
  return spn;
}

LlEvaluation evaluate(const Spn& spn, std::span<const double> z) {
  int clamped = 0;
  auto ll = evaluate_nodes<false>(spn, z, clamped);
  return {ll[spn.root], clamped};
}

double log_likelihood(const Spn& spn, std::span<const double> z) {
  return evaluate(spn, z).root;
}

std::vector<double> node_log_likelihoods(const Spn& spn, std::span<const double> z) {
  int clamped = 0;
  return evaluate_nodes<false>(spn, z, clamped);
}

std::vector<double> node_max_log_likelihoods(const Spn& spn, std::span<const double> z) {
  int clamped = 0;
  return evaluate_nodes<true>(spn, z, clamped);
}

double median_ll(const Spn& spn, const Eigen::MatrixXd& data) {
  if (data.rows() == 0) fail(ErrorKind::InvalidArgument, "median of no rows");
  std::vector<double> lls;
  lls.reserve(data.rows());
  std::vector<double> z(data.cols());
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) z[c] = data(r, c);
    lls.push_back(log_likelihood(spn, z));
  }
  // Lower middle: index (n-1)/2 in ascending order.
  const std::size_t mid = (lls.size() - 1) / 2;
  std::nth_element(lls.begin(), lls.begin() + mid, lls.end());
  return lls[mid];
}

std::vector<Interval> ll_bounds(const Spn& spn) {
  std::vector<Interval> b(spn.nodes.size());
  for (std::size_t i = 0; i < spn.nodes.size(); ++i) {
    std::visit(Overloaded{
                   [&](const SumNode& n) {
                     double lo = -std::numeric_limits<double>::infinity();
                     double hi = lo;
                     for (std::size_t c = 0; c < n.children.size(); ++c) {
                       lo = std::max(lo, n.log_weights[c] + b[n.children[c]].lower);
                       hi = std::max(hi, n.log_weights[c] + b[n.children[c]].upper);
                     }
                     b[i] = {lo, hi};
                   },
                   [&](const ProductNode& n) {
                     Interval acc{0.0, 0.0};
                     for (int c : n.children) {
                       acc.lower += b[c].lower;
                       acc.upper += b[c].upper;
                     }
                     b[i] = acc;
                   },
                   [&](const BernoulliLeaf& n) {
                     const double a = std::log(n.p);
                     const double c = std::log1p(-n.p);
                     b[i] = {std::min(a, c), std::max(a, c)};
                   },
                   [&](const HistogramLeaf& n) {
                     Interval iv{std::numeric_limits<double>::infinity(),
                                 -std::numeric_limits<double>::infinity()};
                     for (int k = 0; k < n.bin_count(); ++k) {
                       const double v = histogram_log_value(n, k);
                       iv.lower = std::min(iv.lower, v);
                       iv.upper = std::max(iv.upper, v);
                     }
                     b[i] = iv;
                   },
               },
               spn.nodes[i]);
  }
  return b;
}

void validate(const Spn& spn) {
  const int n = static_cast<int>(spn.nodes.size());
  if (n == 0 || spn.root != n - 1) fail(ErrorKind::Data, "SPN root must be the last node");
  if (static_cast<int>(spn.domains.size()) != spn.scope_size) {
    fail(ErrorKind::Data, "SPN domain list does not match scope size");
  }
  auto check_child = [&](int parent, int child) {
    if (child < 0 || child >= parent) fail(ErrorKind::Data, "SPN node order is not topological");
  };
  auto check_feature = [&](int f) {
    if (f < 0 || f >= spn.scope_size) fail(ErrorKind::Data, "SPN leaf feature out of range");
  };
  for (int i = 0; i < n; ++i) {
    std::visit(Overloaded{
                   [&](const SumNode& s) {
                     if (s.children.empty() || s.children.size() != s.log_weights.size()) {
                       fail(ErrorKind::Data, "malformed sum node");
                     }
                     for (int c : s.children) check_child(i, c);
                     if (std::abs(std::exp(log_sum_exp(s.log_weights)) - 1.0) > 1e-9) {
                       fail(ErrorKind::Data, "sum node weights do not sum to 1");
                     }
                   },
                   [&](const ProductNode& p) {
                     if (p.children.empty()) fail(ErrorKind::Data, "empty product node");
                     for (int c : p.children) check_child(i, c);
                   },
                   [&](const BernoulliLeaf& b) {
                     check_feature(b.feature);
                     if (!(b.p > 0.0 && b.p < 1.0)) fail(ErrorKind::Data, "Bernoulli p outside (0,1)");
                   },
                   [&](const HistogramLeaf& h) {
                     check_feature(h.feature);
                     const std::size_t expect = h.log_mass.size() + (h.integer_support ? 0 : 1);
                     if (h.log_mass.empty() || h.points.size() != expect) {
                       fail(ErrorKind::Data, "malformed histogram leaf");
                     }
                     double total = 0.0;
                     for (double lm : h.log_mass) {
                       if (!std::isfinite(lm)) fail(ErrorKind::Data, "histogram mass is zero");
                       total += std::exp(lm);
                     }
                     if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::Data, "histogram masses do not sum to 1");
                   },
               },
               spn.nodes[i]);
  }
  const auto scopes = spn.scopes();
  for (int i = 0; i < n; ++i) {
    if (const auto* s = std::get_if<SumNode>(&spn.nodes[i])) {
      for (int c : s->children) {
        if (scopes[c] != scopes[i]) fail(ErrorKind::Data, "sum node children scopes differ");
      }
    } else if (std::holds_alternative<ProductNode>(spn.nodes[i])) {
      const auto& sc = scopes[i];
      if (std::adjacent_find(sc.begin(), sc.end()) != sc.end()) {
        fail(ErrorKind::Data, "product node children scopes overlap");
      }
    }
  }
  if (static_cast<int>(scopes[spn.root].size()) != spn.scope_size) {
    fail(ErrorKind::Data, "SPN root scope does not cover all features");
  }
}

std::string spn_to_json(const Spn& spn) {
  using nlohmann::json;
  json j;
  j["format_version"] = kSpnFormatVersion;
  j["aggregator"] = to_string(spn.aggregator);
  j["scope_size"] = spn.scope_size;
  j["root"] = spn.root;
  j["median_train_ll"] = spn.median_train_ll;
  json domains = json::array();
  for (const auto& d : spn.domains) {
    const char* kind = d.kind == FeatureDomain::Kind::Binary    ? "binary"
                       : d.kind == FeatureDomain::Kind::Integer ? "integer"
                                                                : "continuous";
    domains.push_back({{"kind", kind}, {"max_value", d.max_value}});
  }
  j["domains"] = std::move(domains);
  const auto scopes = spn.scopes();
  json nodes = json::array();
  for (std::size_t i = 0; i < spn.nodes.size(); ++i) {
    json node{{"id", i}, {"scope", scopes[i]}};
    std::visit(Overloaded{
                   [&](const SumNode& s) {
                     node["kind"] = "sum";
                     node["children"] = s.children;
                     node["log_weights"] = s.log_weights;
                   },
                   [&](const ProductNode& p) {
                     node["kind"] = "product";
                     node["children"] = p.children;
                   },
                   [&](const BernoulliLeaf& b) {
                     node["kind"] = "bernoulli";
                     node["feature"] = b.feature;
                     node["log_p"] = std::log(b.p);
                   },
                   [&](const HistogramLeaf& h) {
                     node["kind"] = "histogram";
                     node["feature"] = h.feature;
                     node["integer_support"] = h.integer_support;
                     node["points"] = h.points;
                     node["log_mass"] = h.log_mass;
                   },
               },
               spn.nodes[i]);
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  return j.dump();
}

Spn spn_from_json(const std::string& text) {
  using nlohmann::json;
  Spn spn;
  try {
    const json j = json::parse(text);
    if (j.at("format_version").get<int>() != kSpnFormatVersion) {
      fail(ErrorKind::Data, "unsupported SPN format version");
    }
    spn.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
    spn.scope_size = j.at("scope_size").get<int>();
    spn.root = j.at("root").get<int>();
    spn.median_train_ll = j.at("median_train_ll").get<double>();
    for (const auto& d : j.at("domains")) {
      const auto kind = d.at("kind").get<std::string>();
      FeatureDomain fd;
      fd.kind = kind == "binary"    ? FeatureDomain::Kind::Binary
                : kind == "integer" ? FeatureDomain::Kind::Integer
                                    : FeatureDomain::Kind::Continuous;
      fd.max_value = d.at("max_value").get<int>();
      spn.domains.push_back(fd);
    }
    for (const auto& n : j.at("nodes")) {
      const auto kind = n.at("kind").get<std::string>();
      if (kind == "sum") {
        spn.nodes.emplace_back(SumNode{n.at("children").get<std::vector<int>>(),
                                       n.at("log_weights").get<std::vector<double>>()});
      } else if (kind == "product") {
        spn.nodes.emplace_back(ProductNode{n.at("children").get<std::vector<int>>()});
      } else if (kind == "bernoulli") {
        spn.nodes.emplace_back(
            BernoulliLeaf{n.at("feature").get<int>(), std::exp(n.at("log_p").get<double>())});
      } else if (kind == "histogram") {
        spn.nodes.emplace_back(HistogramLeaf{n.at("feature").get<int>(),
                                             n.at("integer_support").get<bool>(),
                                             n.at("points").get<std::vector<double>>(),
                                             n.at("log_mass").get<std::vector<double>>()});
      } else {
        fail(ErrorKind::Data, "unknown SPN node kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, std::string("invalid SPN JSON: ") + e.what());
  }
  validate(spn);
  spn.node_ll_bounds = ll_bounds(spn);
  return spn;
}

void save_spn(const Spn& spn, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << spn_to_json(spn) << '\n';
}

Spn load_spn(const std::string& path) { return spn_from_json(csv::read_file(path)); }

}  // namespace cfrec
