#include "cfrec/ease.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cfrec/error.hpp"
#include "csv.hpp"

namespace cfrec {

namespace {

constexpr int kEaseFormatVersion = 1;

EaseModel solve_from_gram(Eigen::MatrixXd gram, double ridge) {
  const Eigen::Index d = gram.rows();
  gram.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::Numeric, "Gram matrix plus ridge is not positive definite");
  }
  const Eigen::MatrixXd p = llt.solve(Eigen::MatrixXd::Identity(d, d));
  EaseModel model;
  model.ridge = ridge;
  model.weights.resize(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double pjj = p(j, j);
    for (Eigen::Index l = 0; l < d; ++l) {
      model.weights(j, l) = (j == l) ? 0.0 : -p(j, l) / pjj;
    }
  }
  if (!model.weights.allFinite()) {
    fail(ErrorKind::Numeric, "EASE weights are not finite");
  }
  return model;
}

void check_ridge(double ridge, Eigen::Index d) {
  if (!(ridge > 0.0) || !std::isfinite(ridge)) {
    fail(ErrorKind::InvalidArgument, "EASE ridge must be a positive finite number");
  }
  if (d < 2) fail(ErrorKind::InvalidArgument, "EASE needs at least 2 items");
}

}  // namespace

EaseModel train_ease(const InteractionMatrix& x, const EaseOptions& options) {
  const int d = x.n_items();
  check_ridge(options.ridge, d);
  if (d > options.max_items) {
    fail(ErrorKind::Config, "item count " + std::to_string(d) +
                                " exceeds the dense EASE limit " +
                                std::to_string(options.max_items));
  }
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  for (const auto& row : x.rows()) {
    for (const Entry& a : row) {
      for (const Entry& b : row) gram(a.item, b.item) += a.value * b.value;
    }
  }
  return solve_from_gram(std::move(gram), options.ridge);
}

EaseModel train_ease(const Eigen::MatrixXd& x, double ridge) {
  check_ridge(ridge, x.cols());
  return solve_from_gram(x.transpose() * x, ridge);
}

std::vector<double> score(const EaseModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.weights.cols()) {
    fail(ErrorKind::InvalidArgument,
         "user vector has " + std::to_string(x.size()) + " entries, model has " +
             std::to_string(model.weights.cols()) + " items");
  }
  std::vector<double> y(model.n_items(), 0.0);
  for (Eigen::Index l = 0; l < model.weights.cols(); ++l) {
    if (x[l] == 0.0) continue;
    for (Eigen::Index j = 0; j < model.weights.rows(); ++j) {
      y[j] += model.weights(j, l) * x[l];
    }
  }
  return y;
}

std::vector<int> top_k(std::span<const double> scores, int k,
                       std::span<const int> exclude) {
  const int d = static_cast<int>(scores.size());
  std::vector<char> excluded(d, 0);
  int n_excluded = 0;
  for (int e : exclude) {
    if (e >= 0 && e < d && !excluded[e]) {
      excluded[e] = 1;
      ++n_excluded;
    }
  }
  if (k < 1 || k > d - n_excluded) {
    fail(ErrorKind::InvalidArgument, "top_k: k=" + std::to_string(k) +
                                         " out of range [1, " +
                                         std::to_string(d - n_excluded) + "]");
  }
  std::vector<int> order;
  order.reserve(d - n_excluded);
  for (int j = 0; j < d; ++j) {
    if (!excluded[j]) order.push_back(j);
  }
  auto better = [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
  order.resize(k);
  return order;
}

int rank_of(std::span<const double> scores, int item) {
  int ahead = 0;
  for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
    if (j == item) continue;
    if (scores[j] > scores[item] || (scores[j] == scores[item] && j < item)) {
      ++ahead;
    }
  }
  return ahead + 1;
}

ScoreBounds score_bounds(const EaseModel& model,
                         std::span<const Interval> var_bounds) {
  const int d = model.n_items();
  if (static_cast<int>(var_bounds.size()) != d) {
    fail(ErrorKind::InvalidArgument, "score_bounds: bound vector size mismatch");
  }
  for (const Interval& b : var_bounds) {
    if (b.lower > b.upper) fail(ErrorKind::InvalidArgument, "score_bounds: lb > ub");
  }
  ScoreBounds out;
  out.lower.assign(d, 0.0);
  out.upper.assign(d, 0.0);
  for (int j = 0; j < d; ++j) {
    double lo = 0.0;
    double hi = 0.0;
    for (int l = 0; l < d; ++l) {
      const double w = model.weights(j, l);
      if (w >= 0.0) {
        hi += w * var_bounds[l].upper;
        lo += w * var_bounds[l].lower;
      } else {
        hi += w * var_bounds[l].lower;
        lo += w * var_bounds[l].upper;
      }
    }
    out.lower[j] = lo;
    out.upper[j] = hi;
  }
  return out;
}

std::string ease_to_json(const EaseModel& model) {
  nlohmann::json j;
  j["format_version"] = kEaseFormatVersion;
  j["ridge"] = model.ridge;
  j["n_items"] = model.n_items();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(model.weights.size()));
  for (Eigen::Index r = 0; r < model.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.weights.cols(); ++c) {
      flat.push_back(model.weights(r, c));
    }
  }
  j["weights"] = std::move(flat);
  return j.dump();
}

EaseModel ease_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, std::string("invalid EASE model JSON: ") + e.what());
  }
  if (j.value("format_version", 0) != kEaseFormatVersion) {
    fail(ErrorKind::Data, "unsupported EASE model format version");
  }
  const int d = j.at("n_items").get<int>();
  const auto flat = j.at("weights").get<std::vector<double>>();
  if (d < 0 || flat.size() != static_cast<std::size_t>(d) * d) {
    fail(ErrorKind::Data, "EASE weight array has the wrong size");
  }
  EaseModel model;
  model.ridge = j.at("ridge").get<double>();
  model.weights.resize(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) model.weights(r, c) = flat[static_cast<std::size_t>(r) * d + c];
  }
  for (int r = 0; r < d; ++r) {
    if (model.weights(r, r) != 0.0) fail(ErrorKind::Data, "EASE diagonal is not zero");
  }
  return model;
}

void save_ease(const EaseModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << ease_to_json(model) << '\n';
}

EaseModel load_ease(const std::string& path) {
  return ease_from_json(csv::read_file(path));
}

}  // namespace cfrec
