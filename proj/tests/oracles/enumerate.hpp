#pragma once
// Brute force over every decrease-only binary counterfactual. Scores are
// recomputed here from the raw weight rows; nothing is borrowed from the
// library beyond the inputs.

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

struct CeProblem {
  std::vector<std::vector<double>> weights;  // weights[j][l]
  std::vector<int> factual;                  // 0/1
  int target = 0;
  bool fix_target = false;
  // exactly one of these is used
  std::optional<int> rho;      // at least rho items with score >= target + margin
  std::optional<double> tau;   // target score <= tau
  double margin = 1e-5;
};

inline std::vector<double> scores_of(const CeProblem& p, const std::vector<int>& x) {
  const std::size_t d = x.size();
  std::vector<double> y(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t l = 0; l < d; ++l) y[j] += p.weights[j][l] * x[l];
  }
  return y;
}

inline bool ce_valid(const CeProblem& p, const std::vector<int>& x) {
  const auto y = scores_of(p, x);
  if (p.tau) return y[p.target] <= *p.tau;
  int above = 0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (static_cast<int>(j) != p.target && y[j] >= y[p.target] + p.margin) ++above;
  }
  return above >= *p.rho;
}

/// Minimum number of removed interactions, or nullopt if nothing works.
inline std::optional<int> min_removals(const CeProblem& p) {
  std::vector<int> free;
  for (std::size_t l = 0; l < p.factual.size(); ++l) {
    if (p.factual[l] == 1 && !(p.fix_target && static_cast<int>(l) == p.target)) {
      free.push_back(static_cast<int>(l));
    }
  }
  std::optional<int> best;
  const std::uint64_t count = std::uint64_t{1} << free.size();
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    const int removed = __builtin_popcountll(mask);
    if (best && removed >= *best) continue;
    std::vector<int> x = p.factual;
    for (std::size_t b = 0; b < free.size(); ++b) {
      if (mask >> b & 1) x[free[b]] = 0;
    }
    if (ce_valid(p, x)) best = removed;
  }
  return best;
}

/// Any per-coordinate value sets (flips in both directions, rating
/// levels): minimum l1 distance over the full product, nullopt if none.
struct GridProblem {
  std::vector<std::vector<double>> weights;
  std::vector<double> factual;
  std::vector<std::vector<double>> choices;  // admissible values per coordinate
  int target = 0;
  std::optional<int> rho;
  std::optional<double> tau;
  double margin = 1e-5;
};

inline std::optional<double> min_distance(const GridProblem& p) {
  const std::size_t d = p.factual.size();
  std::vector<std::size_t> pick(d, 0);
  std::vector<double> x(d);
  std::optional<double> best;
  while (true) {
    double dist = 0.0;
    for (std::size_t l = 0; l < d; ++l) {
      x[l] = p.choices[l][pick[l]];
      dist += x[l] > p.factual[l] ? x[l] - p.factual[l] : p.factual[l] - x[l];
    }
    if (!best || dist < *best) {
      std::vector<double> y(d, 0.0);
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t l = 0; l < d; ++l) y[j] += p.weights[j][l] * x[l];
      }
      bool ok;
      if (p.tau) {
        ok = y[p.target] <= *p.tau;
      } else {
        int above = 0;
        for (std::size_t j = 0; j < d; ++j) {
          if (static_cast<int>(j) != p.target && y[j] >= y[p.target] + p.margin) ++above;
        }
        ok = above >= *p.rho;
      }
      if (ok) best = dist;
    }
    std::size_t l = 0;
    while (l < d && ++pick[l] == p.choices[l].size()) pick[l++] = 0;
    if (l == d) break;
  }
  return best;
}

}  // namespace oracle
