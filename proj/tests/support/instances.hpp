#pragma once
// Random small CE instances shared by the unit and acceptance suites.

#include <algorithm>
#include <optional>
#include <vector>

#include "cfrec/ease.hpp"
#include "cfrec/mio.hpp"
#include "cfrec/random.hpp"
#include "cfrec/spn.hpp"
#include "oracles/enumerate.hpp"

namespace fixture {

struct SmallCe {
  cfrec::EaseModel model;
  cfrec::CeQuery query;
  oracle::CeProblem problem;
};

/// EASE on random clustered binary data, one user with at most
/// `max_support` interactions, target drawn from that user's top-k.
inline SmallCe random_small_ce(cfrec::Rng& rng, int d, int max_support, int k, bool rank_variant) {
  const int users = 40;
  Eigen::MatrixXd x(users, d);
  for (int u = 0; u < users; ++u) {
    const int g = static_cast<int>(rng.below(3));
    for (int l = 0; l < d; ++l) {
      const double p = (l % 3 == g) ? 0.6 : 0.15;
      x(u, l) = rng.uniform() < p ? 1.0 : 0.0;
    }
  }
  SmallCe out;
  out.model = cfrec::train_ease(x, 1.0 + rng.uniform() * 4.0);

  std::vector<double> factual(d, 0.0);
  std::vector<int> order(d);
  for (int l = 0; l < d; ++l) order[l] = l;
  rng.shuffle(std::span<int>(order));
  const int support = 2 + static_cast<int>(rng.below(max_support - 1));
  for (int i = 0; i < support; ++i) factual[order[i]] = 1.0;

  const auto y = cfrec::score(out.model, factual);
  const auto top = cfrec::top_k(y, k);
  out.query.factual = factual;
  out.query.target_item = top[rng.below(top.size())];
  out.query.k_context = k;
  if (rank_variant) {
    out.query.validity = cfrec::RankDrop{k};
  } else {
    out.query.validity = cfrec::ScoreThreshold{y[top.back()]};
  }

  oracle::CeProblem& p = out.problem;
  p.weights.assign(d, std::vector<double>(d));
  for (int j = 0; j < d; ++j) {
    for (int l = 0; l < d; ++l) p.weights[j][l] = out.model.weights(j, l);
  }
  for (double v : factual) p.factual.push_back(static_cast<int>(v));
  p.target = out.query.target_item;
  p.margin = out.query.rank_margin;
  if (rank_variant) {
    p.rho = k;
  } else {
    p.tau = y[top.back()];
  }
  return out;
}

}  // namespace fixture
