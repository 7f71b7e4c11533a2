#pragma once
// Random models shared by the unit and acceptance suites.

#include <cmath>
#include <string>
#include <vector>

#include "cfrec/milp.hpp"
#include "cfrec/random.hpp"
#include "cfrec/spn.hpp"
#include "oracles/tableau_lp.hpp"

namespace fixture {

inline cfrec::MilpModel to_model(const oracle::BoxLp& lp,
                                 cfrec::VarKind kind = cfrec::VarKind::Continuous) {
  using namespace cfrec;
  MilpModel m;
  const int n = static_cast<int>(lp.c.size());
  for (int j = 0; j < n; ++j) m.add_variable("v" + std::to_string(j), kind, lp.lo[j], lp.hi[j]);
  for (std::size_t i = 0; i < lp.a.size(); ++i) {
    LinearExpr e;
    for (int j = 0; j < n; ++j) e.add(j, lp.a[i][j]);
    const Sense s = lp.sense[i] < 0 ? Sense::Le : lp.sense[i] > 0 ? Sense::Ge : Sense::Eq;
    m.add_constraint("c" + std::to_string(i), e, s, lp.b[i]);
  }
  LinearExpr obj;
  obj.constant = lp.c0;
  for (int j = 0; j < n; ++j) obj.add(j, lp.c[j]);
  m.set_objective(obj);
  return m;
}

/// Small integer-ish data so many instances are feasible and bounded.
inline oracle::BoxLp random_lp(cfrec::Rng& rng, int n, int rows) {
  oracle::BoxLp lp;
  for (int j = 0; j < n; ++j) {
    lp.c.push_back(std::round(rng.uniform(-5, 5) * 4) / 4);
    lp.lo.push_back(std::floor(rng.uniform(-3, 1)));
    lp.hi.push_back(lp.lo.back() + 1 + std::floor(rng.uniform(0, 6)));
  }
  for (int i = 0; i < rows; ++i) {
    std::vector<double> a(n);
    for (double& v : a) v = rng.uniform() < 0.3 ? 0.0 : std::round(rng.uniform(-4, 4));
    lp.a.push_back(a);
    lp.sense.push_back(static_cast<int>(rng.below(3)) - 1);
    lp.b.push_back(std::round(rng.uniform(-6, 10)));
  }
  return lp;
}

/// Two latent groups with different feature profiles.
inline Eigen::MatrixXd mixture_data(cfrec::Rng& rng, int rows,
                                    const std::vector<cfrec::FeatureDomain>& domains) {
  const int k = static_cast<int>(domains.size());
  Eigen::MatrixXd z(rows, k);
  for (int r = 0; r < rows; ++r) {
    const bool g = rng.uniform() < 0.4;
    for (int f = 0; f < k; ++f) {
      const double p = g ? 0.8 - 0.05 * f : 0.15 + 0.03 * f;
      if (domains[f].kind == cfrec::FeatureDomain::Kind::Binary) {
        z(r, f) = rng.uniform() < p ? 1.0 : 0.0;
      } else {
        int v = 0;
        for (int t = 0; t < domains[f].max_value; ++t) v += rng.uniform() < p;
        z(r, f) = v;
      }
    }
  }
  return z;
}

}  // namespace fixture
