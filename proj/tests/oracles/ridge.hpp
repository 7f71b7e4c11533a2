#pragma once
// Per-column ridge regression with the self-weight removed from the
// problem entirely: w = argmin ||x_j - X_{-j} w||^2 + lambda ||w||^2,
// solved from the normal equations by Gaussian elimination.

#include <cmath>
#include <utility>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;  // row-major, rows = users

inline std::vector<double> gauss_solve(Dense a, std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return x;
}

/// Returns W with W[j][l] = weight of item l when predicting item j.
inline Dense constrained_ridge(const Dense& x, double lambda) {
  const int users = static_cast<int>(x.size());
  const int d = static_cast<int>(x[0].size());
  Dense w(d, std::vector<double>(d, 0.0));
  for (int j = 0; j < d; ++j) {
    std::vector<int> others;
    for (int l = 0; l < d; ++l) {
      if (l != j) others.push_back(l);
    }
    const int m = static_cast<int>(others.size());
    Dense g(m, std::vector<double>(m, 0.0));
    std::vector<double> rhs(m, 0.0);
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        for (int u = 0; u < users; ++u) g[a][b] += x[u][others[a]] * x[u][others[b]];
      }
      g[a][a] += lambda;
      for (int u = 0; u < users; ++u) rhs[a] += x[u][others[a]] * x[u][j];
    }
    const auto sol = gauss_solve(g, rhs);
    for (int a = 0; a < m; ++a) w[j][others[a]] = sol[a];
  }
  return w;
}

}  // namespace oracle
