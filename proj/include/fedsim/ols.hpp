#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fedsim {

namespace detail {

// Gaussian elimination with partial pivoting; sized for the tiny normal
// equation systems used here (d <= 6).
inline std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                        std::vector<double> b) {
  const std::size_t d = b.size();
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-300) throw std::runtime_error("solve_linear: singular system");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < d; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = b[i] / a[i][i];
  return x;
}

}  // namespace detail

// Ridge-stabilized least squares via the normal equations:
// (X'X + ridge*I) theta = X'y. The default ridge only guards against exactly
// collinear columns and is far below measurement scale.
inline std::vector<double> ols_fit(const std::vector<std::vector<double>>& X,
                                   const std::vector<double>& y,
                                   double ridge = 1e-8) {
  if (X.empty() || X.size() != y.size()) throw std::invalid_argument("ols_fit: bad shapes");
  if (ridge < 0.0) throw std::invalid_argument("ols_fit: ridge must be >= 0");
  const std::size_t d = X[0].size();
  if (d == 0) throw std::invalid_argument("ols_fit: empty feature rows");
  std::vector<std::vector<double>> xtx(d, std::vector<double>(d, 0.0));
  std::vector<double> xty(d, 0.0);
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i].size() != d) throw std::invalid_argument("ols_fit: ragged rows");
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = r; c < d; ++c) xtx[r][c] += X[i][r] * X[i][c];
      xty[r] += X[i][r] * y[i];
    }
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < r; ++c) xtx[r][c] = xtx[c][r];
    xtx[r][r] += ridge;
  }
  return detail::solve_linear(std::move(xtx), std::move(xty));
}

// Folklore cost model: a single through-origin coefficient mapping batch size
// to cost, blind to device features. Closed form theta = sum(n*cost)/sum(n^2).
inline double through_origin_fit(const std::vector<std::pair<double, double>>& n_cost) {
  if (n_cost.empty()) throw std::invalid_argument("through_origin_fit: no data");
  double num = 0.0, den = 0.0;
  for (const auto& [n, cost] : n_cost) {
    num += n * cost;
    den += n * n;
  }
  if (den <= 0.0) throw std::invalid_argument("through_origin_fit: degenerate sizes");
  return num / den;
}

}  // namespace fedsim
