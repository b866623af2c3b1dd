#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fedsim {

// Epsilon-insensitive passive-aggressive regressor. Updates only when the
// absolute prediction error exceeds epsilon, and then moves theta just far
// enough that the post-update residual equals epsilon exactly.
struct PaModel {
  std::vector<double> theta;
  double epsilon = 0.1;
};

inline double pa_predict(const PaModel& m, const std::vector<double>& x) {
  if (x.size() != m.theta.size()) throw std::invalid_argument("pa_predict: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += m.theta[i] * x[i];
  return s;
}

// Returns the hinge loss that drove the update (0 means no change was made).
inline double pa_update(PaModel& m, const std::vector<double>& x, double target) {
  if (m.epsilon < 0.0) throw std::invalid_argument("pa_update: epsilon must be >= 0");
  const double pred = pa_predict(m, x);
  const double loss = std::abs(pred - target) - m.epsilon;
  if (loss <= 0.0) return 0.0;
  double norm2 = 0.0;
  for (double v : x) norm2 += v * v;
  if (norm2 <= 0.0) throw std::invalid_argument("pa_update: zero feature vector");
  const double step = loss / norm2;
  const double sgn = (target > pred) ? 1.0 : -1.0;
  for (std::size_t i = 0; i < x.size(); ++i) m.theta[i] += step * sgn * x[i];
  return loss;
}

}  // namespace fedsim
