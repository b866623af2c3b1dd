#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fedsim {

enum class PredKind { time, energy };

// Device snapshot sent with every task request. Units are irrelevant to the
// math (features are standardized before use); energy_per_cpu_time is only
// consulted by the energy predictor.
struct DeviceFeatures {
  double avail_mem = 0.0;
  double total_mem = 0.0;
  double temperature = 0.0;
  double cpu_freq_sum = 0.0;
  double energy_per_cpu_time = 0.0;
};

// Flat regressor input; a trailing constant 1 provides the intercept.
inline std::vector<double> feature_vector(const DeviceFeatures& f, PredKind kind) {
  if (kind == PredKind::time)
    return {f.avail_mem, f.total_mem, f.temperature, f.cpu_freq_sum, 1.0};
  return {f.avail_mem, f.total_mem, f.temperature, f.cpu_freq_sum, f.energy_per_cpu_time, 1.0};
}

// Column-wise standardization fit once on the offline training log and frozen
// afterwards. Near-constant columns (including the intercept) pass through
// unchanged so the bias survives scaling.
class FeatureScaler {
 public:
  void fit(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("FeatureScaler: no rows");
    const std::size_t d = rows[0].size();
    mean_.assign(d, 0.0);
    scale_.assign(d, 1.0);
    for (const auto& r : rows) {
      if (r.size() != d) throw std::invalid_argument("FeatureScaler: ragged rows");
      for (std::size_t j = 0; j < d; ++j) mean_[j] += r[j];
    }
    for (double& m : mean_) m /= static_cast<double>(rows.size());
    std::vector<double> var(d, 0.0);
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) {
        const double dv = r[j] - mean_[j];
        var[j] += dv * dv;
      }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(rows.size()));
      if (sd < 1e-12) {
        mean_[j] = 0.0;  // pass constant columns through untouched
        scale_[j] = 1.0;
      } else {
        scale_[j] = sd;
      }
    }
    fitted_ = true;
  }

  bool fitted() const { return fitted_; }

  std::vector<double> transform(const std::vector<double>& x) const {
    if (!fitted_) throw std::logic_error("FeatureScaler: transform before fit");
    if (x.size() != mean_.size()) throw std::invalid_argument("FeatureScaler: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean_[j]) / scale_[j];
    return out;
  }

 private:
  std::vector<double> mean_, scale_;
  bool fitted_ = false;
};

}  // namespace fedsim
