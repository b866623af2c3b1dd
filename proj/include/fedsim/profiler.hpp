#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/features.hpp"
#include "fedsim/ols.hpp"
#include "fedsim/pa.hpp"

namespace fedsim {

struct ProfilerConfig {
  double epsilon_time = 0.1;     // PA dead zone for per-sample seconds
  double epsilon_energy = 6e-5;  // PA dead zone for per-sample battery drain
  double ridge = 1e-8;
  std::size_t retrain_every = 50;  // online observations between cold refits (0 = never)
};

// One executed task: the features the device reported when it asked for work,
// the batch size it was given, and the measured cost of running it.
struct ObservationRow {
  std::string device_model;
  DeviceFeatures features;
  double n = 0.0;
  double t = 0.0;  // wall seconds
  double e = 0.0;  // battery % consumed
};

namespace detail {

inline double per_sample(double cost, double n) { return cost / n; }

inline std::size_t bound_from_alphas(double alpha_t, double alpha_e, double t_slo, double e_slo) {
  if (!(t_slo > 0.0) || !(e_slo > 0.0))
    throw std::invalid_argument("predict_bound: SLOs must be positive");
  double bound = std::min(t_slo / alpha_t, e_slo / alpha_e);
  bound = std::min(bound, 9e15);  // keep the floor representable
  return static_cast<std::size_t>(std::max(1.0, std::floor(bound)));
}

inline void check_observation(double n, double t, double e) {
  if (!(n >= 1.0) || !std::isfinite(n)) throw std::invalid_argument("observe: n must be >= 1");
  if (!(t >= 0.0) || !std::isfinite(t) || !(e >= 0.0) || !std::isfinite(e))
    throw std::invalid_argument("observe: costs must be finite and non-negative");
}

}  // namespace detail

// SLO-driven workload sizer. A cold linear model (fit offline on a training
// fleet, refit periodically over the full log) predicts per-sample cost from
// device features; a per-device-model passive-aggressive layer personalizes
// that prediction online. Batch size is the largest n whose predicted time
// and energy both fit inside the SLOs.
class SloProfiler {
 public:
  explicit SloProfiler(ProfilerConfig cfg = {}) : cfg_(std::move(cfg)) {}

  void pretrain(const std::vector<ObservationRow>& offline) {
    if (offline.empty()) throw std::invalid_argument("pretrain: empty offline log");
    log_ = offline;
    for (const auto& row : log_) detail::check_observation(row.n, row.t, row.e);
    std::vector<std::vector<double>> xt, xe;
    xt.reserve(log_.size());
    xe.reserve(log_.size());
    for (const auto& row : log_) {
      xt.push_back(feature_vector(row.features, PredKind::time));
      xe.push_back(feature_vector(row.features, PredKind::energy));
    }
    scaler_time_.fit(xt);
    scaler_energy_.fit(xe);
    refit_cold();
    pretrained_ = true;
  }

  bool pretrained() const { return pretrained_; }

  // Per-sample cost estimate, clamped away from zero so the SLO division is
  // always well defined.
  double predict_alpha(PredKind kind, const std::string& device_model,
                       const DeviceFeatures& f) const {
    require_pretrained();
    const auto x = standardized(kind, f);
    const auto& personal = (kind == PredKind::time) ? pa_time_ : pa_energy_;
    double alpha;
    if (auto it = personal.find(device_model); it != personal.end()) {
      alpha = pa_predict(it->second, x);
    } else {
      const auto& theta = (kind == PredKind::time) ? cold_time_ : cold_energy_;
      alpha = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) alpha += theta[i] * x[i];
    }
    return std::max(alpha, 1e-9);
  }

  std::size_t predict_bound(const std::string& device_model, const DeviceFeatures& f,
                            double t_slo, double e_slo) const {
    return detail::bound_from_alphas(predict_alpha(PredKind::time, device_model, f),
                                     predict_alpha(PredKind::energy, device_model, f), t_slo,
                                     e_slo);
  }

  void observe(const std::string& device_model, const DeviceFeatures& f, double n, double t,
               double e) {
    require_pretrained();
    detail::check_observation(n, t, e);
    update_pa(PredKind::time, device_model, f, detail::per_sample(t, n));
    update_pa(PredKind::energy, device_model, f, detail::per_sample(e, n));
    log_.push_back({device_model, f, n, t, e});
    ++online_observed_;
    if (cfg_.retrain_every > 0 && online_observed_ % cfg_.retrain_every == 0) refit_cold();
  }

  const std::vector<double>& cold_theta(PredKind kind) const {
    return (kind == PredKind::time) ? cold_time_ : cold_energy_;
  }
  bool has_personal(const std::string& device_model) const {
    return pa_time_.count(device_model) > 0;
  }
  std::size_t log_size() const { return log_.size(); }
  std::size_t online_observed() const { return online_observed_; }
  const ProfilerConfig& config() const { return cfg_; }

 private:
  void require_pretrained() const {
    if (!pretrained_) throw std::logic_error("SloProfiler: pretrain before use");
  }

  std::vector<double> standardized(PredKind kind, const DeviceFeatures& f) const {
    const auto& scaler = (kind == PredKind::time) ? scaler_time_ : scaler_energy_;
    return scaler.transform(feature_vector(f, kind));
  }

  void refit_cold() {
    std::vector<std::vector<double>> xt, xe;
    std::vector<double> yt, ye;
    xt.reserve(log_.size());
    xe.reserve(log_.size());
    for (const auto& row : log_) {
      xt.push_back(scaler_time_.transform(feature_vector(row.features, PredKind::time)));
      xe.push_back(scaler_energy_.transform(feature_vector(row.features, PredKind::energy)));
      yt.push_back(detail::per_sample(row.t, row.n));
      ye.push_back(detail::per_sample(row.e, row.n));
    }
    cold_time_ = ols_fit(xt, yt, cfg_.ridge);
    cold_energy_ = ols_fit(xe, ye, cfg_.ridge);
  }

  void update_pa(PredKind kind, const std::string& device_model, const DeviceFeatures& f,
                 double alpha) {
    auto& personal = (kind == PredKind::time) ? pa_time_ : pa_energy_;
    auto it = personal.find(device_model);
    if (it == personal.end()) {
      PaModel seeded{(kind == PredKind::time) ? cold_time_ : cold_energy_,
                     (kind == PredKind::time) ? cfg_.epsilon_time : cfg_.epsilon_energy};
      it = personal.emplace(device_model, std::move(seeded)).first;
    }
    pa_update(it->second, standardized(kind, f), alpha);
  }

  ProfilerConfig cfg_;
  FeatureScaler scaler_time_, scaler_energy_;
  std::vector<double> cold_time_, cold_energy_;
  std::map<std::string, PaModel> pa_time_, pa_energy_;
  std::vector<ObservationRow> log_;
  std::size_t online_observed_ = 0;
  bool pretrained_ = false;
};

// Feature-blind baseline: one through-origin per-sample coefficient per cost
// kind, shared across every device and refit from running sums.
class FolkloreProfiler {
 public:
  void pretrain(const std::vector<ObservationRow>& offline) {
    if (offline.empty()) throw std::invalid_argument("pretrain: empty offline log");
    for (const auto& row : offline) observe(row.n, row.t, row.e);
  }

  void observe(double n, double t, double e) {
    detail::check_observation(n, t, e);
    num_t_ += n * t;
    num_e_ += n * e;
    den_ += n * n;
  }

  double alpha(PredKind kind) const {
    if (den_ <= 0.0) throw std::logic_error("FolkloreProfiler: no observations");
    return std::max(((kind == PredKind::time) ? num_t_ : num_e_) / den_, 1e-9);
  }

  std::size_t predict_bound(double t_slo, double e_slo) const {
    return detail::bound_from_alphas(alpha(PredKind::time), alpha(PredKind::energy), t_slo,
                                     e_slo);
  }

 private:
  double num_t_ = 0.0, num_e_ = 0.0, den_ = 0.0;
};

}  // namespace fedsim
