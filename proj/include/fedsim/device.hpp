#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "fedsim/features.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Invented thermal plumbing: the device heats linearly with processed samples,
// cools exponentially toward ambient while idle, and its per-sample cost
// inflates linearly once the temperature exceeds the nominal point.
struct ThermalParams {
  double heat_per_sample = 0.02;   // degrees per processed sample
  double cool_rate = 0.1;          // 1/s exponential decay toward ambient
  double ambient = 25.0;           // idle resting temperature
  double nominal = 35.0;           // throttling starts above this
  double alpha_temp_slope = 0.002; // fractional cost inflation per degree over nominal
};

// Ground truth the simulator knows but the server never sees directly.
struct DeviceProfile {
  std::string device_model;
  double true_alpha_time = 0.1;    // seconds per sample at nominal conditions
  double true_alpha_energy = 1e-3; // battery % per sample at nominal conditions
  double noise_cv = 0.05;          // run-to-run multiplicative lognormal noise
  ThermalParams thermal;
  DeviceFeatures feature_base;     // temperature field is overwritten per task

  void validate() const {
    if (!(true_alpha_time > 0.0) || !(true_alpha_energy > 0.0))
      throw std::invalid_argument("DeviceProfile: true coefficients must be positive");
    if (noise_cv < 0.0) throw std::invalid_argument("DeviceProfile: noise_cv must be >= 0");
    if (thermal.heat_per_sample < 0.0 || thermal.cool_rate < 0.0 ||
        thermal.alpha_temp_slope < 0.0)
      throw std::invalid_argument("DeviceProfile: thermal parameters must be >= 0");
  }
};

struct DeviceState {
  double temperature = 0.0;
  double last_event_s = 0.0;

  static DeviceState resting(const DeviceProfile& p) {
    return DeviceState{p.thermal.ambient, 0.0};
  }
};

struct TaskOutcome {
  double t_comp = 0.0;        // wall seconds
  double energy = 0.0;        // battery % consumed
  DeviceFeatures features;    // snapshot the device would report (post warm-up)
};

// What the device would report right now, without running anything: the base
// feature set with the temperature cooled from the last event to `now_s`.
inline DeviceFeatures features_now(const DeviceProfile& p, const DeviceState& s, double now_s) {
  DeviceFeatures f = p.feature_base;
  const double idle = std::max(0.0, now_s - s.last_event_s);
  f.temperature = p.thermal.ambient +
                  (s.temperature - p.thermal.ambient) * std::exp(-p.thermal.cool_rate * idle);
  return f;
}

// Advance the device's thermal state to `now_s`, run an n-sample task, and
// return its measured cost. At nominal temperature and zero noise this is the
// exact linear law t = alpha * n.
inline TaskOutcome simulate_task(const DeviceProfile& p, DeviceState& s, double now_s,
                                 std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("simulate_task: n must be >= 1");
  if (now_s < s.last_event_s) throw std::invalid_argument("simulate_task: time went backwards");

  const double idle = now_s - s.last_event_s;
  const ThermalParams& th = p.thermal;
  s.temperature = th.ambient + (s.temperature - th.ambient) * std::exp(-th.cool_rate * idle);
  s.temperature += th.heat_per_sample * static_cast<double>(n);

  const double inflation = 1.0 + th.alpha_temp_slope * std::max(0.0, s.temperature - th.nominal);
  TaskOutcome out;
  out.t_comp = p.true_alpha_time * inflation * static_cast<double>(n) *
               rng.lognormal_unit_mean(p.noise_cv);
  out.energy = p.true_alpha_energy * inflation * static_cast<double>(n) *
               rng.lognormal_unit_mean(p.noise_cv);
  out.features = p.feature_base;
  out.features.temperature = s.temperature;

  s.last_event_s = now_s + out.t_comp;  // cooling resumes once the task finishes
  return out;
}

}  // namespace fedsim
