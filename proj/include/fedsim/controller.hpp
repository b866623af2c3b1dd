#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/staleness.hpp"

namespace fedsim {

// Admission thresholds: either a fixed cutoff or the p-th percentile of the
// values seen on previously accepted requests.
struct ThresholdMode {
  enum class Kind { fixed, percentile };
  Kind kind = Kind::fixed;
  double value = 0.0;  // fixed cutoff, or percentile p in [0, 100)

  static ThresholdMode fixed(double v) { return {Kind::fixed, v}; }
  static ThresholdMode percentile(double p) { return {Kind::percentile, p}; }

  void validate(const std::string& what) const {
    if (kind == Kind::percentile && (value < 0.0 || value >= 100.0))
      throw std::invalid_argument(what + ": percentile must be in [0, 100)");
  }
};

struct ControllerConfig {
  ThresholdMode size_threshold = ThresholdMode::fixed(0.0);  // accept all sizes
  ThresholdMode sim_threshold = ThresholdMode::fixed(1.0);   // accept all similarities
  double t_slo = 3.0;   // seconds per task
  double e_slo = 1e9;   // battery % per task (effectively off by default)

  void validate() const {
    size_threshold.validate("size_threshold");
    sim_threshold.validate("sim_threshold");
    if (!(t_slo > 0.0) || !(e_slo > 0.0))
      throw std::invalid_argument("ControllerConfig: SLOs must be positive");
  }
};

enum class RejectReason { too_small, too_similar };

inline const char* to_string(RejectReason r) {
  return r == RejectReason::too_small ? "too_small" : "too_similar";
}

// Size/similarity gatekeeper. Batches below the size threshold waste an
// update; batches too similar to what the model has already digested add
// little. Percentile thresholds adapt against the history of accepted values.
class Controller {
 public:
  explicit Controller(ControllerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  // nullopt = admitted (and recorded); otherwise the rejection reason.
  std::optional<RejectReason> admit(double n, double sim) {
    if (const auto t = size_cutoff(); t && n < *t) return RejectReason::too_small;
    if (const auto t = sim_cutoff(); t && sim > *t) return RejectReason::too_similar;
    accepted_sizes_.push_back(n);
    accepted_sims_.push_back(sim);
    return std::nullopt;
  }

  // Current cutoffs (nullopt = no constraint yet, e.g. empty history).
  std::optional<double> size_cutoff() const {
    return cutoff(cfg_.size_threshold, accepted_sizes_);
  }
  std::optional<double> sim_cutoff() const { return cutoff(cfg_.sim_threshold, accepted_sims_); }

  const ControllerConfig& config() const { return cfg_; }
  std::size_t accepted_count() const { return accepted_sizes_.size(); }

 private:
  static std::optional<double> cutoff(const ThresholdMode& mode,
                                      const std::vector<double>& history) {
    if (mode.kind == ThresholdMode::Kind::fixed) return mode.value;
    if (history.empty()) return std::nullopt;  // nothing to rank against yet: accept
    return nearest_rank_percentile(history, std::max(mode.value, 1e-9));
  }

  ControllerConfig cfg_;
  std::vector<double> accepted_sizes_, accepted_sims_;
};

}  // namespace fedsim
