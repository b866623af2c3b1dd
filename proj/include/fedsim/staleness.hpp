#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace fedsim {

// Nearest-rank percentile: the smallest value such that at least pct percent
// of the data is <= it. Takes its input by value and sorts the copy.
inline double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw std::invalid_argument("nearest_rank_percentile: empty input");
  if (!(pct > 0.0) || pct > 100.0)
    throw std::invalid_argument("nearest_rank_percentile: pct must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(m)));
  rank = std::min(std::max<std::size_t>(rank, 1), m);
  return values[rank - 1];
}

// Sliding-window estimator of the staleness threshold: keeps the last
// `window` staleness values in a ring buffer and reports their s-th
// percentile once enough history exists. During the bootstrap phase (fewer
// than bootstrap_len observations) the threshold is not yet defined and
// callers fall back to inverse dampening.
class StalenessTracker {
 public:
  explicit StalenessTracker(std::size_t window = 1000, double s_percent = 99.7,
                            std::size_t bootstrap_len = 100)
      : capacity_(window), s_percent_(s_percent), bootstrap_len_(bootstrap_len) {
    if (capacity_ == 0) throw std::invalid_argument("StalenessTracker: window must be >= 1");
    if (!(s_percent_ > 0.0) || s_percent_ > 100.0)
      throw std::invalid_argument("StalenessTracker: s_percent must be in (0, 100]");
    ring_.reserve(capacity_);
  }

  void record(double tau) {
    if (!(tau >= 0.0) || !std::isfinite(tau))
      throw std::invalid_argument("StalenessTracker: staleness must be finite and >= 0");
    if (ring_.size() < capacity_) {
      ring_.push_back(tau);
    } else {
      ring_[head_] = tau;
      head_ = (head_ + 1) % capacity_;
    }
    ++observed_;
  }

  std::uint64_t observed_count() const { return observed_; }
  double s_percent() const { return s_percent_; }
  std::size_t bootstrap_len() const { return bootstrap_len_; }

  // Oldest-to-newest copy of the current window.
  std::vector<double> window_values() const {
    std::vector<double> out;
    out.reserve(ring_.size());
    for (std::size_t i = 0; i < ring_.size(); ++i)
      out.push_back(ring_[(head_ + i) % ring_.size()]);
    return out;
  }

  // nullopt while bootstrapping (or before any observation).
  std::optional<double> tau_threshold() const {
    if (observed_ < bootstrap_len_ || ring_.empty()) return std::nullopt;
    return nearest_rank_percentile(ring_, s_percent_);
  }

 private:
  std::vector<double> ring_;
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::uint64_t observed_ = 0;
  double s_percent_;
  std::size_t bootstrap_len_;
};

// Decay rate of the exponential dampening curve, chosen so that the curve
// meets inverse dampening at half the staleness threshold:
//   exp(-beta * t/2) = 1 / (t/2 + 1).
inline double beta_for(double tau_thres) {
  if (!(tau_thres > 0.0)) throw std::invalid_argument("beta_for: tau_thres must be > 0");
  const double half = tau_thres / 2.0;
  return std::log(half + 1.0) / half;
}

enum class DampeningPolicy { AdaSgdExponential, DynSgdInverse, Unit, Synchronous };

inline const char* to_string(DampeningPolicy p) {
  switch (p) {
    case DampeningPolicy::AdaSgdExponential: return "AdaSgdExponential";
    case DampeningPolicy::DynSgdInverse: return "DynSgdInverse";
    case DampeningPolicy::Unit: return "Unit";
    case DampeningPolicy::Synchronous: return "Synchronous";
  }
  return "?";
}

// Staleness dampening factor Lambda(tau) in (0, 1]. The exponential policy
// needs a defined threshold; while it is undefined (bootstrap) the inverse
// rule is used instead, which is the documented fallback rather than an error.
inline double dampening(DampeningPolicy policy, double tau,
                        std::optional<double> tau_thres = std::nullopt) {
  if (!(tau >= 0.0) || !std::isfinite(tau))
    throw std::invalid_argument("dampening: staleness must be finite and >= 0");
  switch (policy) {
    case DampeningPolicy::Unit:
    case DampeningPolicy::Synchronous:
      return 1.0;
    case DampeningPolicy::DynSgdInverse:
      return 1.0 / (tau + 1.0);
    case DampeningPolicy::AdaSgdExponential:
      if (!tau_thres.has_value() || !(*tau_thres > 0.0)) return 1.0 / (tau + 1.0);
      return std::exp(-beta_for(*tau_thres) * tau);
  }
  throw std::logic_error("dampening: unknown policy");
}

// Final gradient weight min(1, lambda / sim). Zero similarity means the batch
// looks nothing like anything consumed so far; the boost then saturates the cap.
inline double combined_weight(double lambda, double sim) {
  if (!(lambda > 0.0)) throw std::invalid_argument("combined_weight: lambda must be > 0");
  if (sim < 0.0 || sim > 1.0 + 1e-12)
    throw std::invalid_argument("combined_weight: sim must be in [0, 1]");
  if (sim == 0.0) return 1.0;
  return std::min(1.0, lambda / sim);
}

}  // namespace fedsim
