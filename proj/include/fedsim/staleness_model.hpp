#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedsim/label_distribution.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// How much the simulation delays each result, in server-update ticks (the
// Gaussian modes) or in wall seconds resolved against the event loop (the
// latency mode).
struct StalenessModel {
  enum class Kind { none, gaussian, gaussian_longtail, exponential_latency };

  Kind kind = Kind::none;
  double mu = 0.0;
  double sigma = 0.0;
  std::vector<int> tail_labels;  // gaussian_longtail only
  double tail_value = 0.0;       // staleness forced onto tail-label results
  double min_s = 7.1;            // exponential_latency: shift
  double mean_s = 8.45;          // exponential_latency: mean (> min_s)

  void validate() const {
    if (sigma < 0.0) throw std::invalid_argument("StalenessModel: sigma must be >= 0");
    if (kind == Kind::gaussian_longtail) {
      if (tail_labels.empty())
        throw std::invalid_argument("StalenessModel: long tail needs tail_labels");
      if (tail_value < 0.0)
        throw std::invalid_argument("StalenessModel: tail_value must be >= 0");
    }
    if (kind == Kind::exponential_latency && !(mean_s > min_s))
      throw std::invalid_argument("StalenessModel: mean_s must exceed min_s");
  }
};

// Draw the staleness (in update ticks) for a result whose batch had the given
// label histogram. Latency-mode delays are wall-clock and sampled separately.
inline std::uint64_t next_staleness(const StalenessModel& m, const LabelCounts& result_labels,
                                    Rng& rng) {
  switch (m.kind) {
    case StalenessModel::Kind::none:
      return 0;
    case StalenessModel::Kind::gaussian:
      return static_cast<std::uint64_t>(std::llround(std::max(0.0, rng.normal(m.mu, m.sigma))));
    case StalenessModel::Kind::gaussian_longtail: {
      for (int l : m.tail_labels)
        if (l >= 0 && static_cast<std::size_t>(l) < result_labels.size() &&
            result_labels[static_cast<std::size_t>(l)] > 0)
          return static_cast<std::uint64_t>(std::llround(m.tail_value));
      return static_cast<std::uint64_t>(std::llround(std::max(0.0, rng.normal(m.mu, m.sigma))));
    }
    case StalenessModel::Kind::exponential_latency:
      throw std::logic_error("next_staleness: latency mode resolves against the event loop");
  }
  throw std::logic_error("next_staleness: unknown kind");
}

// Shifted-exponential round-trip latency in seconds.
inline double sample_latency(const StalenessModel& m, Rng& rng) {
  if (m.kind != StalenessModel::Kind::exponential_latency)
    throw std::logic_error("sample_latency: not a latency model");
  return m.min_s + rng.exponential(m.mean_s - m.min_s);
}

}  // namespace fedsim
