#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Non-stationary classification stream: Gaussian clusters whose class centers
// are redrawn every drift_period chunks. Within a period the distribution is
// stationary; across a period boundary it genuinely moves. drift_period = 0
// means no drift (a fixed distribution).
class DriftingStream {
 public:
  struct Config {
    std::size_t dim = 16;
    std::size_t num_classes = 5;
    std::size_t samples_per_chunk = 64;
    std::size_t drift_period = 24;  // chunks per stationary epoch; 0 = never drift
    double center_scale = 6.0;      // expected center norm
    double noise_sigma = 1.0;

    void validate() const {
      if (dim == 0 || num_classes == 0 || samples_per_chunk == 0)
        throw std::invalid_argument("DriftingStream: sizes must be positive");
      if (!(center_scale > 0.0) || !(noise_sigma >= 0.0))
        throw std::invalid_argument("DriftingStream: bad scale parameters");
    }
  };

  DriftingStream(Config cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) { cfg_.validate(); }

  const Config& config() const { return cfg_; }
  std::size_t chunk_index() const { return next_chunk_; }

  std::size_t epoch_of(std::size_t chunk) const {
    return cfg_.drift_period == 0 ? 0 : chunk / cfg_.drift_period;
  }

  // Center of one class during one epoch; a pure function of (seed, class, epoch).
  std::vector<double> center(std::size_t cls, std::size_t epoch) const {
    if (cls >= cfg_.num_classes) throw std::invalid_argument("DriftingStream: bad class");
    Rng rng = Rng::derive(seed_, 0xd21f0000 + cls, epoch);
    const double per_coord = cfg_.center_scale / std::sqrt(static_cast<double>(cfg_.dim));
    std::vector<double> c(cfg_.dim);
    for (double& v : c) v = rng.normal(0.0, per_coord);
    return c;
  }

  Batch chunk_at(std::size_t chunk) const {
    const std::size_t epoch = epoch_of(chunk);
    std::vector<std::vector<double>> centers;
    centers.reserve(cfg_.num_classes);
    for (std::size_t c = 0; c < cfg_.num_classes; ++c) centers.push_back(center(c, epoch));

    Rng rng = Rng::derive(seed_, 0xc410, chunk);
    Batch b;
    b.features.reserve(cfg_.samples_per_chunk * cfg_.dim);
    b.labels.reserve(cfg_.samples_per_chunk);
    for (std::size_t i = 0; i < cfg_.samples_per_chunk; ++i) {
      const std::size_t cls = i % cfg_.num_classes;
      for (std::size_t j = 0; j < cfg_.dim; ++j)
        b.features.push_back(centers[cls][j] + rng.normal(0.0, cfg_.noise_sigma));
      b.labels.push_back(static_cast<int>(cls));
    }
    return b;
  }

  Batch next_chunk() { return chunk_at(next_chunk_++); }

 private:
  Config cfg_;
  std::uint64_t seed_;
  std::size_t next_chunk_ = 0;
};

}  // namespace fedsim
