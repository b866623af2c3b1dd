#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fedsim/label_distribution.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// In-memory labelled dataset, row-major features.
struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (dim == 0 || num_classes == 0) throw std::invalid_argument("Dataset: empty dimensions");
    if (features.size() != labels.size() * dim)
      throw std::invalid_argument("Dataset: feature/label size mismatch");
    for (int l : labels)
      if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
        throw std::invalid_argument("Dataset: label out of range");
  }

  Batch batch_of(const std::vector<std::size_t>& idx) const {
    Batch b;
    b.features.reserve(idx.size() * dim);
    b.labels.reserve(idx.size());
    for (std::size_t i : idx) {
      if (i >= size()) throw std::out_of_range("Dataset: row index out of range");
      b.features.insert(b.features.end(), features.begin() + i * dim,
                        features.begin() + (i + 1) * dim);
      b.labels.push_back(labels[i]);
    }
    return b;
  }

  Batch as_batch() const {
    return Batch{features, labels};
  }
};

// Gaussian-cluster classification data: one center per class, balanced labels.
struct SyntheticSpec {
  std::size_t dim = 64;
  std::size_t num_classes = 10;
  std::size_t train_size = 10000;
  std::size_t test_size = 2000;
  double center_scale = 30.0;  // expected center norm
  double noise_sigma = 4.0;    // per-coordinate sample spread
};

inline std::pair<Dataset, Dataset> make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.dim == 0 || spec.num_classes == 0 || spec.train_size == 0 || spec.test_size == 0)
    throw std::invalid_argument("make_synthetic: sizes must be positive");
  Rng center_rng = Rng::derive(seed, 0x5e11);
  const double per_coord = spec.center_scale / std::sqrt(static_cast<double>(spec.dim));
  std::vector<double> centers(spec.num_classes * spec.dim);
  for (double& c : centers) c = center_rng.normal(0.0, per_coord);

  Rng draw_rng = Rng::derive(seed, 0x5e12);
  auto fill = [&](Dataset& d, std::size_t count) {
    d.dim = spec.dim;
    d.num_classes = spec.num_classes;
    d.features.reserve(count * spec.dim);
    d.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t cls = i % spec.num_classes;
      for (std::size_t j = 0; j < spec.dim; ++j)
        d.features.push_back(centers[cls * spec.dim + j] + draw_rng.normal(0.0, spec.noise_sigma));
      d.labels.push_back(static_cast<int>(cls));
    }
  };
  Dataset train, test;
  fill(train, spec.train_size);
  fill(test, spec.test_size);
  return {std::move(train), std::move(test)};
}

// Uniform sample without replacement from a pool of dataset rows.
inline Batch sample_batch(const Dataset& data, const std::vector<std::size_t>& pool,
                          std::size_t n, Rng& rng) {
  if (n == 0 || n > pool.size()) throw std::invalid_argument("sample_batch: bad batch size");
  std::vector<std::size_t> scratch = pool;
  std::vector<std::size_t> chosen(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(scratch.size() - i);
    std::swap(scratch[i], scratch[j]);
    chosen[i] = scratch[i];
  }
  return data.batch_of(chosen);
}

inline LabelCounts batch_label_counts(const Batch& b, std::size_t num_classes) {
  LabelCounts counts(num_classes, 0);
  for (int l : b.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
      throw std::invalid_argument("batch_label_counts: label out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

}  // namespace fedsim
