#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace fedsim {

// Per-class sample counts. Index = class id.
using LabelCounts = std::vector<std::uint64_t>;

inline std::uint64_t total_count(const LabelCounts& counts) {
  std::uint64_t sum = 0;
  for (std::uint64_t c : counts) sum += c;
  return sum;
}

// Counts -> probability vector. An all-zero histogram yields the empty
// distribution (all zeros), which similarity treats as "no information".
inline std::vector<double> normalize_counts(const LabelCounts& counts) {
  std::vector<double> p(counts.size(), 0.0);
  const std::uint64_t sum = total_count(counts);
  if (sum == 0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i)
    p[i] = static_cast<double>(counts[i]) / static_cast<double>(sum);
  return p;
}

// Bhattacharyya coefficient sum(sqrt(p_i * q_i)) in [0, 1]; 1 for identical
// distributions, 0 for disjoint support or when either side is empty.
inline double bhattacharyya(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("bhattacharyya: distribution sizes differ");
  double bc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0)
      throw std::invalid_argument("bhattacharyya: negative probability");
    bc += std::sqrt(p[i] * q[i]);
  }
  return bc;
}

// Class similarity of a result's mini-batch against the global distribution
// of previously consumed samples. Zero when nothing has been consumed yet,
// which callers interpret as "maximally novel".
inline double similarity(const LabelCounts& batch_counts, const LabelCounts& global_counts) {
  if (batch_counts.size() != global_counts.size())
    throw std::invalid_argument("similarity: label count sizes differ");
  if (total_count(batch_counts) == 0)
    throw std::invalid_argument("similarity: batch label counts are empty");
  if (total_count(global_counts) == 0) return 0.0;
  return bhattacharyya(normalize_counts(batch_counts), normalize_counts(global_counts));
}

}  // namespace fedsim
