#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// One user's slice of the training data, as row indices into the dataset.
struct UserShard {
  std::size_t user_id = 0;
  std::vector<std::size_t> indices;
};

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const std::size_t j = i + rng.below(v.size() - i);
    std::swap(v[i], v[j]);
  }
}

}  // namespace detail

// Pathological heterogeneity: sort by label, cut into 2*num_users contiguous
// shards (the last shard absorbs any remainder), deal a seeded permutation of
// shards two per user. Each user ends up with a handful of labels only.
inline std::vector<UserShard> partition_noniid(const Dataset& data, std::size_t num_users,
                                               std::uint64_t seed) {
  if (num_users == 0) throw std::invalid_argument("partition_noniid: num_users must be >= 1");
  const std::size_t n = data.size();
  const std::size_t num_shards = 2 * num_users;
  const std::size_t shard_size = n / num_shards;
  if (shard_size == 0) throw std::invalid_argument("partition_noniid: more shards than examples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data.labels[a] < data.labels[b]; });

  std::vector<std::size_t> shard_ids(num_shards);
  std::iota(shard_ids.begin(), shard_ids.end(), 0);
  Rng rng = Rng::derive(seed, 0x9a27);
  detail::shuffle_indices(shard_ids, rng);

  auto shard_range = [&](std::size_t s) {
    const std::size_t lo = s * shard_size;
    const std::size_t hi = (s + 1 == num_shards) ? n : (s + 1) * shard_size;
    return std::pair<std::size_t, std::size_t>{lo, hi};
  };

  std::vector<UserShard> users(num_users);
  for (std::size_t u = 0; u < num_users; ++u) {
    users[u].user_id = u;
    // Concatenate the user's two shards in label order (shards are contiguous
    // ranges of the sorted data, so this keeps each user's list label-sorted).
    std::size_t a = shard_ids[2 * u], b = shard_ids[2 * u + 1];
    if (b < a) std::swap(a, b);
    for (std::size_t s : {a, b}) {
      const auto [lo, hi] = shard_range(s);
      users[u].indices.insert(users[u].indices.end(), order.begin() + lo, order.begin() + hi);
    }
  }
  return users;
}

// Homogeneous split: seeded uniform shuffle, equal contiguous slices (the last
// user absorbs any remainder).
inline std::vector<UserShard> partition_iid(const Dataset& data, std::size_t num_users,
                                            std::uint64_t seed) {
  if (num_users == 0) throw std::invalid_argument("partition_iid: num_users must be >= 1");
  const std::size_t n = data.size();
  if (num_users > n) throw std::invalid_argument("partition_iid: more users than examples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, 0x9a28);
  detail::shuffle_indices(order, rng);

  const std::size_t per_user = n / num_users;
  std::vector<UserShard> users(num_users);
  for (std::size_t u = 0; u < num_users; ++u) {
    users[u].user_id = u;
    const std::size_t lo = u * per_user;
    const std::size_t hi = (u + 1 == num_users) ? n : (u + 1) * per_user;
    users[u].indices.assign(order.begin() + lo, order.begin() + hi);
  }
  return users;
}

}  // namespace fedsim
