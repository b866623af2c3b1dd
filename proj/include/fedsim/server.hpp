#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

#include "fedsim/aggregator.hpp"
#include "fedsim/controller.hpp"
#include "fedsim/features.hpp"

namespace fedsim {

// Protocol step 1: a worker announces itself with its device state and the
// label histogram of its local shard (never the raw examples).
struct TaskRequest {
  std::size_t worker_id = 0;
  std::string device_model;
  DeviceFeatures features;
  LabelCounts local_label_counts;
  std::size_t local_size = 0;
};

// Protocol step 2: the server answers with a model snapshot id and a batch
// size, the smaller of the predicted bound and the worker's local data.
struct TaskAssignment {
  std::uint64_t model_clock = 0;
  std::size_t minibatch_n = 0;
};

using RequestOutcome = std::variant<TaskAssignment, RejectReason>;

// How the server sizes a batch for a request: a predicted upper bound plus a
// tag naming the predictor that produced it (recorded in the profiler log).
struct SizeDecision {
  std::size_t bound = 0;
  const char* predictor = "fixed";
};
using Sizer = std::function<SizeDecision(const TaskRequest&)>;

// Keeps the most recent model versions so gradients can be evaluated against
// the exact snapshot a worker pulled.
class SnapshotRing {
 public:
  explicit SnapshotRing(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("SnapshotRing: capacity must be >= 1");
  }

  void push(const ModelParams& m) {
    ring_.push_back(m);
    if (ring_.size() > capacity_) ring_.pop_front();
  }

  std::uint64_t newest_clock() const { return ring_.empty() ? 0 : ring_.back().clock; }
  std::uint64_t oldest_clock() const { return ring_.empty() ? 0 : ring_.front().clock; }

  const ModelParams& at_clock(std::uint64_t clock) const {
    if (ring_.empty() || clock < oldest_clock() || clock > newest_clock())
      throw std::out_of_range("SnapshotRing: snapshot " + std::to_string(clock) + " evicted");
    return ring_[static_cast<std::size_t>(clock - oldest_clock())];
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return ring_.size(); }

 private:
  std::size_t capacity_;
  std::deque<ModelParams> ring_;  // contiguous clocks, oldest first
};

// The server: admission control at request time, clock-stamped model
// distribution, and delegation of results to the aggregation policy.
class Server {
 public:
  struct Config {
    AggregatorConfig aggregator;
    ControllerConfig controller;
    std::size_t snapshot_capacity = 64;
  };

  Server(Config cfg, ModelParams initial, Sizer sizer)
      : aggregator_(cfg.aggregator, std::move(initial)),
        controller_(cfg.controller),
        snapshots_(cfg.snapshot_capacity),
        sizer_(std::move(sizer)) {
    if (!sizer_) throw std::invalid_argument("Server: sizer must be callable");
    snapshots_.push(aggregator_.model());
  }

  RequestOutcome handle_request(const TaskRequest& req) {
    if (req.local_size == 0) throw std::invalid_argument("handle_request: empty local data");
    if (req.local_label_counts.size() != aggregator_.config().num_classes)
      throw std::invalid_argument("handle_request: malformed label counts");
    if (total_count(req.local_label_counts) != req.local_size)
      throw std::invalid_argument("handle_request: label counts do not sum to local_size");

    last_decision_ = sizer_(req);
    const std::size_t n = std::min(last_decision_.bound, req.local_size);
    const double sim = similarity(req.local_label_counts, aggregator_.global_label_counts());
    if (const auto reject = controller_.admit(static_cast<double>(n), sim)) return *reject;
    return TaskAssignment{clock(), n};
  }

  // Protocol step 5. Synchronous mode drops results computed against a
  // superseded model; everything else flows into the aggregation policy.
  std::optional<UpdateReport> handle_result(const GradientResult& result) {
    if (result.pulled_clock > clock())
      throw std::invalid_argument("handle_result: result from the future");
    if (aggregator_.config().policy == DampeningPolicy::Synchronous &&
        result.pulled_clock < clock()) {
      ++dropped_results_;
      return std::nullopt;
    }
    auto report = aggregator_.submit(result);
    if (report) snapshots_.push(aggregator_.model());
    return report;
  }

  // Cheap pre-check so callers can skip computing a gradient that
  // handle_result would drop anyway (Synchronous mode only).
  bool would_drop(std::uint64_t pulled_clock) const {
    return aggregator_.config().policy == DampeningPolicy::Synchronous &&
           pulled_clock < clock();
  }
  void drop_superseded() { ++dropped_results_; }

  std::uint64_t clock() const { return aggregator_.model().clock; }
  const ModelParams& model() const { return aggregator_.model(); }
  const ModelParams& snapshot_at(std::uint64_t c) const { return snapshots_.at_clock(c); }
  const SnapshotRing& snapshots() const { return snapshots_; }
  const Aggregator& aggregator() const { return aggregator_; }
  Aggregator& aggregator() { return aggregator_; }
  const Controller& controller() const { return controller_; }
  std::uint64_t dropped_results() const { return dropped_results_; }
  const SizeDecision& last_size_decision() const { return last_decision_; }

 private:
  Aggregator aggregator_;
  Controller controller_;
  SnapshotRing snapshots_;
  Sizer sizer_;
  SizeDecision last_decision_;
  std::uint64_t dropped_results_ = 0;
};

}  // namespace fedsim
