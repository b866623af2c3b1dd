#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/device.hpp"
#include "fedsim/fleet.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/profiler.hpp"
#include "fedsim/server.hpp"
#include "fedsim/staleness_model.hpp"
#include "fedsim/stream.hpp"

namespace fedsim {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct SizingMode {
  enum class Kind { fixed, gaussian, profiler };
  Kind kind = Kind::fixed;
  std::size_t fixed_n = 100;
  double mu = 100.0, sigma = 33.0;  // gaussian mode

  void validate() const {
    if (kind == Kind::fixed && fixed_n == 0)
      throw std::invalid_argument("SizingMode: fixed_n must be >= 1");
    if (kind == Kind::gaussian && (!(mu > 0.0) || sigma < 0.0))
      throw std::invalid_argument("SizingMode: gaussian needs mu > 0 and sigma >= 0");
  }
};

struct WorkerGroup {
  std::size_t count = 0;
  SizingMode minibatch;
};

enum class PartitionKind { noniid, iid };

struct ProfilerSetup {
  bool enabled = false;
  bool round_robin_baseline = false;  // alternate the feature-blind sizer in per device
  ProfilerConfig config;
  std::string pretrain_fleet = "pretrain5";
  std::uint64_t pretrain_seed = 1;
};

struct PerturbConfig {
  bool enabled = false;
  double clip_norm = 1.0;
  double sigma = 0.0;
};

struct OnlineRunConfig {
  ModelSpec model;
  AggregatorConfig aggregator;  // num_classes must match the dataset
  ControllerConfig controller;
  StalenessModel staleness;
  PartitionKind partition = PartitionKind::noniid;
  std::vector<WorkerGroup> groups;  // total worker count = sum of group counts
  std::string fleet = "default10";
  double arrival_mean_gap_s = 1.0;
  std::uint64_t max_updates = 1000;           // stop once the clock reaches this (0 = no cap)
  std::uint64_t max_requests_per_worker = 0;  // 0 = unlimited
  std::size_t eval_every = 25;                // updates between evaluations (0 = initial only)
  bool record_recall = false;
  ProfilerSetup profiler;
  PerturbConfig perturb;
  std::size_t snapshot_capacity = 64;
  bool retry_rejected = true;

  std::size_t num_workers() const {
    std::size_t total = 0;
    for (const auto& g : groups) total += g.count;
    return total;
  }

  void validate() const {
    model.validate();
    controller.validate();
    staleness.validate();
    for (const auto& g : groups) g.minibatch.validate();
    if (model.num_classes != aggregator.num_classes)
      throw std::invalid_argument("OnlineRunConfig: model/aggregator class count mismatch");
    if (!(arrival_mean_gap_s > 0.0))
      throw std::invalid_argument("OnlineRunConfig: arrival_mean_gap_s must be > 0");
    if (snapshot_capacity == 0)
      throw std::invalid_argument("OnlineRunConfig: snapshot_capacity must be >= 1");
    if (max_updates == 0 && max_requests_per_worker == 0)
      throw std::invalid_argument("OnlineRunConfig: no stopping condition configured");
    const bool wants_profiler = std::any_of(groups.begin(), groups.end(), [](const auto& g) {
      return g.minibatch.kind == SizingMode::Kind::profiler;
    });
    if (wants_profiler && !profiler.enabled)
      throw std::invalid_argument("OnlineRunConfig: profiler sizing needs profiler.enabled");
    if (aggregator.policy == DampeningPolicy::Synchronous && aggregator.K > num_workers())
      throw std::invalid_argument(
          "OnlineRunConfig: synchronous rounds need at least K workers");
  }
};

// ---------------------------------------------------------------------------
// Run output
// ---------------------------------------------------------------------------

struct EvalPoint {
  std::uint64_t update_index = 0;
  double sim_time = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> recall;  // empty unless record_recall
};

struct UpdateRow {
  std::uint64_t update_index = 0;  // clock after the update that consumed this result
  double sim_time = 0.0;
  int worker_id = 0;
  double tau = 0.0;
  double lambda = 1.0;
  double sim = 0.0;
  double weight = 1.0;
  std::size_t batch_size = 0;
  std::optional<double> tau_thres;
  std::uint64_t dropped_results = 0;  // cumulative at the time of the row
};

struct ProfilerRow {
  std::size_t request_index = 0;  // 1-based, per device, executed tasks only
  std::string device_model;
  std::string predictor;
  std::size_t predicted_n = 0;
  double t_slo = 0.0, e_slo = 0.0;
  double actual_t = 0.0, actual_e = 0.0;
  double deviation_t = 0.0, deviation_e = 0.0;  // actual - SLO, signed
};

struct RunResult {
  std::vector<EvalPoint> evals;
  std::vector<UpdateRow> updates;
  std::vector<ProfilerRow> profiler_rows;
  std::uint64_t dropped_results = 0;
  std::uint64_t rejected_too_small = 0;
  std::uint64_t rejected_too_similar = 0;
  std::uint64_t gradients_computed = 0;
  // Independent conservation audit: label counts folded from a FIFO mirror of
  // submitted results, advanced only when the server reports consumption.
  LabelCounts audit_label_totals;
  std::uint64_t audit_consumed = 0;
  LabelCounts final_global_counts;
  std::uint64_t final_clock = 0;
  ModelParams final_model;
};

// ---------------------------------------------------------------------------
// Online event-driven run
// ---------------------------------------------------------------------------

namespace detail {

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;  // insertion order breaks time ties deterministically
  enum class Kind { arrival, result } kind = Kind::arrival;
  std::size_t worker = 0;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

struct PendingTask {
  Batch batch;
  LabelCounts counts;
  std::size_t n = 0;
  std::uint64_t assignment_clock = 0;
  std::optional<ModelParams> pulled_model;  // kept when the pull happens at assignment
  DeviceFeatures features;
  double t_comp = 0.0, energy = 0.0;
  std::string predictor;
};

struct WorkerSim {
  std::size_t id = 0;
  const DeviceProfile* profile = nullptr;
  DeviceState dev;
  std::vector<std::size_t> shard;
  LabelCounts shard_counts;
  SizingMode sizing;
  Rng arrival_rng{0}, data_rng{0}, noise_rng{0}, size_rng{0}, perturb_rng{0};
  std::uint64_t requests_issued = 0;
  std::size_t tasks_executed = 0;
  std::size_t sizer_calls = 0;
  bool retired = false;
  std::optional<PendingTask> pending;
};

}  // namespace detail

inline EvalPoint evaluate_model(const ModelParams& m, const Dataset& test,
                                std::uint64_t update_index, double sim_time,
                                bool record_recall) {
  EvalPoint p;
  p.update_index = update_index;
  p.sim_time = sim_time;
  p.test_accuracy = accuracy(m, test.features, test.labels);
  if (record_recall) p.recall = per_class_recall(m, test.features, test.labels);
  return p;
}

// Drive the full protocol loop over a simulated fleet: request -> size ->
// admit -> compute -> delayed result -> aggregate, with evaluation on a
// held-out set every eval_every updates. Deterministic in (config, seed).
inline RunResult run_online(const OnlineRunConfig& cfg, const Dataset& train,
                            const Dataset& test, std::uint64_t seed) {
  cfg.validate();
  train.validate();
  test.validate();
  if (train.num_classes != cfg.model.num_classes)
    throw std::invalid_argument("run_online: dataset classes do not match the model");

  const std::size_t num_workers = cfg.num_workers();
  const Fleet fleet = fleet_by_name(cfg.fleet);

  // --- profilers -----------------------------------------------------------
  SloProfiler iprof(cfg.profiler.config);
  FolkloreProfiler maui;
  if (cfg.profiler.enabled) {
    const auto offline = make_pretrain_log(fleet_by_name(cfg.profiler.pretrain_fleet),
                                           cfg.controller.t_slo, cfg.controller.e_slo,
                                           cfg.profiler.pretrain_seed);
    iprof.pretrain(offline);
    maui.pretrain(offline);
  }

  // --- workers --------------------------------------------------------------
  std::vector<detail::WorkerSim> workers(num_workers);
  if (num_workers > 0) {
    const auto shards = (cfg.partition == PartitionKind::noniid)
                            ? partition_noniid(train, num_workers, seed)
                            : partition_iid(train, num_workers, seed);
    std::size_t w = 0;
    for (const auto& group : cfg.groups) {
      for (std::size_t i = 0; i < group.count; ++i, ++w) {
        auto& ws = workers[w];
        ws.id = w;
        ws.profile = &fleet.profile_for(w);
        ws.dev = DeviceState::resting(*ws.profile);
        ws.shard = shards[w].indices;
        ws.shard_counts = batch_label_counts(train.batch_of(ws.shard), train.num_classes);
        ws.sizing = group.minibatch;
        ws.arrival_rng = Rng::derive(seed, 0xa221, w);
        ws.data_rng = Rng::derive(seed, 0xba7c, w);
        ws.noise_rng = Rng::derive(seed, 0xd301, w);
        ws.size_rng = Rng::derive(seed, 0x512e, w);
        ws.perturb_rng = Rng::derive(seed, 0xd900, w);
      }
    }
  }

  // --- server ----------------------------------------------------------------
  auto sizer = [&](const TaskRequest& req) -> SizeDecision {
    auto& ws = workers.at(req.worker_id);
    ++ws.sizer_calls;
    switch (ws.sizing.kind) {
      case SizingMode::Kind::fixed:
        return {ws.sizing.fixed_n, "fixed"};
      case SizingMode::Kind::gaussian: {
        const double draw = ws.size_rng.normal(ws.sizing.mu, ws.sizing.sigma);
        const auto n = static_cast<std::size_t>(std::llround(std::max(1.0, draw)));
        return {std::max<std::size_t>(1, n), "gaussian"};
      }
      case SizingMode::Kind::profiler: {
        const bool use_baseline =
            cfg.profiler.round_robin_baseline && (ws.sizer_calls % 2 == 0);
        if (use_baseline)
          return {maui.predict_bound(cfg.controller.t_slo, cfg.controller.e_slo), "maui"};
        return {iprof.predict_bound(req.device_model, req.features, cfg.controller.t_slo,
                                    cfg.controller.e_slo),
                "iprof"};
      }
    }
    throw std::logic_error("run_online: unknown sizing mode");
  };

  Server server(Server::Config{cfg.aggregator, cfg.controller, cfg.snapshot_capacity},
                init_params(cfg.model, seed), sizer);

  const bool pull_at_assignment =
      cfg.aggregator.policy == DampeningPolicy::Synchronous ||
      cfg.staleness.kind == StalenessModel::Kind::exponential_latency;
  const bool controlled_staleness =
      cfg.staleness.kind == StalenessModel::Kind::gaussian ||
      cfg.staleness.kind == StalenessModel::Kind::gaussian_longtail;
  // Synchronous mode runs lockstep rounds: at most K round slots, each held
  // from assignment until the round's update applies, so every consumed
  // gradient is pulled at the current clock and carries tau = 0.
  const bool lockstep = cfg.aggregator.policy == DampeningPolicy::Synchronous;
  std::size_t in_flight = 0;
  std::size_t round_buffered = 0;

  Rng stale_rng = Rng::derive(seed, 0x57a1e);
  Rng latency_rng = Rng::derive(seed, 0x1a7e);

  // --- event loop -------------------------------------------------------------
  RunResult out;
  out.evals.push_back(evaluate_model(server.model(), test, 0, 0.0, cfg.record_recall));
  std::deque<LabelCounts> audit_fifo;
  out.audit_label_totals.assign(train.num_classes, 0);

  std::priority_queue<detail::Event, std::vector<detail::Event>, detail::EventAfter> heap;
  std::uint64_t seq = 0;
  auto push_event = [&](double time, detail::Event::Kind kind, std::size_t w) {
    heap.push(detail::Event{time, seq++, kind, w});
  };
  for (auto& ws : workers)
    push_event(ws.arrival_rng.exponential(cfg.arrival_mean_gap_s), detail::Event::Kind::arrival,
               ws.id);

  auto schedule_next_arrival = [&](detail::WorkerSim& ws, double now) {
    if (ws.retired) return;
    if (cfg.max_requests_per_worker > 0 && ws.requests_issued >= cfg.max_requests_per_worker) {
      ws.retired = true;
      return;
    }
    push_event(now + ws.arrival_rng.exponential(cfg.arrival_mean_gap_s),
               detail::Event::Kind::arrival, ws.id);
  };

  bool stop = false;
  while (!heap.empty() && !stop) {
    const detail::Event ev = heap.top();
    heap.pop();
    auto& ws = workers[ev.worker];

    if (ev.kind == detail::Event::Kind::arrival) {
      if (ws.retired) continue;
      if (cfg.max_requests_per_worker > 0 &&
          ws.requests_issued >= cfg.max_requests_per_worker) {
        ws.retired = true;
        continue;
      }
      if (lockstep && in_flight + round_buffered >= cfg.aggregator.K) {
        // Round slots are taken; come back later without spending a request.
        schedule_next_arrival(ws, ev.time);
        continue;
      }
      ++ws.requests_issued;
      TaskRequest req;
      req.worker_id = ws.id;
      req.device_model = ws.profile->device_model;
      req.features = features_now(*ws.profile, ws.dev, ev.time);
      req.local_label_counts = ws.shard_counts;
      req.local_size = ws.shard.size();

      const RequestOutcome outcome = server.handle_request(req);
      if (const auto* reject = std::get_if<RejectReason>(&outcome)) {
        (*reject == RejectReason::too_small) ? ++out.rejected_too_small
                                             : ++out.rejected_too_similar;
        if (cfg.retry_rejected)
          schedule_next_arrival(ws, ev.time);
        else
          ws.retired = true;
        continue;
      }
      const auto& assignment = std::get<TaskAssignment>(outcome);

      detail::PendingTask task;
      task.n = assignment.minibatch_n;
      task.assignment_clock = assignment.model_clock;
      task.batch = sample_batch(train, ws.shard, task.n, ws.data_rng);
      task.counts = batch_label_counts(task.batch, train.num_classes);
      if (pull_at_assignment) task.pulled_model = server.snapshot_at(assignment.model_clock);
      const TaskOutcome run = simulate_task(*ws.profile, ws.dev, ev.time, task.n, ws.noise_rng);
      task.features = run.features;
      task.t_comp = run.t_comp;
      task.energy = run.energy;
      task.predictor = server.last_size_decision().predictor;

      double due = ev.time + run.t_comp;
      if (cfg.staleness.kind == StalenessModel::Kind::exponential_latency)
        due += sample_latency(cfg.staleness, latency_rng);
      ws.pending = std::move(task);
      ++in_flight;
      push_event(due, detail::Event::Kind::result, ws.id);
      continue;
    }

    // result event
    if (!ws.pending) throw std::logic_error("run_online: result event without a pending task");
    detail::PendingTask task = std::move(*ws.pending);
    ws.pending.reset();
    if (in_flight == 0) throw std::logic_error("run_online: in-flight counter underflow");
    --in_flight;
    ++ws.tasks_executed;

    if (cfg.profiler.enabled) {
      iprof.observe(ws.profile->device_model, task.features, static_cast<double>(task.n),
                    task.t_comp, task.energy);
      maui.observe(static_cast<double>(task.n), task.t_comp, task.energy);
      ProfilerRow row;
      row.request_index = ws.tasks_executed;
      row.device_model = ws.profile->device_model;
      row.predictor = task.predictor;
      row.predicted_n = task.n;
      row.t_slo = cfg.controller.t_slo;
      row.e_slo = cfg.controller.e_slo;
      row.actual_t = task.t_comp;
      row.actual_e = task.energy;
      row.deviation_t = task.t_comp - cfg.controller.t_slo;
      row.deviation_e = task.energy - cfg.controller.e_slo;
      out.profiler_rows.push_back(std::move(row));
    }

    if (server.would_drop(task.assignment_clock)) {
      // Synchronous mode: the round moved on; skip the wasted gradient.
      server.drop_superseded();
      schedule_next_arrival(ws, ev.time);
      continue;
    }

    GradientResult result;
    result.worker_id = static_cast<int>(ws.id);
    result.batch_size = task.n;
    result.label_counts = task.counts;
    if (pull_at_assignment) {
      result.pulled_clock = task.assignment_clock;
      result.grad = gradient(*task.pulled_model, task.batch);
    } else if (controlled_staleness) {
      const std::uint64_t raw = next_staleness(cfg.staleness, task.counts, stale_rng);
      const std::uint64_t cap = std::min<std::uint64_t>(
          server.clock(), static_cast<std::uint64_t>(cfg.snapshot_capacity - 1));
      const std::uint64_t tau = std::min(raw, cap);
      result.pulled_clock = server.clock() - tau;
      result.grad = gradient(server.snapshot_at(result.pulled_clock), task.batch);
    } else {  // none: compute against the live model
      result.pulled_clock = server.clock();
      result.grad = gradient(server.model(), task.batch);
    }
    ++out.gradients_computed;
    if (cfg.perturb.enabled)
      perturb(result.grad, cfg.perturb.clip_norm, cfg.perturb.sigma, ws.perturb_rng);

    audit_fifo.push_back(result.label_counts);
    const auto report = server.handle_result(result);
    if (report)
      round_buffered = 0;
    else if (lockstep)
      ++round_buffered;
    if (report) {
      for (const auto& c : report->contributions) {
        UpdateRow row;
        row.update_index = report->update_index;
        row.sim_time = ev.time;
        row.worker_id = c.worker_id;
        row.tau = c.tau;
        row.lambda = c.lambda;
        row.sim = c.sim;
        row.weight = c.weight;
        row.batch_size = c.batch_size;
        row.tau_thres = c.tau_thres;
        row.dropped_results = server.dropped_results();
        out.updates.push_back(row);

        if (audit_fifo.empty()) throw std::logic_error("run_online: audit FIFO underflow");
        const LabelCounts& consumed = audit_fifo.front();
        for (std::size_t i = 0; i < consumed.size(); ++i)
          out.audit_label_totals[i] += consumed[i];
        ++out.audit_consumed;
        audit_fifo.pop_front();
      }
      if (cfg.eval_every > 0 && report->update_index % cfg.eval_every == 0)
        out.evals.push_back(evaluate_model(server.model(), test, report->update_index, ev.time,
                                           cfg.record_recall));
      if (cfg.max_updates > 0 && server.clock() >= cfg.max_updates) stop = true;
    }
    schedule_next_arrival(ws, ev.time);
  }

  out.dropped_results = server.dropped_results();
  out.final_global_counts = server.aggregator().global_label_counts();
  out.final_clock = server.clock();
  out.final_model = server.model();
  return out;
}

// ---------------------------------------------------------------------------
// Chunk-driven cadence run (test-then-train on a drifting stream)
// ---------------------------------------------------------------------------

struct ChunkedRunConfig {
  ModelSpec model;
  AggregatorConfig aggregator;  // typically Unit policy, K = 1
  DriftingStream::Config stream;
  std::size_t num_chunks = 240;
  std::size_t batch_period = 0;  // 0 = update per chunk (online); P = apply at period end

  void validate() const {
    model.validate();
    stream.validate();
    if (num_chunks == 0) throw std::invalid_argument("ChunkedRunConfig: num_chunks must be > 0");
    if (model.num_classes != stream.num_classes || model.input_dim != stream.dim)
      throw std::invalid_argument("ChunkedRunConfig: model does not match the stream");
    if (model.num_classes != aggregator.num_classes)
      throw std::invalid_argument("ChunkedRunConfig: model/aggregator class count mismatch");
  }
};

struct ChunkedRunResult {
  std::vector<double> chunk_accuracy;  // accuracy on each chunk before training on it
  double mean_accuracy = 0.0;
  std::uint64_t gradients_computed = 0;
  std::uint64_t final_clock = 0;
  LabelCounts final_global_counts;
  std::vector<UpdateRow> updates;
  ModelParams final_model;
};

// Same data, same gradient count; only the update cadence differs. Online
// applies each chunk's gradient immediately; batched buffers a period's worth
// (all computed against the period-start model, which is exactly the live
// model since no updates land mid-period) and applies them back to back.
inline ChunkedRunResult run_chunked(const ChunkedRunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DriftingStream stream(cfg.stream, seed);
  Aggregator agg(cfg.aggregator, init_params(cfg.model, seed));

  ChunkedRunResult out;
  struct Buffered {
    GradientResult result;
    std::size_t chunk = 0;
  };
  std::vector<Buffered> buffer;

  auto submit = [&](GradientResult&& r, std::size_t chunk) {
    if (const auto report = agg.submit(std::move(r))) {
      for (const auto& c : report->contributions) {
        UpdateRow row;
        row.update_index = report->update_index;
        row.sim_time = static_cast<double>(chunk);
        row.worker_id = c.worker_id;
        row.tau = c.tau;
        row.lambda = c.lambda;
        row.sim = c.sim;
        row.weight = c.weight;
        row.batch_size = c.batch_size;
        row.tau_thres = c.tau_thres;
        out.updates.push_back(row);
      }
    }
  };

  for (std::size_t c = 0; c < cfg.num_chunks; ++c) {
    const Batch chunk = stream.chunk_at(c);
    out.chunk_accuracy.push_back(accuracy(agg.model(), chunk));  // test THEN train

    GradientResult r;
    r.worker_id = 0;
    r.pulled_clock = agg.model().clock;
    r.grad = gradient(agg.model(), chunk);
    r.label_counts = batch_label_counts(chunk, cfg.stream.num_classes);
    r.batch_size = chunk.size();
    ++out.gradients_computed;

    if (cfg.batch_period == 0) {
      submit(std::move(r), c);
    } else {
      buffer.push_back({std::move(r), c});
      if ((c + 1) % cfg.batch_period == 0) {
        for (auto& b : buffer) submit(std::move(b.result), c);
        buffer.clear();
      }
    }
  }
  for (auto& b : buffer) submit(std::move(b.result), cfg.num_chunks - 1);  // trailing partial
  buffer.clear();

  double sum = 0.0;
  for (double a : out.chunk_accuracy) sum += a;
  out.mean_accuracy = sum / static_cast<double>(out.chunk_accuracy.size());
  out.final_clock = agg.model().clock;
  out.final_global_counts = agg.global_label_counts();
  out.final_model = agg.model();
  return out;
}

}  // namespace fedsim
