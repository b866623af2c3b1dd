#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <variant>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fedsim/controller.hpp"
#include "fedsim/runner.hpp"
#include "fedsim/server.hpp"

using namespace fedsim;

namespace {

// Sorted-copy percentile oracle, independent of the streaming implementation.
double sort_percentile(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  const auto rank =
      static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

ModelSpec tiny_spec() {
  ModelSpec s;
  s.input_dim = 8;
  s.num_classes = 4;
  return s;
}

SyntheticSpec tiny_data_spec() {
  SyntheticSpec d;
  d.dim = 8;
  d.num_classes = 4;
  d.train_size = 800;
  d.test_size = 200;
  d.center_scale = 10.0;
  d.noise_sigma = 2.0;
  return d;
}

GradientResult make_result(const ModelParams& m, int worker, std::uint64_t pulled,
                           std::size_t cls, std::size_t batch_size) {
  GradientResult r;
  r.worker_id = worker;
  r.pulled_clock = pulled;
  r.grad.assign(m.values.size(), 0.01);
  r.label_counts.assign(m.spec.num_classes, 0);
  r.label_counts[cls] = batch_size;
  r.batch_size = batch_size;
  return r;
}

Server::Config permissive_server_config(DampeningPolicy policy, std::size_t K,
                                        std::size_t num_classes) {
  Server::Config cfg;
  cfg.aggregator.policy = policy;
  cfg.aggregator.K = K;
  cfg.aggregator.lr = 0.1;
  cfg.aggregator.num_classes = num_classes;
  return cfg;
}

Sizer fixed_sizer(std::size_t bound) {
  return [bound](const TaskRequest&) { return SizeDecision{bound, "fixed"}; };
}

TaskRequest uniform_request(std::size_t worker, std::size_t num_classes, std::size_t per_class) {
  TaskRequest req;
  req.worker_id = worker;
  req.device_model = "dev";
  req.local_label_counts.assign(num_classes, per_class);
  req.local_size = num_classes * per_class;
  return req;
}

}  // namespace

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

TEST_CASE("fixed thresholds gate size first, then similarity") {
  ControllerConfig cfg;
  cfg.size_threshold = ThresholdMode::fixed(50.0);
  cfg.sim_threshold = ThresholdMode::fixed(0.9);
  Controller ctl(cfg);

  CHECK(ctl.admit(49.0, 0.5) == RejectReason::too_small);
  CHECK(ctl.accepted_count() == 0);
  CHECK_FALSE(ctl.admit(50.0, 0.5).has_value());  // at the cutoff: accepted
  CHECK(ctl.admit(100.0, 0.95) == RejectReason::too_similar);
  CHECK(ctl.admit(49.0, 0.95) == RejectReason::too_small);  // size outranks sim
  CHECK_FALSE(ctl.admit(100.0, 0.9).has_value());           // at the cutoff: accepted
  CHECK(ctl.accepted_count() == 2);
}

TEST_CASE("percentile size cutoff tracks the accepted history") {
  ControllerConfig cfg;
  cfg.size_threshold = ThresholdMode::percentile(20.0);
  Controller ctl(cfg);
  CHECK_FALSE(ctl.size_cutoff().has_value());  // nothing accepted yet

  Rng rng(2024);
  std::vector<double> accepted;
  for (int i = 0; i < 300; ++i) {
    const double n = std::max(1.0, std::round(rng.normal(100.0, 33.0)));
    std::optional<double> expect_cut;
    if (!accepted.empty()) expect_cut = sort_percentile(accepted, 20.0);
    const auto cut = ctl.size_cutoff();
    REQUIRE(cut.has_value() == expect_cut.has_value());
    if (cut) CHECK(*cut == *expect_cut);

    const auto verdict = ctl.admit(n, 0.0);
    const bool expect_reject = expect_cut && n < *expect_cut;
    CHECK(verdict.has_value() == expect_reject);
    if (verdict) CHECK(*verdict == RejectReason::too_small);
    if (!verdict) accepted.push_back(n);
  }
  CHECK(ctl.accepted_count() == accepted.size());
  // Only accepted values enter the history, so the gate ratchets upward:
  // it keeps admitting and keeps rejecting, and never lets the cutoff fall.
  CHECK(ctl.accepted_count() > 10);
  CHECK(ctl.accepted_count() < 300);
  CHECK(*ctl.size_cutoff() >= *std::min_element(accepted.begin(), accepted.end()));
}

TEST_CASE("percentile similarity cutoff uses accepted similarities") {
  ControllerConfig cfg;
  cfg.sim_threshold = ThresholdMode::percentile(50.0);
  Controller ctl(cfg);

  CHECK_FALSE(ctl.admit(10.0, 0.9).has_value());  // empty history accepts anything
  CHECK_FALSE(ctl.admit(10.0, 0.5).has_value());  // 0.5 <= cutoff 0.9
  // History {0.9, 0.5}: the 50th percentile (nearest rank) is 0.5, so the
  // redundancy gate has ratcheted down and now rejects anything above it.
  REQUIRE(ctl.sim_cutoff().has_value());
  CHECK(*ctl.sim_cutoff() == 0.5);
  CHECK(ctl.admit(10.0, 0.7) == RejectReason::too_similar);
  CHECK_FALSE(ctl.admit(10.0, 0.5).has_value());  // equality passes
  CHECK_FALSE(ctl.admit(10.0, 0.4).has_value());
  // History {0.9, 0.5, 0.5, 0.4}: nearest-rank 50th percentile is still 0.5.
  CHECK(*ctl.sim_cutoff() == 0.5);
}

TEST_CASE("percentile zero means the smallest accepted value") {
  ControllerConfig cfg;
  cfg.size_threshold = ThresholdMode::percentile(0.0);
  Controller ctl(cfg);
  CHECK_FALSE(ctl.admit(30.0, 0.0).has_value());  // first accept sets the floor
  REQUIRE(ctl.size_cutoff().has_value());
  CHECK(*ctl.size_cutoff() == 30.0);
  CHECK(ctl.admit(10.0, 0.0) == RejectReason::too_small);  // below the floor
  CHECK_FALSE(ctl.admit(35.0, 0.0).has_value());
  CHECK_FALSE(ctl.admit(30.0, 0.0).has_value());  // equality passes
  CHECK(*ctl.size_cutoff() == 30.0);              // min of {30, 35, 30}
  CHECK(ctl.admit(29.9, 0.0) == RejectReason::too_small);
}

TEST_CASE("controller configuration is validated") {
  ControllerConfig bad_pct;
  bad_pct.size_threshold = ThresholdMode::percentile(100.0);
  CHECK_THROWS_AS(Controller(bad_pct), std::invalid_argument);

  ControllerConfig neg_pct;
  neg_pct.sim_threshold = ThresholdMode::percentile(-1.0);
  CHECK_THROWS_AS(Controller(neg_pct), std::invalid_argument);

  ControllerConfig bad_slo;
  bad_slo.t_slo = 0.0;
  CHECK_THROWS_AS(Controller(bad_slo), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Snapshot ring
// ---------------------------------------------------------------------------

TEST_CASE("snapshot ring evicts the oldest model versions") {
  ModelParams m = init_params(tiny_spec(), 7);
  SnapshotRing ring(3);
  ring.push(m);  // clock 0
  const std::vector<double> step(m.values.size(), 1.0);
  for (int i = 0; i < 5; ++i) {
    apply_step(m, step, 0.5);  // clocks 1..5
    ring.push(m);
  }
  CHECK(ring.size() == 3);
  CHECK(ring.oldest_clock() == 3);
  CHECK(ring.newest_clock() == 5);
  CHECK(ring.at_clock(4).clock == 4);
  CHECK(ring.at_clock(4).values[0] != ring.at_clock(5).values[0]);
  CHECK_THROWS_AS(ring.at_clock(2), std::out_of_range);
  CHECK_THROWS_AS(ring.at_clock(6), std::out_of_range);
  CHECK_THROWS_AS(SnapshotRing(0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

TEST_CASE("server assigns the smaller of predicted bound and local pool") {
  const ModelSpec spec = tiny_spec();
  Server big(permissive_server_config(DampeningPolicy::Unit, 1, spec.num_classes),
             init_params(spec, 1), fixed_sizer(300));
  const auto out1 = big.handle_request(uniform_request(0, spec.num_classes, 25));  // local 100
  REQUIRE(std::holds_alternative<TaskAssignment>(out1));
  CHECK(std::get<TaskAssignment>(out1).minibatch_n == 100);
  CHECK(std::get<TaskAssignment>(out1).model_clock == 0);
  CHECK(big.last_size_decision().bound == 300);

  Server small(permissive_server_config(DampeningPolicy::Unit, 1, spec.num_classes),
               init_params(spec, 1), fixed_sizer(32));
  const auto out2 = small.handle_request(uniform_request(0, spec.num_classes, 250));
  REQUIRE(std::holds_alternative<TaskAssignment>(out2));
  CHECK(std::get<TaskAssignment>(out2).minibatch_n == 32);
}

TEST_CASE("server size gate applies to the assigned batch, not the pool") {
  const ModelSpec spec = tiny_spec();
  auto cfg = permissive_server_config(DampeningPolicy::Unit, 1, spec.num_classes);
  cfg.controller.size_threshold = ThresholdMode::fixed(64.0);
  Server server(cfg, init_params(spec, 1), fixed_sizer(32));
  // The pool holds 1000 rows, but the sizer caps the batch at 32 < 64.
  const auto out = server.handle_request(uniform_request(0, spec.num_classes, 250));
  REQUIRE(std::holds_alternative<RejectReason>(out));
  CHECK(std::get<RejectReason>(out) == RejectReason::too_small);
  CHECK(server.controller().accepted_count() == 0);
}

TEST_CASE("server validates incoming requests") {
  const ModelSpec spec = tiny_spec();
  Server server(permissive_server_config(DampeningPolicy::Unit, 1, spec.num_classes),
                init_params(spec, 1), fixed_sizer(10));

  TaskRequest empty = uniform_request(0, spec.num_classes, 25);
  empty.local_size = 0;
  CHECK_THROWS_AS(server.handle_request(empty), std::invalid_argument);

  TaskRequest short_counts = uniform_request(0, spec.num_classes, 25);
  short_counts.local_label_counts.pop_back();
  CHECK_THROWS_AS(server.handle_request(short_counts), std::invalid_argument);

  TaskRequest bad_sum = uniform_request(0, spec.num_classes, 25);
  bad_sum.local_size = 99;
  CHECK_THROWS_AS(server.handle_request(bad_sum), std::invalid_argument);

  CHECK_THROWS_AS(
      Server(permissive_server_config(DampeningPolicy::Unit, 1, spec.num_classes),
             init_params(spec, 1), Sizer{}),
      std::invalid_argument);
}

TEST_CASE("clock advances once per K results and snapshots follow") {
  const ModelSpec spec = tiny_spec();
  const ModelParams init = init_params(spec, 3);
  Server server(permissive_server_config(DampeningPolicy::Unit, 3, spec.num_classes), init,
                fixed_sizer(10));

  CHECK_FALSE(server.handle_result(make_result(init, 0, 0, 0, 10)).has_value());
  CHECK_FALSE(server.handle_result(make_result(init, 1, 0, 1, 10)).has_value());
  CHECK(server.clock() == 0);
  const auto report = server.handle_result(make_result(init, 2, 0, 2, 10));
  REQUIRE(report.has_value());
  CHECK(report->update_index == 1);
  CHECK(report->contributions.size() == 3);
  CHECK(server.clock() == 1);
  CHECK(server.snapshots().newest_clock() == 1);
  CHECK(server.snapshots().size() == 2);  // initial model + one update
  CHECK(server.snapshot_at(0).values == init.values);

  CHECK_THROWS_AS(server.handle_result(make_result(init, 0, 5, 0, 10)),
                  std::invalid_argument);  // result from the future
}

TEST_CASE("synchronous server counts superseded results instead of applying them") {
  const ModelSpec spec = tiny_spec();
  const ModelParams init = init_params(spec, 4);
  Server server(permissive_server_config(DampeningPolicy::Synchronous, 1, spec.num_classes),
                init, fixed_sizer(10));

  CHECK_FALSE(server.would_drop(0));
  REQUIRE(server.handle_result(make_result(init, 0, 0, 0, 10)).has_value());
  CHECK(server.clock() == 1);

  // A second worker that pulled clock 0 is now superseded.
  CHECK(server.would_drop(0));
  CHECK_FALSE(server.would_drop(1));
  const auto dropped = server.handle_result(make_result(init, 1, 0, 1, 10));
  CHECK_FALSE(dropped.has_value());
  CHECK(server.dropped_results() == 1);
  CHECK(server.clock() == 1);
  CHECK(server.aggregator().consumed_results() == 1);

  // Asynchronous policies never pre-drop.
  Server async(permissive_server_config(DampeningPolicy::DynSgdInverse, 1, spec.num_classes),
               init, fixed_sizer(10));
  REQUIRE(async.handle_result(make_result(init, 0, 0, 0, 10)).has_value());
  CHECK_FALSE(async.would_drop(0));
}

// ---------------------------------------------------------------------------
// Online runner
// ---------------------------------------------------------------------------

namespace {

OnlineRunConfig base_run_config(std::size_t workers, std::size_t fixed_n) {
  OnlineRunConfig cfg;
  cfg.model = tiny_spec();
  cfg.aggregator.policy = DampeningPolicy::DynSgdInverse;
  cfg.aggregator.K = 1;
  cfg.aggregator.lr = 0.05;
  cfg.aggregator.num_classes = cfg.model.num_classes;
  cfg.staleness.kind = StalenessModel::Kind::gaussian;
  cfg.staleness.mu = 3.0;
  cfg.staleness.sigma = 1.0;
  WorkerGroup g;
  g.count = workers;
  g.minibatch.kind = SizingMode::Kind::fixed;
  g.minibatch.fixed_n = fixed_n;
  cfg.groups = {g};
  cfg.max_updates = 60;
  cfg.eval_every = 20;
  return cfg;
}

}  // namespace

TEST_CASE("a run with no workers produces only the initial evaluation") {
  auto cfg = base_run_config(0, 10);
  cfg.groups.clear();
  const auto [train, test] = make_synthetic(tiny_data_spec(), 11);
  const RunResult out = run_online(cfg, train, test, 11);
  REQUIRE(out.evals.size() == 1);
  CHECK(out.evals[0].update_index == 0);
  CHECK(out.evals[0].test_accuracy >= 0.0);
  CHECK(out.updates.empty());
  CHECK(out.final_clock == 0);
  CHECK(out.gradients_computed == 0);
}

TEST_CASE("synchronous mode runs lockstep rounds with zero staleness") {
  auto cfg = base_run_config(5, 10);
  cfg.aggregator.policy = DampeningPolicy::Synchronous;
  cfg.staleness.kind = StalenessModel::Kind::none;
  cfg.max_updates = 40;
  const auto [train, test] = make_synthetic(tiny_data_spec(), 21);
  const RunResult out = run_online(cfg, train, test, 21);

  CHECK(out.final_clock == 40);
  REQUIRE_FALSE(out.updates.empty());
  for (const auto& row : out.updates) {
    CHECK(row.tau == 0.0);
    CHECK(row.lambda == 1.0);
  }
  // Lockstep rounds never let a result go stale, so nothing is dropped and
  // every computed gradient becomes an update.
  CHECK(out.dropped_results == 0);
  CHECK(out.gradients_computed == out.final_clock);

  // All five workers should win round slots; the arrival race is fair.
  std::vector<int> seen;
  for (const auto& row : out.updates) seen.push_back(row.worker_id);
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  CHECK(seen.size() == 5);
}

TEST_CASE("synchronous rounds gather K fresh gradients per update") {
  auto cfg = base_run_config(6, 8);
  cfg.aggregator.policy = DampeningPolicy::Synchronous;
  cfg.aggregator.K = 3;
  cfg.staleness.kind = StalenessModel::Kind::none;
  cfg.max_updates = 12;
  const auto [train, test] = make_synthetic(tiny_data_spec(), 22);
  const RunResult out = run_online(cfg, train, test, 22);

  CHECK(out.final_clock == 12);
  CHECK(out.updates.size() == 12 * 3);
  for (const auto& row : out.updates) CHECK(row.tau == 0.0);
  CHECK(out.dropped_results == 0);
  CHECK(out.gradients_computed == 12 * 3);

  auto bad = cfg;
  bad.aggregator.K = 7;  // more slots than workers can ever fill
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("controlled staleness matches the configured distribution") {
  auto cfg = base_run_config(4, 10);
  cfg.staleness.mu = 6.0;
  cfg.staleness.sigma = 2.0;
  cfg.max_updates = 400;
  const auto [train, test] = make_synthetic(tiny_data_spec(), 31);
  const RunResult out = run_online(cfg, train, test, 31);

  REQUIRE(out.updates.size() == 400);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < out.updates.size(); ++i) {
    const auto& row = out.updates[i];
    CHECK(row.tau == std::floor(row.tau));  // whole update ticks
    CHECK(row.tau <= 63.0);                 // snapshot ring bound
    CHECK(row.lambda == 1.0 / (row.tau + 1.0));
    if (i >= 50) {  // skip the start-up phase where tau is clamped to the clock
      sum += row.tau;
      ++counted;
    }
  }
  const double mean = sum / static_cast<double>(counted);
  CHECK(mean > 5.4);
  CHECK(mean < 6.6);
}

TEST_CASE("label conservation holds at the end of a run") {
  auto cfg = base_run_config(6, 0);
  cfg.groups.clear();
  WorkerGroup fixed;
  fixed.count = 3;
  fixed.minibatch.kind = SizingMode::Kind::fixed;
  fixed.minibatch.fixed_n = 20;
  WorkerGroup noisy;
  noisy.count = 3;
  noisy.minibatch.kind = SizingMode::Kind::gaussian;
  noisy.minibatch.mu = 30.0;
  noisy.minibatch.sigma = 10.0;
  cfg.groups = {fixed, noisy};
  cfg.aggregator.policy = DampeningPolicy::AdaSgdExponential;
  cfg.aggregator.use_similarity = true;
  cfg.aggregator.K = 2;
  cfg.max_updates = 150;
  const auto [train, test] = make_synthetic(tiny_data_spec(), 41);
  const RunResult out = run_online(cfg, train, test, 41);

  CHECK(out.final_clock == 150);
  CHECK(out.audit_consumed == out.final_clock * cfg.aggregator.K);
  REQUIRE(out.audit_label_totals.size() == out.final_global_counts.size());
  for (std::size_t i = 0; i < out.final_global_counts.size(); ++i)
    CHECK(out.audit_label_totals[i] == out.final_global_counts[i]);

  std::uint64_t consumed_samples = 0;
  for (const auto& row : out.updates) consumed_samples += row.batch_size;
  CHECK(total_count(out.final_global_counts) == consumed_samples);
}

TEST_CASE("identical configuration and seed reproduce a run bitwise") {
  auto cfg = base_run_config(5, 15);
  cfg.aggregator.policy = DampeningPolicy::AdaSgdExponential;
  cfg.aggregator.use_similarity = true;
  cfg.max_updates = 60;
  const auto [train, test] = make_synthetic(tiny_data_spec(), 51);

  const RunResult a = run_online(cfg, train, test, 51);
  const RunResult b = run_online(cfg, train, test, 51);
  REQUIRE(a.evals.size() == b.evals.size());
  for (std::size_t i = 0; i < a.evals.size(); ++i) {
    CHECK(a.evals[i].test_accuracy == b.evals[i].test_accuracy);
    CHECK(a.evals[i].sim_time == b.evals[i].sim_time);
  }
  REQUIRE(a.updates.size() == b.updates.size());
  for (std::size_t i = 0; i < a.updates.size(); ++i) {
    CHECK(a.updates[i].weight == b.updates[i].weight);
    CHECK(a.updates[i].tau == b.updates[i].tau);
    CHECK(a.updates[i].sim == b.updates[i].sim);
    CHECK(a.updates[i].worker_id == b.updates[i].worker_id);
  }
  CHECK(a.final_model.values == b.final_model.values);

  const RunResult c = run_online(cfg, train, test, 52);
  CHECK(a.final_model.values != c.final_model.values);
}

TEST_CASE("rejected workers retire when retries are disabled") {
  auto cfg = base_run_config(3, 10);
  cfg.controller.size_threshold = ThresholdMode::fixed(1e9);  // nothing is big enough
  cfg.retry_rejected = false;
  const auto [train, test] = make_synthetic(tiny_data_spec(), 61);
  const RunResult out = run_online(cfg, train, test, 61);
  CHECK(out.rejected_too_small == 3);  // one attempt per worker
  CHECK(out.updates.empty());
  CHECK(out.final_clock == 0);

  cfg.retry_rejected = true;
  cfg.max_requests_per_worker = 4;
  const RunResult retried = run_online(cfg, train, test, 61);
  CHECK(retried.rejected_too_small == 12);  // every retry is rejected again
  CHECK(retried.final_clock == 0);
}

TEST_CASE("request budget caps the number of gradients") {
  auto cfg = base_run_config(2, 10);
  cfg.staleness.kind = StalenessModel::Kind::none;
  cfg.aggregator.policy = DampeningPolicy::Unit;
  cfg.max_requests_per_worker = 3;
  cfg.max_updates = 1000;  // unreachable; the run drains instead
  const auto [train, test] = make_synthetic(tiny_data_spec(), 71);
  const RunResult out = run_online(cfg, train, test, 71);
  CHECK(out.gradients_computed == 6);
  CHECK(out.final_clock == 6);
}

TEST_CASE("profiler sizing alternates predictors per device") {
  auto cfg = base_run_config(2, 0);
  cfg.aggregator.policy = DampeningPolicy::Unit;
  cfg.staleness.kind = StalenessModel::Kind::none;
  cfg.groups[0].minibatch.kind = SizingMode::Kind::profiler;
  cfg.profiler.enabled = true;
  cfg.profiler.round_robin_baseline = true;
  cfg.max_requests_per_worker = 6;
  cfg.max_updates = 10000;
  cfg.controller.t_slo = 3.0;
  const auto [train, test] = make_synthetic(tiny_data_spec(), 81);
  const RunResult out = run_online(cfg, train, test, 81);

  REQUIRE(out.profiler_rows.size() == 12);
  std::set<std::string> devices;
  for (const auto& row : out.profiler_rows) {
    devices.insert(row.device_model);
    CHECK(row.predicted_n >= 1);
    CHECK(row.predictor == ((row.request_index % 2 == 1) ? "iprof" : "maui"));
    CHECK(row.deviation_t == row.actual_t - 3.0);
    CHECK(row.actual_t > 0.0);
  }
  CHECK(devices.size() == 2);  // two workers on two distinct device models

  // Sizing from a profiler requires the profiler to be configured.
  auto bad = cfg;
  bad.profiler.enabled = false;
  CHECK_THROWS_AS(run_online(bad, train, test, 81), std::invalid_argument);
}

TEST_CASE("online run configuration is validated") {
  const auto [train, test] = make_synthetic(tiny_data_spec(), 91);

  auto mismatched = base_run_config(2, 10);
  mismatched.aggregator.num_classes = 7;
  CHECK_THROWS_AS(run_online(mismatched, train, test, 91), std::invalid_argument);

  auto wrong_data = base_run_config(2, 10);
  wrong_data.model.num_classes = 7;
  wrong_data.aggregator.num_classes = 7;
  CHECK_THROWS_AS(run_online(wrong_data, train, test, 91), std::invalid_argument);

  auto bad_gap = base_run_config(2, 10);
  bad_gap.arrival_mean_gap_s = 0.0;
  CHECK_THROWS_AS(run_online(bad_gap, train, test, 91), std::invalid_argument);

  auto no_stop = base_run_config(2, 10);
  no_stop.max_updates = 0;
  no_stop.max_requests_per_worker = 0;
  CHECK_THROWS_AS(run_online(no_stop, train, test, 91), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Chunked cadence runner
// ---------------------------------------------------------------------------

namespace {

ChunkedRunConfig chunked_config(std::size_t num_chunks, std::size_t period) {
  ChunkedRunConfig cfg;
  cfg.stream.dim = 16;
  cfg.stream.num_classes = 5;
  cfg.stream.samples_per_chunk = 32;
  cfg.stream.drift_period = 24;
  cfg.model.input_dim = cfg.stream.dim;
  cfg.model.num_classes = cfg.stream.num_classes;
  cfg.aggregator.policy = DampeningPolicy::Unit;
  cfg.aggregator.K = 1;
  cfg.aggregator.lr = 0.05;
  cfg.aggregator.num_classes = cfg.stream.num_classes;
  cfg.num_chunks = num_chunks;
  cfg.batch_period = period;
  return cfg;
}

}  // namespace

TEST_CASE("online and batched cadences spend the same gradient budget") {
  const auto online = run_chunked(chunked_config(48, 0), 7);
  const auto batched = run_chunked(chunked_config(48, 4), 7);

  CHECK(online.gradients_computed == 48);
  CHECK(batched.gradients_computed == 48);
  CHECK(online.final_clock == 48);
  CHECK(batched.final_clock == 48);
  REQUIRE(online.chunk_accuracy.size() == 48);
  REQUIRE(batched.chunk_accuracy.size() == 48);
  // Identical initial model, and the first chunk is scored before any update.
  CHECK(online.chunk_accuracy[0] == batched.chunk_accuracy[0]);
  // Same data flowed through both runs.
  REQUIRE(online.final_global_counts.size() == batched.final_global_counts.size());
  for (std::size_t i = 0; i < online.final_global_counts.size(); ++i)
    CHECK(online.final_global_counts[i] == batched.final_global_counts[i]);
  CHECK(total_count(online.final_global_counts) == 48 * 32);

  for (const auto& row : online.updates) CHECK(row.tau == 0.0);
  REQUIRE(batched.updates.size() == 48);
  for (std::size_t i = 0; i < batched.updates.size(); ++i)
    CHECK(batched.updates[i].tau == static_cast<double>(i % 4));
}

TEST_CASE("a trailing partial period is flushed at the end of the stream") {
  const auto out = run_chunked(chunked_config(10, 4), 9);
  CHECK(out.final_clock == 10);
  REQUIRE(out.updates.size() == 10);
  CHECK(out.updates[8].tau == 0.0);
  CHECK(out.updates[9].tau == 1.0);
  CHECK(out.mean_accuracy >= 0.0);
  CHECK(out.mean_accuracy <= 1.0);
}

TEST_CASE("chunked run configuration is validated") {
  auto cfg = chunked_config(10, 0);
  cfg.model.input_dim = 3;
  CHECK_THROWS_AS(run_chunked(cfg, 1), std::invalid_argument);

  auto empty = chunked_config(0, 0);
  CHECK_THROWS_AS(run_chunked(empty, 1), std::invalid_argument);

  auto bad_agg = chunked_config(10, 0);
  bad_agg.aggregator.num_classes = 9;
  CHECK_THROWS_AS(run_chunked(bad_agg, 1), std::invalid_argument);
}
