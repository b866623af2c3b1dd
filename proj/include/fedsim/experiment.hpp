#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/csv.hpp"

namespace fedsim {

inline const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> h = {
      "run_id", "seed",   "update_index", "sim_time", "policy",
      "test_accuracy", "per_class_recall", "tau", "lambda", "sim",
      "weight", "dropped_results", "tau_thres"};
  return h;
}

inline const std::vector<std::string>& profiler_header() {
  static const std::vector<std::string> h = {
      "request_index", "device_model", "predictor", "predicted_n", "t_slo",
      "e_slo",         "actual_t",     "actual_e",  "deviation_t", "deviation_e"};
  return h;
}

inline std::string join_recall(const std::vector<double>& recall) {
  std::string out;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (i) out.push_back(';');
    out += format_double(recall[i]);
  }
  return out;
}

struct RunPaths {
  std::string run_id;
  std::filesystem::path dir;
  std::filesystem::path metrics;
  std::filesystem::path profiler;
  std::filesystem::path manifest;
};

struct RunSummary {
  RunPaths paths;
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;  // last evaluation (online) or chunk mean (drifting)
  std::uint64_t final_clock = 0;
  std::uint64_t gradients_computed = 0;
  std::size_t metric_rows = 0;
  std::size_t profiler_rows = 0;
};

namespace expdetail {

inline void write_eval_row(CsvWriter& w, const std::string& run_id, std::uint64_t seed,
                           const std::string& policy, std::uint64_t update_index,
                           double sim_time, double accuracy,
                           const std::vector<double>& recall) {
  w.write_row({run_id, format_u64(seed), format_u64(update_index), format_double(sim_time),
               policy, format_double(accuracy), join_recall(recall), "", "", "", "", "", ""});
}

inline void write_update_row(CsvWriter& w, const std::string& run_id, std::uint64_t seed,
                             const std::string& policy, const UpdateRow& row) {
  w.write_row({run_id, format_u64(seed), format_u64(row.update_index),
               format_double(row.sim_time), policy, "", "", format_double(row.tau),
               format_double(row.lambda), format_double(row.sim), format_double(row.weight),
               format_u64(row.dropped_results),
               row.tau_thres ? format_double(*row.tau_thres) : ""});
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

}  // namespace expdetail

// Executes one (config, seed) run and writes metrics.csv, profiler.csv, and
// manifest.json under <output_dir>/<preset>_<seed>/. The manifest is itself a
// valid config whose seed list holds exactly this seed, so re-running it
// reproduces the CSVs byte for byte.
inline RunSummary run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);

  RunSummary summary;
  summary.seed = seed;
  summary.paths.run_id = run_id_for(cfg, seed);
  summary.paths.dir = std::filesystem::path(cfg.output_dir) / summary.paths.run_id;
  summary.paths.metrics = summary.paths.dir / "metrics.csv";
  summary.paths.profiler = summary.paths.dir / "profiler.csv";
  summary.paths.manifest = summary.paths.dir / "manifest.json";

  std::error_code ec;
  std::filesystem::create_directories(summary.paths.dir, ec);
  if (ec)
    throw std::runtime_error("cannot create output directory " + summary.paths.dir.string() +
                             ": " + ec.message());

  auto metrics_os = expdetail::open_output(summary.paths.metrics);
  auto profiler_os = expdetail::open_output(summary.paths.profiler);
  CsvWriter metrics(metrics_os, metrics_header());
  CsvWriter profiler(profiler_os, profiler_header());
  const std::string& run_id = summary.paths.run_id;

  if (is_chunked_run(cfg)) {
    const ChunkedRunResult out = run_chunked(to_chunked_config(cfg), seed);
    // Eval rows carry the chunk index (the model is scored on each chunk
    // before training on it); update rows carry the model clock.
    for (std::size_t c = 0; c < out.chunk_accuracy.size(); ++c)
      expdetail::write_eval_row(metrics, run_id, seed, cfg.policy, c,
                                static_cast<double>(c), out.chunk_accuracy[c], {});
    for (const UpdateRow& row : out.updates)
      expdetail::write_update_row(metrics, run_id, seed, cfg.policy, row);
    summary.final_accuracy = out.mean_accuracy;
    summary.final_clock = out.final_clock;
    summary.gradients_computed = out.gradients_computed;
  } else {
    const auto [train, test] = load_dataset(cfg, seed);
    const RunResult out = run_online(to_online_config(cfg), train, test, seed);

    // Interleave: evaluation rows land right after the update they follow.
    std::size_t next_eval = 0;
    auto flush_evals_to = [&](std::uint64_t update_index) {
      while (next_eval < out.evals.size() &&
             out.evals[next_eval].update_index <= update_index) {
        const EvalPoint& e = out.evals[next_eval++];
        expdetail::write_eval_row(metrics, run_id, seed, cfg.policy, e.update_index, e.sim_time,
                                  e.test_accuracy, e.recall);
      }
    };
    flush_evals_to(0);
    for (const UpdateRow& row : out.updates) {
      expdetail::write_update_row(metrics, run_id, seed, cfg.policy, row);
      flush_evals_to(row.update_index);
    }
    flush_evals_to(~std::uint64_t{0});

    for (const ProfilerRow& row : out.profiler_rows)
      profiler.write_row({format_u64(row.request_index), row.device_model, row.predictor,
                          format_u64(row.predicted_n), format_double(row.t_slo),
                          format_double(row.e_slo), format_double(row.actual_t),
                          format_double(row.actual_e), format_double(row.deviation_t),
                          format_double(row.deviation_e)});

    summary.final_accuracy = out.evals.back().test_accuracy;
    summary.final_clock = out.final_clock;
    summary.gradients_computed = out.gradients_computed;
    summary.profiler_rows = out.profiler_rows.size();
  }
  summary.metric_rows = metrics.rows_written() - 1;  // exclude the header

  ExperimentConfig manifest_cfg = cfg;
  manifest_cfg.seeds = {seed};
  manifest_cfg.artifact_version = kVersion;
  auto manifest_os = expdetail::open_output(summary.paths.manifest);
  manifest_os << config_json(manifest_cfg).dump(2) << '\n';

  metrics_os.flush();
  profiler_os.flush();
  manifest_os.flush();
  if (!metrics_os || !profiler_os || !manifest_os)
    throw std::runtime_error("failed while writing run outputs to " + summary.paths.dir.string());
  return summary;
}

// All seeds of a config, in listed order.
inline std::vector<RunSummary> run_all_seeds(const ExperimentConfig& cfg) {
  std::vector<RunSummary> out;
  out.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) out.push_back(run_experiment(cfg, seed));
  return out;
}

}  // namespace fedsim
