#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fedsim/controller.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/idx.hpp"
#include "fedsim/runner.hpp"
#include "fedsim/version.hpp"

namespace fedsim {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment configuration (mirrors the documented config file schema)
// ---------------------------------------------------------------------------

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | mnist | drifting

  // synthetic / drifting geometry
  std::size_t dim = 64;
  std::size_t num_classes = 10;
  double center_scale = 30.0;
  double noise_sigma = 4.0;

  // synthetic sizes
  std::size_t train_size = 10000;
  std::size_t test_size = 2000;

  // mnist (IDX files) + subset sizes
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_subset = 10000;
  std::size_t test_subset = 2000;

  // drifting stream shape
  std::size_t samples_per_chunk = 64;
  std::size_t drift_period = 24;
  std::size_t num_chunks = 240;
};

struct ModelConfig {
  std::size_t hidden_dim = 64;      // 0 = softmax regression
  std::string activation = "relu";  // relu | tanh
};

struct MinibatchConfig {
  std::string mode = "fixed";  // fixed | gaussian | profiler | mixed
  std::size_t n = 100;
  double mu = 100.0;
  double sigma = 33.0;
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // mixed: (count, n)
};

struct StalenessConfig {
  std::string kind = "gaussian";  // none | gaussian | gaussian_longtail | exponential_latency
  double mu = 6.0;
  double sigma = 2.0;
  std::vector<int> tail_labels;
  double tail_value = 0.0;
  double min_s = 7.1;
  double mean_s = 8.45;
};

struct CadenceConfig {
  std::string mode = "online";  // online | batched
  std::size_t period = 24;      // batched only
};

struct PerturbSettings {
  bool enabled = false;
  double clip_norm = 1.0;
  double sigma = 0.0;
};

struct ProfilerSettings {
  bool enabled = false;
  bool round_robin_baseline = false;
  double epsilon_time = 0.1;
  double epsilon_energy = 6e-5;
  double ridge = 1e-8;
  std::size_t retrain_every = 50;
  std::string pretrain_fleet = "pretrain5";
  std::uint64_t pretrain_seed = 1;
};

struct ExperimentConfig {
  std::string preset = "custom";
  DatasetConfig dataset;
  ModelConfig model;
  std::string partition = "noniid";  // noniid | iid
  std::size_t num_users = 20;
  std::string fleet = "default10";  // default10 | pretrain5
  std::string policy = "adasgd";    // adasgd | dynsgd | ssgd | fedavg | unit
  double s_percent = 99.7;
  std::size_t staleness_window = 1000;
  std::size_t bootstrap_len = 100;
  std::size_t K = 1;
  double lr = 5e-4;
  MinibatchConfig minibatch;
  StalenessConfig staleness;
  ControllerConfig controller;
  CadenceConfig cadence;
  PerturbSettings perturb;
  ProfilerSettings profiler;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t eval_every = 25;
  bool record_recall = false;
  std::uint64_t max_updates = 4000;
  std::uint64_t max_requests_per_worker = 0;
  double arrival_mean_gap_s = 1.0;
  bool retry_rejected = true;
  std::size_t snapshot_capacity = 64;
  std::string output_dir = "out";
  std::string artifact_version = kVersion;  // informational; rewritten on output
};

// ---------------------------------------------------------------------------
// Strict JSON patching: every key must be known, errors name the key path
// ---------------------------------------------------------------------------

namespace cfgdetail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config: " + (path.empty() ? "<root>" : path) + ": " + what);
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) fail(join(path, item.key()), "unknown key");
  }
}

inline double get_num(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

inline std::uint64_t get_uint(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    fail(path, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

inline std::string get_str(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

}  // namespace cfgdetail

inline void apply_threshold(ThresholdMode& t, const json& j, const std::string& path) {
  cfgdetail::require_object(j, path);
  cfgdetail::check_keys(j, path, {"fixed", "percentile"});
  if (j.size() != 1) cfgdetail::fail(path, "expected exactly one of fixed/percentile");
  if (j.contains("fixed"))
    t = ThresholdMode::fixed(cfgdetail::get_num(j["fixed"], cfgdetail::join(path, "fixed")));
  else
    t = ThresholdMode::percentile(
        cfgdetail::get_num(j["percentile"], cfgdetail::join(path, "percentile")));
}

inline void apply_dataset(DatasetConfig& d, const json& j, const std::string& path) {
  namespace cd = cfgdetail;
  cd::require_object(j, path);
  if (j.contains("kind")) d.kind = cd::get_str(j["kind"], cd::join(path, "kind"));

  if (d.kind == "synthetic") {
    cd::check_keys(j, path, {"kind", "dim", "num_classes", "center_scale", "noise_sigma",
                             "train_size", "test_size"});
  } else if (d.kind == "mnist") {
    cd::check_keys(j, path, {"kind", "train_images", "train_labels", "test_images",
                             "test_labels", "train_subset", "test_subset"});
  } else if (d.kind == "drifting") {
    cd::check_keys(j, path, {"kind", "dim", "num_classes", "center_scale", "noise_sigma",
                             "samples_per_chunk", "drift_period", "num_chunks"});
  } else {
    cd::fail(cd::join(path, "kind"), "expected synthetic, mnist, or drifting");
  }

  for (const auto& item : j.items()) {
    const std::string p = cd::join(path, item.key());
    const json& v = item.value();
    if (item.key() == "kind") continue;
    if (item.key() == "dim") d.dim = cd::get_uint(v, p);
    else if (item.key() == "num_classes") d.num_classes = cd::get_uint(v, p);
    else if (item.key() == "center_scale") d.center_scale = cd::get_num(v, p);
    else if (item.key() == "noise_sigma") d.noise_sigma = cd::get_num(v, p);
    else if (item.key() == "train_size") d.train_size = cd::get_uint(v, p);
    else if (item.key() == "test_size") d.test_size = cd::get_uint(v, p);
    else if (item.key() == "train_images") d.train_images = cd::get_str(v, p);
    else if (item.key() == "train_labels") d.train_labels = cd::get_str(v, p);
    else if (item.key() == "test_images") d.test_images = cd::get_str(v, p);
    else if (item.key() == "test_labels") d.test_labels = cd::get_str(v, p);
    else if (item.key() == "train_subset") d.train_subset = cd::get_uint(v, p);
    else if (item.key() == "test_subset") d.test_subset = cd::get_uint(v, p);
    else if (item.key() == "samples_per_chunk") d.samples_per_chunk = cd::get_uint(v, p);
    else if (item.key() == "drift_period") d.drift_period = cd::get_uint(v, p);
    else if (item.key() == "num_chunks") d.num_chunks = cd::get_uint(v, p);
  }
}

inline void apply_minibatch(MinibatchConfig& m, const json& j, const std::string& path) {
  namespace cd = cfgdetail;
  cd::require_object(j, path);
  cd::check_keys(j, path, {"mode", "n", "mu", "sigma", "groups"});
  if (j.contains("mode")) m.mode = cd::get_str(j["mode"], cd::join(path, "mode"));
  if (j.contains("n")) m.n = cd::get_uint(j["n"], cd::join(path, "n"));
  if (j.contains("mu")) m.mu = cd::get_num(j["mu"], cd::join(path, "mu"));
  if (j.contains("sigma")) m.sigma = cd::get_num(j["sigma"], cd::join(path, "sigma"));
  if (j.contains("groups")) {
    const std::string p = cd::join(path, "groups");
    if (!j["groups"].is_array()) cd::fail(p, "expected an array");
    m.groups.clear();
    std::size_t i = 0;
    for (const json& g : j["groups"]) {
      const std::string gp = p + "[" + std::to_string(i++) + "]";
      cd::require_object(g, gp);
      cd::check_keys(g, gp, {"count", "n"});
      if (!g.contains("count") || !g.contains("n")) cd::fail(gp, "needs count and n");
      m.groups.emplace_back(cd::get_uint(g["count"], cd::join(gp, "count")),
                            cd::get_uint(g["n"], cd::join(gp, "n")));
    }
  }
}

inline void apply_staleness(StalenessConfig& s, const json& j, const std::string& path) {
  namespace cd = cfgdetail;
  cd::require_object(j, path);
  cd::check_keys(j, path,
                 {"kind", "mu", "sigma", "tail_labels", "tail_value", "min_s", "mean_s"});
  if (j.contains("kind")) s.kind = cd::get_str(j["kind"], cd::join(path, "kind"));
  if (j.contains("mu")) s.mu = cd::get_num(j["mu"], cd::join(path, "mu"));
  if (j.contains("sigma")) s.sigma = cd::get_num(j["sigma"], cd::join(path, "sigma"));
  if (j.contains("tail_value"))
    s.tail_value = cd::get_num(j["tail_value"], cd::join(path, "tail_value"));
  if (j.contains("min_s")) s.min_s = cd::get_num(j["min_s"], cd::join(path, "min_s"));
  if (j.contains("mean_s")) s.mean_s = cd::get_num(j["mean_s"], cd::join(path, "mean_s"));
  if (j.contains("tail_labels")) {
    const std::string p = cd::join(path, "tail_labels");
    if (!j["tail_labels"].is_array()) cd::fail(p, "expected an array of labels");
    s.tail_labels.clear();
    for (const json& v : j["tail_labels"])
      s.tail_labels.push_back(static_cast<int>(cd::get_uint(v, p)));
  }
}

inline void apply_controller(ControllerConfig& c, const json& j, const std::string& path) {
  namespace cd = cfgdetail;
  cd::require_object(j, path);
  cd::check_keys(j, path, {"size_threshold", "sim_threshold", "t_slo", "e_slo"});
  if (j.contains("size_threshold"))
    apply_threshold(c.size_threshold, j["size_threshold"], cd::join(path, "size_threshold"));
  if (j.contains("sim_threshold"))
    apply_threshold(c.sim_threshold, j["sim_threshold"], cd::join(path, "sim_threshold"));
  if (j.contains("t_slo")) c.t_slo = cd::get_num(j["t_slo"], cd::join(path, "t_slo"));
  if (j.contains("e_slo")) c.e_slo = cd::get_num(j["e_slo"], cd::join(path, "e_slo"));
}

inline void apply_config(ExperimentConfig& c, const json& j, const std::string& path = "") {
  namespace cd = cfgdetail;
  cd::require_object(j, path);
  cd::check_keys(
      j, path,
      {"preset",     "dataset",       "model",          "partition",
       "num_users",  "fleet",         "policy",         "s_percent",
       "staleness_window", "bootstrap_len", "K",        "lr",
       "minibatch",  "staleness",     "controller",     "cadence",
       "perturb",    "profiler",      "seeds",          "eval_every",
       "record_recall", "max_updates", "max_requests_per_worker", "arrival_mean_gap_s",
       "retry_rejected", "snapshot_capacity", "output_dir", "artifact_version"});

  if (j.contains("preset")) c.preset = cd::get_str(j["preset"], cd::join(path, "preset"));
  if (j.contains("dataset")) apply_dataset(c.dataset, j["dataset"], cd::join(path, "dataset"));
  if (j.contains("model")) {
    const std::string p = cd::join(path, "model");
    const json& m = j["model"];
    cd::require_object(m, p);
    cd::check_keys(m, p, {"hidden_dim", "activation"});
    if (m.contains("hidden_dim"))
      c.model.hidden_dim = cd::get_uint(m["hidden_dim"], cd::join(p, "hidden_dim"));
    if (m.contains("activation"))
      c.model.activation = cd::get_str(m["activation"], cd::join(p, "activation"));
  }
  if (j.contains("partition"))
    c.partition = cd::get_str(j["partition"], cd::join(path, "partition"));
  if (j.contains("num_users"))
    c.num_users = cd::get_uint(j["num_users"], cd::join(path, "num_users"));
  if (j.contains("fleet")) c.fleet = cd::get_str(j["fleet"], cd::join(path, "fleet"));
  if (j.contains("policy")) c.policy = cd::get_str(j["policy"], cd::join(path, "policy"));
  if (j.contains("s_percent"))
    c.s_percent = cd::get_num(j["s_percent"], cd::join(path, "s_percent"));
  if (j.contains("staleness_window"))
    c.staleness_window = cd::get_uint(j["staleness_window"], cd::join(path, "staleness_window"));
  if (j.contains("bootstrap_len"))
    c.bootstrap_len = cd::get_uint(j["bootstrap_len"], cd::join(path, "bootstrap_len"));
  if (j.contains("K")) c.K = cd::get_uint(j["K"], cd::join(path, "K"));
  if (j.contains("lr")) c.lr = cd::get_num(j["lr"], cd::join(path, "lr"));
  if (j.contains("minibatch"))
    apply_minibatch(c.minibatch, j["minibatch"], cd::join(path, "minibatch"));
  if (j.contains("staleness"))
    apply_staleness(c.staleness, j["staleness"], cd::join(path, "staleness"));
  if (j.contains("controller"))
    apply_controller(c.controller, j["controller"], cd::join(path, "controller"));
  if (j.contains("cadence")) {
    const std::string p = cd::join(path, "cadence");
    const json& v = j["cadence"];
    cd::require_object(v, p);
    cd::check_keys(v, p, {"mode", "period"});
    if (v.contains("mode")) c.cadence.mode = cd::get_str(v["mode"], cd::join(p, "mode"));
    if (v.contains("period"))
      c.cadence.period = cd::get_uint(v["period"], cd::join(p, "period"));
  }
  if (j.contains("perturb")) {
    const std::string p = cd::join(path, "perturb");
    const json& v = j["perturb"];
    cd::require_object(v, p);
    cd::check_keys(v, p, {"enabled", "clip_norm", "sigma"});
    if (v.contains("enabled"))
      c.perturb.enabled = cd::get_bool(v["enabled"], cd::join(p, "enabled"));
    if (v.contains("clip_norm"))
      c.perturb.clip_norm = cd::get_num(v["clip_norm"], cd::join(p, "clip_norm"));
    if (v.contains("sigma")) c.perturb.sigma = cd::get_num(v["sigma"], cd::join(p, "sigma"));
  }
  if (j.contains("profiler")) {
    const std::string p = cd::join(path, "profiler");
    const json& v = j["profiler"];
    cd::require_object(v, p);
    cd::check_keys(v, p,
                   {"enabled", "round_robin_baseline", "epsilon_time", "epsilon_energy",
                    "ridge", "retrain_every", "pretrain_fleet", "pretrain_seed"});
    if (v.contains("enabled"))
      c.profiler.enabled = cd::get_bool(v["enabled"], cd::join(p, "enabled"));
    if (v.contains("round_robin_baseline"))
      c.profiler.round_robin_baseline =
          cd::get_bool(v["round_robin_baseline"], cd::join(p, "round_robin_baseline"));
    if (v.contains("epsilon_time"))
      c.profiler.epsilon_time = cd::get_num(v["epsilon_time"], cd::join(p, "epsilon_time"));
    if (v.contains("epsilon_energy"))
      c.profiler.epsilon_energy =
          cd::get_num(v["epsilon_energy"], cd::join(p, "epsilon_energy"));
    if (v.contains("ridge")) c.profiler.ridge = cd::get_num(v["ridge"], cd::join(p, "ridge"));
    if (v.contains("retrain_every"))
      c.profiler.retrain_every = cd::get_uint(v["retrain_every"], cd::join(p, "retrain_every"));
    if (v.contains("pretrain_fleet"))
      c.profiler.pretrain_fleet =
          cd::get_str(v["pretrain_fleet"], cd::join(p, "pretrain_fleet"));
    if (v.contains("pretrain_seed"))
      c.profiler.pretrain_seed = cd::get_uint(v["pretrain_seed"], cd::join(p, "pretrain_seed"));
  }
  if (j.contains("seeds")) {
    const std::string p = cd::join(path, "seeds");
    if (!j["seeds"].is_array()) cd::fail(p, "expected an array of seeds");
    c.seeds.clear();
    for (const json& v : j["seeds"]) c.seeds.push_back(cd::get_uint(v, p));
  }
  if (j.contains("eval_every"))
    c.eval_every = cd::get_uint(j["eval_every"], cd::join(path, "eval_every"));
  if (j.contains("record_recall"))
    c.record_recall = cd::get_bool(j["record_recall"], cd::join(path, "record_recall"));
  if (j.contains("max_updates"))
    c.max_updates = cd::get_uint(j["max_updates"], cd::join(path, "max_updates"));
  if (j.contains("max_requests_per_worker"))
    c.max_requests_per_worker =
        cd::get_uint(j["max_requests_per_worker"], cd::join(path, "max_requests_per_worker"));
  if (j.contains("arrival_mean_gap_s"))
    c.arrival_mean_gap_s =
        cd::get_num(j["arrival_mean_gap_s"], cd::join(path, "arrival_mean_gap_s"));
  if (j.contains("retry_rejected"))
    c.retry_rejected = cd::get_bool(j["retry_rejected"], cd::join(path, "retry_rejected"));
  if (j.contains("snapshot_capacity"))
    c.snapshot_capacity = cd::get_uint(j["snapshot_capacity"], cd::join(path, "snapshot_capacity"));
  if (j.contains("output_dir"))
    c.output_dir = cd::get_str(j["output_dir"], cd::join(path, "output_dir"));
  if (j.contains("artifact_version"))
    c.artifact_version = cd::get_str(j["artifact_version"], cd::join(path, "artifact_version"));
}

// ---------------------------------------------------------------------------
// Serialization (fully resolved; round-trips through apply_config)
// ---------------------------------------------------------------------------

inline json threshold_json(const ThresholdMode& t) {
  if (t.kind == ThresholdMode::Kind::fixed) return json{{"fixed", t.value}};
  return json{{"percentile", t.value}};
}

inline json config_json(const ExperimentConfig& c) {
  json dataset{{"kind", c.dataset.kind}};
  if (c.dataset.kind == "synthetic") {
    dataset["dim"] = c.dataset.dim;
    dataset["num_classes"] = c.dataset.num_classes;
    dataset["center_scale"] = c.dataset.center_scale;
    dataset["noise_sigma"] = c.dataset.noise_sigma;
    dataset["train_size"] = c.dataset.train_size;
    dataset["test_size"] = c.dataset.test_size;
  } else if (c.dataset.kind == "mnist") {
    dataset["train_images"] = c.dataset.train_images;
    dataset["train_labels"] = c.dataset.train_labels;
    dataset["test_images"] = c.dataset.test_images;
    dataset["test_labels"] = c.dataset.test_labels;
    dataset["train_subset"] = c.dataset.train_subset;
    dataset["test_subset"] = c.dataset.test_subset;
  } else {
    dataset["dim"] = c.dataset.dim;
    dataset["num_classes"] = c.dataset.num_classes;
    dataset["center_scale"] = c.dataset.center_scale;
    dataset["noise_sigma"] = c.dataset.noise_sigma;
    dataset["samples_per_chunk"] = c.dataset.samples_per_chunk;
    dataset["drift_period"] = c.dataset.drift_period;
    dataset["num_chunks"] = c.dataset.num_chunks;
  }

  json minibatch{{"mode", c.minibatch.mode}};
  if (c.minibatch.mode == "fixed") {
    minibatch["n"] = c.minibatch.n;
  } else if (c.minibatch.mode == "gaussian") {
    minibatch["mu"] = c.minibatch.mu;
    minibatch["sigma"] = c.minibatch.sigma;
  } else if (c.minibatch.mode == "mixed") {
    json groups = json::array();
    for (const auto& [count, n] : c.minibatch.groups)
      groups.push_back(json{{"count", count}, {"n", n}});
    minibatch["groups"] = groups;
  }

  json staleness{{"kind", c.staleness.kind}};
  if (c.staleness.kind == "gaussian" || c.staleness.kind == "gaussian_longtail") {
    staleness["mu"] = c.staleness.mu;
    staleness["sigma"] = c.staleness.sigma;
  }
  if (c.staleness.kind == "gaussian_longtail") {
    staleness["tail_labels"] = c.staleness.tail_labels;
    staleness["tail_value"] = c.staleness.tail_value;
  }
  if (c.staleness.kind == "exponential_latency") {
    staleness["min_s"] = c.staleness.min_s;
    staleness["mean_s"] = c.staleness.mean_s;
  }

  return json{
      {"preset", c.preset},
      {"dataset", dataset},
      {"model", json{{"hidden_dim", c.model.hidden_dim}, {"activation", c.model.activation}}},
      {"partition", c.partition},
      {"num_users", c.num_users},
      {"fleet", c.fleet},
      {"policy", c.policy},
      {"s_percent", c.s_percent},
      {"staleness_window", c.staleness_window},
      {"bootstrap_len", c.bootstrap_len},
      {"K", c.K},
      {"lr", c.lr},
      {"minibatch", minibatch},
      {"staleness", staleness},
      {"controller", json{{"size_threshold", threshold_json(c.controller.size_threshold)},
                          {"sim_threshold", threshold_json(c.controller.sim_threshold)},
                          {"t_slo", c.controller.t_slo},
                          {"e_slo", c.controller.e_slo}}},
      {"cadence", json{{"mode", c.cadence.mode}, {"period", c.cadence.period}}},
      {"perturb", json{{"enabled", c.perturb.enabled},
                       {"clip_norm", c.perturb.clip_norm},
                       {"sigma", c.perturb.sigma}}},
      {"profiler", json{{"enabled", c.profiler.enabled},
                        {"round_robin_baseline", c.profiler.round_robin_baseline},
                        {"epsilon_time", c.profiler.epsilon_time},
                        {"epsilon_energy", c.profiler.epsilon_energy},
                        {"ridge", c.profiler.ridge},
                        {"retrain_every", c.profiler.retrain_every},
                        {"pretrain_fleet", c.profiler.pretrain_fleet},
                        {"pretrain_seed", c.profiler.pretrain_seed}}},
      {"seeds", c.seeds},
      {"eval_every", c.eval_every},
      {"record_recall", c.record_recall},
      {"max_updates", c.max_updates},
      {"max_requests_per_worker", c.max_requests_per_worker},
      {"arrival_mean_gap_s", c.arrival_mean_gap_s},
      {"retry_rejected", c.retry_rejected},
      {"snapshot_capacity", c.snapshot_capacity},
      {"output_dir", c.output_dir},
      {"artifact_version", c.artifact_version},
  };
}

// ---------------------------------------------------------------------------
// Overrides: --override a.b.c=value becomes a one-field patch document
// ---------------------------------------------------------------------------

inline json override_patch(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override '" + kv + "' is not key=value");
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare words are strings (policy=adasgd)
  }

  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(key.substr(start));
      break;
    }
    parts.push_back(key.substr(start, dot - start));
    start = dot + 1;
  }
  for (const auto& p : parts)
    if (p.empty()) throw std::invalid_argument("override '" + kv + "' has an empty key segment");

  json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  return patch;
}

// ---------------------------------------------------------------------------
// Semantic validation (syntax/keys were checked during patching)
// ---------------------------------------------------------------------------

inline void validate_config(const ExperimentConfig& c) {
  namespace cd = cfgdetail;
  auto one_of = [](const std::string& v, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
      if (v == a) return true;
    return false;
  };

  if (c.preset.empty()) cd::fail("preset", "must not be empty");
  if (!one_of(c.dataset.kind, {"synthetic", "mnist", "drifting"}))
    cd::fail("dataset.kind", "expected synthetic, mnist, or drifting");
  if (!one_of(c.partition, {"noniid", "iid"})) cd::fail("partition", "expected noniid or iid");
  if (!one_of(c.policy, {"adasgd", "dynsgd", "ssgd", "fedavg", "unit"}))
    cd::fail("policy", "expected adasgd, dynsgd, ssgd, fedavg, or unit");
  if (!one_of(c.model.activation, {"relu", "tanh"}))
    cd::fail("model.activation", "expected relu or tanh");
  if (!one_of(c.minibatch.mode, {"fixed", "gaussian", "profiler", "mixed"}))
    cd::fail("minibatch.mode", "expected fixed, gaussian, profiler, or mixed");
  if (!one_of(c.staleness.kind, {"none", "gaussian", "gaussian_longtail", "exponential_latency"}))
    cd::fail("staleness.kind",
             "expected none, gaussian, gaussian_longtail, or exponential_latency");
  if (!one_of(c.cadence.mode, {"online", "batched"}))
    cd::fail("cadence.mode", "expected online or batched");
  if (!one_of(c.fleet, {"default10", "pretrain5"}))
    cd::fail("fleet", "expected default10 or pretrain5");
  if (!one_of(c.profiler.pretrain_fleet, {"default10", "pretrain5"}))
    cd::fail("profiler.pretrain_fleet", "expected default10 or pretrain5");

  if (c.dataset.kind == "synthetic") {
    if (c.dataset.dim == 0 || c.dataset.num_classes < 2 || c.dataset.train_size == 0 ||
        c.dataset.test_size == 0)
      cd::fail("dataset", "synthetic sizes must be positive (num_classes >= 2)");
  } else if (c.dataset.kind == "mnist") {
    if (c.dataset.train_images.empty() || c.dataset.train_labels.empty() ||
        c.dataset.test_images.empty() || c.dataset.test_labels.empty())
      cd::fail("dataset", "mnist requires all four IDX paths");
    if (c.dataset.train_subset == 0 || c.dataset.test_subset == 0)
      cd::fail("dataset", "mnist subsets must be positive");
  } else {  // drifting
    if (c.dataset.dim == 0 || c.dataset.num_classes < 2 || c.dataset.samples_per_chunk == 0 ||
        c.dataset.num_chunks == 0)
      cd::fail("dataset", "drifting stream sizes must be positive (num_classes >= 2)");
  }

  if (c.cadence.mode == "batched") {
    if (c.dataset.kind != "drifting")
      cd::fail("cadence.mode", "batched cadence requires a drifting dataset");
    if (c.cadence.period == 0) cd::fail("cadence.period", "must be >= 1");
  }
  if (c.dataset.kind != "drifting" && c.cadence.mode != "online")
    cd::fail("cadence.mode", "only online cadence applies to this dataset");

  if (c.dataset.kind != "drifting") {
    if (c.num_users == 0) cd::fail("num_users", "must be >= 1");
    if (c.max_updates == 0 && c.max_requests_per_worker == 0)
      cd::fail("max_updates", "need max_updates or max_requests_per_worker as a stop condition");
  }
  if (!(c.s_percent > 0.0) || c.s_percent > 100.0)
    cd::fail("s_percent", "must be in (0, 100]");
  if (c.staleness_window == 0) cd::fail("staleness_window", "must be >= 1");
  if (c.K == 0) cd::fail("K", "must be >= 1");
  if (!(c.lr > 0.0)) cd::fail("lr", "must be > 0");
  if (c.minibatch.mode == "fixed" && c.minibatch.n == 0) cd::fail("minibatch.n", "must be >= 1");
  if (c.minibatch.mode == "gaussian" && (!(c.minibatch.mu > 0.0) || c.minibatch.sigma < 0.0))
    cd::fail("minibatch", "gaussian mode needs mu > 0 and sigma >= 0");
  if (c.minibatch.mode == "profiler" && !c.profiler.enabled)
    cd::fail("minibatch.mode", "profiler sizing requires profiler.enabled = true");
  if (c.minibatch.mode == "mixed") {
    if (c.minibatch.groups.empty()) cd::fail("minibatch.groups", "must not be empty");
    std::size_t total = 0;
    for (const auto& [count, n] : c.minibatch.groups) {
      if (n == 0) cd::fail("minibatch.groups", "every group needs n >= 1");
      total += count;
    }
    if (total != c.num_users)
      cd::fail("minibatch.groups", "group counts must sum to num_users");
  }
  if (c.staleness.sigma < 0.0) cd::fail("staleness.sigma", "must be >= 0");
  if (c.staleness.kind == "gaussian_longtail") {
    if (c.staleness.tail_labels.empty())
      cd::fail("staleness.tail_labels", "long tail needs at least one label");
    if (c.staleness.tail_value < 0.0) cd::fail("staleness.tail_value", "must be >= 0");
  }
  if (c.staleness.kind == "exponential_latency" && !(c.staleness.mean_s > c.staleness.min_s))
    cd::fail("staleness.mean_s", "must exceed staleness.min_s");
  try {
    c.controller.validate();
  } catch (const std::invalid_argument& e) {
    cd::fail("controller", e.what());
  }
  if (c.perturb.enabled) {
    if (!(c.perturb.clip_norm > 0.0)) cd::fail("perturb.clip_norm", "must be > 0");
    if (c.perturb.sigma < 0.0) cd::fail("perturb.sigma", "must be >= 0");
  }
  if (c.profiler.enabled) {
    if (!(c.profiler.epsilon_time >= 0.0) || !(c.profiler.epsilon_energy >= 0.0))
      cd::fail("profiler", "epsilons must be >= 0");
    if (!(c.profiler.ridge >= 0.0)) cd::fail("profiler.ridge", "must be >= 0");
  }
  if (c.seeds.empty()) cd::fail("seeds", "must list at least one seed");
  if (!(c.arrival_mean_gap_s > 0.0)) cd::fail("arrival_mean_gap_s", "must be > 0");
  if (c.snapshot_capacity == 0) cd::fail("snapshot_capacity", "must be >= 1");
  if (c.output_dir.empty()) cd::fail("output_dir", "must not be empty");
}

// ---------------------------------------------------------------------------
// Mapping to the simulation layer
// ---------------------------------------------------------------------------

struct PolicyMapping {
  DampeningPolicy policy = DampeningPolicy::Unit;
  bool use_similarity = false;
  bool average = false;
};

// adasgd = exponential dampening + similarity boost; dynsgd = inverse decay;
// ssgd = synchronous drop; fedavg = averaged rounds (set K = num_users for
// full participation); unit = no weighting at all.
inline PolicyMapping policy_mapping(const std::string& name) {
  if (name == "adasgd") return {DampeningPolicy::AdaSgdExponential, true, false};
  if (name == "dynsgd") return {DampeningPolicy::DynSgdInverse, false, false};
  if (name == "ssgd") return {DampeningPolicy::Synchronous, false, false};
  if (name == "fedavg") return {DampeningPolicy::Unit, false, true};
  if (name == "unit") return {DampeningPolicy::Unit, false, false};
  throw std::invalid_argument("unknown policy: " + name);
}

inline StalenessModel to_staleness_model(const StalenessConfig& s) {
  StalenessModel m;
  if (s.kind == "none") m.kind = StalenessModel::Kind::none;
  else if (s.kind == "gaussian") m.kind = StalenessModel::Kind::gaussian;
  else if (s.kind == "gaussian_longtail") m.kind = StalenessModel::Kind::gaussian_longtail;
  else if (s.kind == "exponential_latency") m.kind = StalenessModel::Kind::exponential_latency;
  else throw std::invalid_argument("unknown staleness kind: " + s.kind);
  m.mu = s.mu;
  m.sigma = s.sigma;
  m.tail_labels = s.tail_labels;
  m.tail_value = s.tail_value;
  m.min_s = s.min_s;
  m.mean_s = s.mean_s;
  return m;
}

inline bool is_chunked_run(const ExperimentConfig& c) { return c.dataset.kind == "drifting"; }

inline ModelSpec to_model_spec(const ExperimentConfig& c) {
  ModelSpec spec;
  spec.input_dim = c.dataset.dim;
  spec.hidden_dim = c.model.hidden_dim;
  spec.num_classes = c.dataset.num_classes;
  spec.activation = c.model.activation == "tanh" ? Activation::tanh : Activation::relu;
  return spec;
}

inline AggregatorConfig to_aggregator_config(const ExperimentConfig& c) {
  const PolicyMapping map = policy_mapping(c.policy);
  AggregatorConfig a;
  a.policy = map.policy;
  a.use_similarity = map.use_similarity;
  a.average = map.average;
  a.K = c.K;
  a.lr = c.lr;
  a.num_classes = c.dataset.num_classes;
  a.staleness_window = c.staleness_window;
  a.s_percent = c.s_percent;
  a.bootstrap_len = c.bootstrap_len;
  return a;
}

inline OnlineRunConfig to_online_config(const ExperimentConfig& c) {
  if (is_chunked_run(c))
    throw std::invalid_argument("drifting datasets run on the chunked cadence driver");
  OnlineRunConfig r;
  r.model = to_model_spec(c);
  r.aggregator = to_aggregator_config(c);
  r.controller = c.controller;
  r.staleness = to_staleness_model(c.staleness);
  r.partition = c.partition == "iid" ? PartitionKind::iid : PartitionKind::noniid;

  if (c.minibatch.mode == "mixed") {
    for (const auto& [count, n] : c.minibatch.groups) {
      WorkerGroup g;
      g.count = count;
      g.minibatch.kind = SizingMode::Kind::fixed;
      g.minibatch.fixed_n = n;
      r.groups.push_back(g);
    }
  } else {
    WorkerGroup g;
    g.count = c.num_users;
    if (c.minibatch.mode == "fixed") {
      g.minibatch.kind = SizingMode::Kind::fixed;
      g.minibatch.fixed_n = c.minibatch.n;
    } else if (c.minibatch.mode == "gaussian") {
      g.minibatch.kind = SizingMode::Kind::gaussian;
      g.minibatch.mu = c.minibatch.mu;
      g.minibatch.sigma = c.minibatch.sigma;
    } else {
      g.minibatch.kind = SizingMode::Kind::profiler;
    }
    r.groups.push_back(g);
  }

  r.fleet = c.fleet;
  r.arrival_mean_gap_s = c.arrival_mean_gap_s;
  r.max_updates = c.max_updates;
  r.max_requests_per_worker = c.max_requests_per_worker;
  r.eval_every = c.eval_every;
  r.record_recall = c.record_recall;
  r.profiler.enabled = c.profiler.enabled;
  r.profiler.round_robin_baseline = c.profiler.round_robin_baseline;
  r.profiler.config.epsilon_time = c.profiler.epsilon_time;
  r.profiler.config.epsilon_energy = c.profiler.epsilon_energy;
  r.profiler.config.ridge = c.profiler.ridge;
  r.profiler.config.retrain_every = c.profiler.retrain_every;
  r.profiler.pretrain_fleet = c.profiler.pretrain_fleet;
  r.profiler.pretrain_seed = c.profiler.pretrain_seed;
  r.perturb.enabled = c.perturb.enabled;
  r.perturb.clip_norm = c.perturb.clip_norm;
  r.perturb.sigma = c.perturb.sigma;
  r.snapshot_capacity = c.snapshot_capacity;
  r.retry_rejected = c.retry_rejected;
  return r;
}

inline ChunkedRunConfig to_chunked_config(const ExperimentConfig& c) {
  if (!is_chunked_run(c))
    throw std::invalid_argument("the chunked driver needs a drifting dataset");
  ChunkedRunConfig r;
  r.model = to_model_spec(c);
  r.aggregator = to_aggregator_config(c);
  r.stream.dim = c.dataset.dim;
  r.stream.num_classes = c.dataset.num_classes;
  r.stream.samples_per_chunk = c.dataset.samples_per_chunk;
  r.stream.drift_period = c.dataset.drift_period;
  r.stream.center_scale = c.dataset.center_scale;
  r.stream.noise_sigma = c.dataset.noise_sigma;
  r.num_chunks = c.dataset.num_chunks;
  r.batch_period = c.cadence.mode == "batched" ? c.cadence.period : 0;
  return r;
}

// First n rows of a dataset (used to cut full IDX files down to desk scale).
inline Dataset dataset_head(const Dataset& d, std::size_t n) {
  if (n == 0 || n > d.size())
    throw std::invalid_argument("dataset subset must be within 1.." + std::to_string(d.size()));
  Dataset out;
  out.dim = d.dim;
  out.num_classes = d.num_classes;
  out.features.assign(d.features.begin(),
                      d.features.begin() + static_cast<std::ptrdiff_t>(n * d.dim));
  out.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

// Materialize the (train, test) pair an online run trains against.
inline std::pair<Dataset, Dataset> load_dataset(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.dataset.kind == "synthetic") {
    SyntheticSpec spec;
    spec.dim = c.dataset.dim;
    spec.num_classes = c.dataset.num_classes;
    spec.train_size = c.dataset.train_size;
    spec.test_size = c.dataset.test_size;
    spec.center_scale = c.dataset.center_scale;
    spec.noise_sigma = c.dataset.noise_sigma;
    return make_synthetic(spec, seed);
  }
  if (c.dataset.kind == "mnist") {
    Dataset train = load_idx(c.dataset.train_images, c.dataset.train_labels);
    Dataset test = load_idx(c.dataset.test_images, c.dataset.test_labels);
    return {dataset_head(train, c.dataset.train_subset),
            dataset_head(test, c.dataset.test_subset)};
  }
  throw std::invalid_argument("drifting datasets stream; there is no static pair to load");
}

inline std::string run_id_for(const ExperimentConfig& c, std::uint64_t seed) {
  return c.preset + "_" + std::to_string(seed);
}

// ---------------------------------------------------------------------------
// Presets: desk-scale experiments with documented intent
// ---------------------------------------------------------------------------

namespace preset_detail {

// Shared base: synthetic 10k/2k stand-in for the usual image subset (this
// sandbox has no dataset downloads), MLP with one hidden layer of 64, 20
// non-IID users, K = 1, lr 5e-4.
inline ExperimentConfig classification_base() {
  ExperimentConfig c;
  c.dataset.kind = "synthetic";
  c.model.hidden_dim = 64;
  c.partition = "noniid";
  c.num_users = 20;
  c.policy = "adasgd";
  c.K = 1;
  c.lr = 5e-4;
  c.minibatch.mode = "fixed";
  c.minibatch.n = 100;
  c.staleness.kind = "gaussian";
  c.staleness.mu = 6.0;
  c.staleness.sigma = 2.0;
  c.seeds = {1, 2, 3};
  c.eval_every = 25;
  c.max_updates = 4000;
  return c;
}

}  // namespace preset_detail

inline ExperimentConfig make_preset(const std::string& name) {
  using preset_detail::classification_base;

  if (name == "staleness-d1") {
    ExperimentConfig c = classification_base();
    c.preset = name;
    return c;  // gaussian(6, 2) staleness is the base
  }
  if (name == "staleness-d2") {
    ExperimentConfig c = classification_base();
    c.preset = name;
    c.staleness.mu = 12.0;
    c.staleness.sigma = 4.0;
    return c;
  }
  if (name == "longtail") {
    ExperimentConfig c = classification_base();
    c.preset = name;
    c.staleness.kind = "gaussian_longtail";
    c.staleness.tail_labels = {0};
    c.staleness.tail_value = 48.0;
    c.s_percent = 90.0;
    c.record_recall = true;
    return c;
  }
  if (name == "weak-workers") {
    ExperimentConfig c = classification_base();
    c.preset = name;
    c.policy = "unit";
    c.staleness.kind = "none";
    c.num_users = 12;
    c.minibatch.mode = "mixed";
    c.minibatch.groups = {{10, 128}, {2, 1}};
    c.max_updates = 1500;
    return c;
  }
  if (name == "profiler-slo") {
    ExperimentConfig c;
    c.preset = name;
    c.dataset.kind = "synthetic";
    c.dataset.dim = 16;
    c.dataset.num_classes = 4;
    c.dataset.train_size = 4000;
    c.dataset.test_size = 800;
    c.dataset.center_scale = 10.0;
    c.dataset.noise_sigma = 2.0;
    c.model.hidden_dim = 0;
    c.partition = "iid";
    c.num_users = 10;
    c.policy = "unit";
    c.staleness.kind = "none";
    c.minibatch.mode = "profiler";
    c.profiler.enabled = true;
    c.profiler.round_robin_baseline = true;
    c.controller.t_slo = 3.0;
    c.controller.e_slo = 1e9;
    c.max_requests_per_worker = 15;
    c.max_updates = 1000000;  // the request budget is the real stop condition
    c.eval_every = 0;
    c.seeds = {1, 2, 3};
    return c;
  }
  if (name == "threshold-pruning") {
    ExperimentConfig c = classification_base();
    c.preset = name;
    c.minibatch.mode = "gaussian";
    c.minibatch.mu = 100.0;
    c.minibatch.sigma = 33.0;
    c.controller.size_threshold = ThresholdMode::percentile(20.0);
    c.max_updates = 2000;
    return c;
  }
  if (name == "cadence") {
    ExperimentConfig c;
    c.preset = name;
    c.dataset.kind = "drifting";
    c.dataset.dim = 16;
    c.dataset.num_classes = 5;
    c.dataset.center_scale = 6.0;
    c.dataset.noise_sigma = 1.0;
    c.dataset.samples_per_chunk = 64;
    c.dataset.drift_period = 24;
    c.dataset.num_chunks = 240;
    c.model.hidden_dim = 0;
    c.policy = "unit";
    c.K = 1;
    c.lr = 0.05;
    c.cadence.mode = "online";
    c.seeds = {1, 2, 3};
    return c;
  }
  if (name == "dp-noise") {
    ExperimentConfig c = classification_base();
    c.preset = name;
    c.partition = "iid";
    c.staleness.mu = 12.0;
    c.staleness.sigma = 4.0;
    c.perturb.enabled = true;
    c.perturb.clip_norm = 1.0;
    c.perturb.sigma = 0.01;
    return c;
  }
  throw std::invalid_argument("unknown preset: " + name);
}

inline std::vector<std::pair<std::string, std::string>> preset_list() {
  return {
      {"staleness-d1",
       "Similarity-boosted exponential dampening under moderate staleness (mean 6, sd 2); "
       "synthetic 10k/2k classification stand-in, non-IID, 20 users."},
      {"staleness-d2",
       "Same lab under heavier staleness (mean 12, sd 4); compare policies via "
       "--override policy=dynsgd|ssgd|fedavg."},
      {"longtail",
       "Class 0 always arrives with staleness 48; records per-class recall to "
       "show dampening-vs-boosting on rare data."},
      {"weak-workers",
       "10 workers at batch 128 plus 2 at batch 1, no weighting: tiny batches "
       "add noise and motivate the size threshold."},
      {"profiler-slo",
       "SLO-sized batches on a 10-device fleet (7x speed spread), 15 requests "
       "each, alternating the feature-aware and feature-blind sizers."},
      {"threshold-pruning",
       "Batch sizes ~ N(100, 33) with a 20th-percentile size gate; compare "
       "against --override controller.size_threshold.fixed=0."},
      {"cadence",
       "Drifting stream, immediate updates; compare against "
       "--override cadence.mode=batched (period 24) at equal gradient budget."},
      {"dp-noise",
       "Heavy staleness plus clipped, noised gradients (clip 1.0, sigma 0.01) "
       "on an IID partition."},
  };
}

}  // namespace fedsim
