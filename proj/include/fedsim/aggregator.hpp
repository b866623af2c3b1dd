#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fedsim/label_distribution.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/staleness.hpp"

namespace fedsim {

// A gradient as it arrives at the server. pulled_clock is the model version
// the worker computed against; label_counts histogram the mini-batch.
struct GradientResult {
  int worker_id = 0;
  std::uint64_t pulled_clock = 0;
  std::vector<double> grad;
  LabelCounts label_counts;
  std::size_t batch_size = 0;
};

// Per-result bookkeeping attached to the update that consumed it.
struct Contribution {
  int worker_id = 0;
  double tau = 0.0;
  double lambda = 1.0;
  double sim = 0.0;
  double weight = 1.0;
  std::size_t batch_size = 0;
  std::optional<double> tau_thres;
};

struct UpdateReport {
  std::uint64_t update_index = 0;  // model clock after this update
  std::vector<Contribution> contributions;
};

struct AggregatorConfig {
  DampeningPolicy policy = DampeningPolicy::Unit;
  bool use_similarity = false;  // boost weights by 1/sim (capped at 1)
  bool average = false;         // divide the update direction by K
  std::size_t K = 1;            // results consumed per model update
  double lr = 1e-3;
  std::size_t num_classes = 0;
  std::size_t staleness_window = 1000;
  double s_percent = 99.7;
  std::size_t bootstrap_len = 100;
};

// Owns the served model. Results are submitted one at a time; every K-th
// accepted result triggers one model update. Single-writer by construction:
// all mutation happens inside submit().
class Aggregator {
 public:
  Aggregator(AggregatorConfig cfg, ModelParams initial)
      : cfg_(cfg),
        model_(std::move(initial)),
        tracker_(cfg.staleness_window, cfg.s_percent, cfg.bootstrap_len),
        global_counts_(cfg.num_classes, 0) {
    if (cfg_.K == 0) throw std::invalid_argument("Aggregator: K must be >= 1");
    if (cfg_.num_classes < 2) throw std::invalid_argument("Aggregator: num_classes must be >= 2");
    if (!(cfg_.lr > 0.0) || !std::isfinite(cfg_.lr))
      throw std::invalid_argument("Aggregator: lr must be positive and finite");
    pending_.reserve(cfg_.K);
  }

  const ModelParams& model() const { return model_; }
  const AggregatorConfig& config() const { return cfg_; }
  const LabelCounts& global_label_counts() const { return global_counts_; }
  std::uint64_t consumed_results() const { return consumed_; }
  std::size_t pending_count() const { return pending_.size(); }
  const StalenessTracker& tracker() const { return tracker_; }
  StalenessTracker& tracker() { return tracker_; }

  // Validates and buffers one result; applies a model update once K results
  // are pending and returns its report, nullopt otherwise.
  std::optional<UpdateReport> submit(GradientResult result) {
    if (result.grad.size() != model_.values.size())
      throw std::invalid_argument("submit: gradient length does not match model");
    if (result.label_counts.size() != cfg_.num_classes)
      throw std::invalid_argument("submit: label_counts size does not match num_classes");
    if (result.batch_size == 0 || total_count(result.label_counts) != result.batch_size)
      throw std::invalid_argument("submit: label_counts must sum to a positive batch_size");
    if (result.pulled_clock > model_.clock)
      throw std::invalid_argument("submit: result pulled_clock is in the future");

    const double tau = static_cast<double>(model_.clock - result.pulled_clock);
    if (cfg_.policy == DampeningPolicy::Synchronous && tau != 0.0)
      throw std::logic_error("submit: Synchronous policy requires pulled_clock == clock");

    Contribution c;
    c.worker_id = result.worker_id;
    c.tau = tau;
    c.batch_size = result.batch_size;
    c.tau_thres = tracker_.tau_threshold();  // percentile of *past* staleness
    c.lambda = dampening(cfg_.policy, tau, c.tau_thres);
    c.sim = similarity(result.label_counts, global_counts_);
    c.weight = cfg_.use_similarity ? combined_weight(c.lambda, c.sim) : c.lambda;
    tracker_.record(tau);

    pending_.push_back(std::move(result));
    pending_meta_.push_back(c);
    if (pending_.size() < cfg_.K) return std::nullopt;

    // Weighted sum in submission order, then one step of size lr.
    std::vector<double> direction(model_.values.size(), 0.0);
    for (std::size_t k = 0; k < pending_.size(); ++k) {
      const double w = pending_meta_[k].weight;
      const std::vector<double>& g = pending_[k].grad;
      for (std::size_t i = 0; i < direction.size(); ++i) direction[i] += w * g[i];
    }
    if (cfg_.average) {
      const double inv_k = 1.0 / static_cast<double>(cfg_.K);
      for (double& v : direction) v *= inv_k;
    }
    apply_step(model_, direction, cfg_.lr);

    for (const GradientResult& r : pending_) {
      for (std::size_t i = 0; i < cfg_.num_classes; ++i)
        global_counts_[i] += r.label_counts[i];
      ++consumed_;
    }

    UpdateReport report{model_.clock, std::move(pending_meta_)};
    pending_.clear();
    pending_meta_ = {};
    return report;
  }

 private:
  AggregatorConfig cfg_;
  ModelParams model_;
  StalenessTracker tracker_;
  std::vector<GradientResult> pending_;
  std::vector<Contribution> pending_meta_;
  LabelCounts global_counts_;
  std::uint64_t consumed_ = 0;
};

// Clips the gradient to an L2 ball of radius clip_norm, then adds i.i.d.
// Gaussian noise with std sigma * clip_norm per coordinate. sigma = 0 leaves
// an in-ball gradient bitwise unchanged.
inline void perturb(std::vector<double>& grad, double clip_norm, double sigma, Rng& rng) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("perturb: clip_norm must be > 0");
  if (sigma < 0.0) throw std::invalid_argument("perturb: sigma must be >= 0");
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (double& g : grad) g *= scale;
  }
  if (sigma > 0.0) {
    const double noise = sigma * clip_norm;
    for (double& g : grad) g += rng.normal(0.0, noise);
  }
}

}  // namespace fedsim
