#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim {

enum class Activation { relu, tanh };

// Architecture of the classifier trained by the lab: multinomial logistic
// regression when hidden_dim == 0, otherwise a single-hidden-layer MLP.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // 0 = softmax regression
  std::size_t num_classes = 0;
  Activation activation = Activation::relu;

  std::size_t param_count() const {
    if (hidden_dim == 0) return input_dim * num_classes + num_classes;
    return input_dim * hidden_dim + hidden_dim + hidden_dim * num_classes + num_classes;
  }

  void validate() const {
    if (input_dim == 0) throw std::invalid_argument("ModelSpec: input_dim must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("ModelSpec: num_classes must be >= 2");
  }
};

// A mini-batch: row-major features (n x input_dim) plus integer labels.
struct Batch {
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Flat parameter vector plus the logical clock, incremented once per applied
// update. Layout: [W1 (input x hidden), b1, W2 (hidden x classes), b2] for the
// MLP; [W (input x classes), b] for softmax regression. Row-major throughout.
struct ModelParams {
  ModelSpec spec;
  std::vector<double> values;
  std::uint64_t clock = 0;
};

namespace detail {

inline void check_batch(const ModelSpec& spec, const Batch& batch) {
  if (batch.labels.empty()) throw std::invalid_argument("batch is empty");
  if (batch.features.size() != batch.labels.size() * spec.input_dim)
    throw std::invalid_argument("batch feature size does not match n * input_dim");
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes)
      throw std::invalid_argument("batch label out of range: " + std::to_string(y));
}

inline void check_params(const ModelParams& params) {
  params.spec.validate();
  if (params.values.size() != params.spec.param_count())
    throw std::invalid_argument("parameter vector length does not match spec");
}

// Computes class logits for one sample; `hidden` receives post-activation
// values (MLP only) and `pre` the pre-activation values.
inline void forward_sample(const ModelSpec& spec, const std::vector<double>& w,
                           const double* x, std::vector<double>& pre,
                           std::vector<double>& hidden, std::vector<double>& logits) {
  const std::size_t d = spec.input_dim, h = spec.hidden_dim, c = spec.num_classes;
  if (h == 0) {
    const double* bias = w.data() + d * c;
    for (std::size_t k = 0; k < c; ++k) logits[k] = bias[k];
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[i];
      const double* row = w.data() + i * c;
      for (std::size_t k = 0; k < c; ++k) logits[k] += xi * row[k];
    }
    return;
  }
  const double* w1 = w.data();
  const double* b1 = w1 + d * h;
  const double* w2 = b1 + h;
  const double* b2 = w2 + h * c;
  for (std::size_t j = 0; j < h; ++j) pre[j] = b1[j];
  for (std::size_t i = 0; i < d; ++i) {
    const double xi = x[i];
    const double* row = w1 + i * h;
    for (std::size_t j = 0; j < h; ++j) pre[j] += xi * row[j];
  }
  if (spec.activation == Activation::relu) {
    for (std::size_t j = 0; j < h; ++j) hidden[j] = pre[j] > 0.0 ? pre[j] : 0.0;
  } else {
    for (std::size_t j = 0; j < h; ++j) hidden[j] = std::tanh(pre[j]);
  }
  for (std::size_t k = 0; k < c; ++k) logits[k] = b2[k];
  for (std::size_t j = 0; j < h; ++j) {
    const double hj = hidden[j];
    const double* row = w2 + j * c;
    for (std::size_t k = 0; k < c; ++k) logits[k] += hj * row[k];
  }
}

// Max-subtracted softmax; returns log(sum(exp(z - m))) and fills p.
inline double softmax(const std::vector<double>& logits, std::vector<double>& p) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return std::log(sum) + m;  // log-sum-exp, used for the sample loss
}

}  // namespace detail

// Zero-mean uniform init scaled by 1/sqrt(fan_in); biases start at zero.
inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams params{spec, std::vector<double>(spec.param_count(), 0.0), 0};
  Rng rng = Rng::derive(seed, /*stream=*/0x1717);
  const std::size_t d = spec.input_dim, h = spec.hidden_dim, c = spec.num_classes;
  if (h == 0) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < d * c; ++i) params.values[i] = rng.uniform(-s, s);
  } else {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < d * h; ++i) params.values[i] = rng.uniform(-s1, s1);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    double* w2 = params.values.data() + d * h + h;
    for (std::size_t i = 0; i < h * c; ++i) w2[i] = rng.uniform(-s2, s2);
  }
  return params;
}

// Mean cross-entropy over the batch; rows are accumulated in ascending order
// so the result is bitwise-reproducible for a given batch.
inline double loss(const ModelParams& params, const Batch& batch) {
  detail::check_params(params);
  detail::check_batch(params.spec, batch);
  const ModelSpec& spec = params.spec;
  const std::size_t n = batch.size();
  std::vector<double> pre(spec.hidden_dim), hidden(spec.hidden_dim), logits(spec.num_classes),
      p(spec.num_classes);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    detail::forward_sample(spec, params.values, batch.features.data() + r * spec.input_dim, pre,
                           hidden, logits);
    const double lse = detail::softmax(logits, p);
    total += lse - logits[batch.labels[r]];
  }
  return total / static_cast<double>(n);
}

// Exact gradient of `loss` w.r.t. the flat parameter vector (mean over the
// batch, same layout as ModelParams::values). Per-sample contributions are
// accumulated in ascending row order.
inline std::vector<double> gradient(const ModelParams& params, const Batch& batch) {
  detail::check_params(params);
  detail::check_batch(params.spec, batch);
  const ModelSpec& spec = params.spec;
  const std::size_t d = spec.input_dim, h = spec.hidden_dim, c = spec.num_classes;
  const std::size_t n = batch.size();
  std::vector<double> grad(params.values.size(), 0.0);
  std::vector<double> pre(h), hidden(h), logits(c), p(c), dz1(h);

  for (std::size_t r = 0; r < n; ++r) {
    const double* x = batch.features.data() + r * d;
    detail::forward_sample(spec, params.values, x, pre, hidden, logits);
    detail::softmax(logits, p);
    p[batch.labels[r]] -= 1.0;  // dL/dlogits for this sample

    if (h == 0) {
      double* gw = grad.data();
      double* gb = grad.data() + d * c;
      for (std::size_t i = 0; i < d; ++i) {
        const double xi = x[i];
        double* row = gw + i * c;
        for (std::size_t k = 0; k < c; ++k) row[k] += xi * p[k];
      }
      for (std::size_t k = 0; k < c; ++k) gb[k] += p[k];
      continue;
    }

    const double* w2 = params.values.data() + d * h + h;
    double* gw1 = grad.data();
    double* gb1 = grad.data() + d * h;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + h * c;
    for (std::size_t j = 0; j < h; ++j) {
      const double hj = hidden[j];
      const double* wrow = w2 + j * c;
      double* grow = gw2 + j * c;
      double acc = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        grow[k] += hj * p[k];
        acc += wrow[k] * p[k];
      }
      if (spec.activation == Activation::relu) {
        dz1[j] = pre[j] > 0.0 ? acc : 0.0;
      } else {
        dz1[j] = acc * (1.0 - hidden[j] * hidden[j]);
      }
      gb1[j] += dz1[j];
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[i];
      double* row = gw1 + i * h;
      for (std::size_t j = 0; j < h; ++j) row[j] += xi * dz1[j];
    }
    for (std::size_t k = 0; k < c; ++k) gb2[k] += p[k];
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& g : grad) g *= inv_n;
  return grad;
}

// params <- params - scale * direction; advances the logical clock by one.
inline void apply_step(ModelParams& params, const std::vector<double>& direction, double scale) {
  if (direction.size() != params.values.size())
    throw std::invalid_argument("apply_step: direction length does not match parameters");
  if (!std::isfinite(scale)) throw std::invalid_argument("apply_step: scale must be finite");
  for (std::size_t i = 0; i < direction.size(); ++i) params.values[i] -= scale * direction[i];
  ++params.clock;
}

// Central-difference gradient check: max over parameters of
// |analytic - numeric| / max(|numeric|, 1e-4). Cost is O(P^2 * n); intended
// for the small specs used in tests.
inline double finite_diff_check(const ModelParams& params, const Batch& batch, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");
  const std::vector<double> analytic = gradient(params, batch);
  ModelParams probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.values.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + step;
    const double up = loss(probe, batch);
    probe.values[i] = saved - step;
    const double down = loss(probe, batch);
    probe.values[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(analytic[i] - numeric) / std::max(std::abs(numeric), 1e-4);
    worst = std::max(worst, rel);
  }
  return worst;
}

// --- Evaluation helpers -----------------------------------------------------

inline int predict_one(const ModelParams& params, const double* x) {
  const ModelSpec& spec = params.spec;
  std::vector<double> pre(spec.hidden_dim), hidden(spec.hidden_dim), logits(spec.num_classes);
  detail::forward_sample(spec, params.values, x, pre, hidden, logits);
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

inline double accuracy(const ModelParams& params, const std::vector<double>& features,
                       const std::vector<int>& labels) {
  detail::check_params(params);
  if (labels.empty()) throw std::invalid_argument("accuracy: empty evaluation set");
  const std::size_t d = params.spec.input_dim;
  std::vector<double> pre(params.spec.hidden_dim), hidden(params.spec.hidden_dim),
      logits(params.spec.num_classes);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    detail::forward_sample(params.spec, params.values, features.data() + r * d, pre, hidden,
                           logits);
    const int yhat =
        static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (yhat == labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Per-class recall (correct / actual); classes absent from the set get 0.
inline std::vector<double> per_class_recall(const ModelParams& params,
                                            const std::vector<double>& features,
                                            const std::vector<int>& labels) {
  detail::check_params(params);
  if (labels.empty()) throw std::invalid_argument("per_class_recall: empty evaluation set");
  const std::size_t d = params.spec.input_dim, c = params.spec.num_classes;
  std::vector<double> pre(params.spec.hidden_dim), hidden(params.spec.hidden_dim), logits(c);
  std::vector<std::size_t> hits(c, 0), total(c, 0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw std::invalid_argument("per_class_recall: label out of range");
    detail::forward_sample(params.spec, params.values, features.data() + r * d, pre, hidden,
                           logits);
    const int yhat =
        static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    ++total[y];
    if (yhat == y) ++hits[y];
  }
  std::vector<double> recall(c, 0.0);
  for (std::size_t k = 0; k < c; ++k)
    if (total[k] > 0) recall[k] = static_cast<double>(hits[k]) / static_cast<double>(total[k]);
  return recall;
}

inline double accuracy(const ModelParams& params, const Batch& b) {
  return accuracy(params, b.features, b.labels);
}

inline std::vector<double> per_class_recall(const ModelParams& params, const Batch& b) {
  return per_class_recall(params, b.features, b.labels);
}

}  // namespace fedsim
