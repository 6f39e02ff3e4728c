#ifndef THREDKIT_TRAIN_HPP
#define THREDKIT_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thredkit/checkpoint.hpp"
#include "thredkit/model.hpp"

namespace thredkit::train {

inline constexpr double default_lr = 2e-4;
inline constexpr std::uint64_t default_steps = 20000;

struct AdamOptions {
  double lr = default_lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment update of every parameter that has a
/// gradient buffer.
inline void adam_step(model::Model::ParamMap& params, AdamState& state, const AdamOptions& opt) {
  ++state.t;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto [mit, fresh] = state.m.try_emplace(name, Tensor(p.dims()));
    auto& m = mit->second.storage();
    auto& v = state.v.try_emplace(name, Tensor(p.dims())).first->second.storage();
    auto& w = p.mutable_value().storage();
    const auto& g = p.grad_storage();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      w[i] -= opt.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
    }
  }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`
/// (no-op when max_norm <= 0). Returns the norm before clipping.
inline double clip_gradients(model::Model::ParamMap& params, double max_norm) {
  double sq = 0.0;
  for (auto& [_, p] : params)
    for (double g : p.grad_storage()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, p] : params)
      for (double& g : p.grad_storage()) g *= s;
  }
  return norm;
}

struct TrainOptions {
  double lr = default_lr;
  std::uint64_t steps = default_steps;  // total optimizer steps, counted across resumes
  std::size_t batch = 16;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  std::size_t valid_limit = 0;  // 0 = whole validation set
};

/// One row of the training log.
struct EpochRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;     // global step at the end of the epoch
  double ce = 0.0;            // batch means averaged over the epoch
  double kl_global = 0.0;
  double topic_div = 0.0;     // mean topic divergence (thred), 0 otherwise
  double valid_loss = 0.0;    // NaN without a validation set
};

struct TrainResult {
  Checkpoint best;  // lowest validation loss (last epoch when there is no validation set)
  Checkpoint last;
  std::vector<EpochRecord> log;
  bool diverged = false;
  std::string divergence_component;
};

/// Validation objective with a fixed noise seed; no graph is recorded.
inline double evaluate_loss(const model::Model& m, std::span<const Example> data, std::size_t batch,
                            std::uint64_t step, std::uint64_t seed) {
  ad::NoGradGuard guard;
  Rng rng(seed);
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t i = 0; i < data.size(); i += batch) {
    const std::size_t n = std::min(batch, data.size() - i);
    total += m.loss(data.subspan(i, n), step, rng).total.item();
    ++batches;
  }
  return batches ? total / static_cast<double>(batches) : std::nan("");
}

/// Minibatch training with Adam. A non-finite loss stops training and is
/// reported through `diverged`; `last` then holds the last finite weights.
/// `on_epoch` is called after each logged epoch.
inline TrainResult train(const model::ModelConfig& config, const std::vector<Example>& train_set,
                         const std::vector<Example>& valid_set, const TrainOptions& opt,
                         std::shared_ptr<const topics::TopicProjector> topic_proj = nullptr,
                         const Checkpoint* resume = nullptr, std::vector<std::string> vocab = {},
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (train_set.empty()) throw EmptyCorpusError("train: no training examples");
  if (opt.batch == 0) throw ConfigError("train: batch must be >= 1");
  if (!(opt.lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (config.variant == model::Variant::thred && !topic_proj) throw ConfigError("thred requires a topic model");

  model::Model m = resume ? resume->instantiate() : model::Model(config, opt.seed);
  if (resume && !(resume->config == config)) throw ConfigError("train: resume checkpoint has a different config");
  if (topic_proj) m.set_topics(topic_proj);
  AdamState adam = resume ? resume->optimizer : AdamState{};
  std::uint64_t step = resume ? resume->global_step : 0;
  const AdamOptions adam_opt{opt.lr};

  // noise stream continues deterministically from the resume point
  Rng rng(opt.seed * 0x9E3779B97F4A7C15ull + step);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Example> valid(valid_set.begin(),
                             valid_set.begin() + static_cast<std::ptrdiff_t>(
                                                     opt.valid_limit ? std::min(opt.valid_limit, valid_set.size())
                                                                     : valid_set.size()));

  TrainResult result;
  double best_valid = std::numeric_limits<double>::infinity();
  bool have_best = false;
  std::size_t epoch = 0;
  std::vector<Example> batch;
  while (step < opt.steps && !result.diverged) {
    rng.shuffle(order);
    double ce = 0.0, klg = 0.0, kll = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size() && step < opt.steps; i += opt.batch) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + opt.batch); ++j) batch.push_back(train_set[order[j]]);
      m.zero_grad();
      try {
        auto l = m.loss(batch, step, rng);
        ad::backward(l.total);
        ce += l.ce;
        klg += l.kl_global;
        kll += l.kl_local;
      } catch (const DivergenceError& e) {
        result.diverged = true;
        result.divergence_component = e.component();
        break;
      }
      clip_gradients(m.params(), opt.clip_norm);
      adam_step(m.params(), adam, adam_opt);
      ++step;
      ++batches;
    }
    if (batches == 0) break;
    const double inv = 1.0 / static_cast<double>(batches);
    EpochRecord rec{epoch++, step, ce * inv, klg * inv, kll * inv, std::nan("")};
    if (!valid.empty()) {
      try {
        rec.valid_loss = evaluate_loss(m, valid, opt.batch, step, opt.seed + 1);
      } catch (const DivergenceError& e) {
        result.diverged = true;
        result.divergence_component = e.component();
      }
    }
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const bool improved = valid.empty() || (std::isfinite(rec.valid_loss) && rec.valid_loss < best_valid);
    if (improved && !result.diverged) {
      best_valid = valid.empty() ? best_valid : rec.valid_loss;
      result.best = make_checkpoint(m, adam, step, vocab);
      have_best = true;
    }
  }
  result.last = make_checkpoint(m, adam, step, vocab);
  if (!have_best) result.best = result.last;
  return result;
}

}  // namespace thredkit::train

#endif  // THREDKIT_TRAIN_HPP
