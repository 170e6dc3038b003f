#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pathcast/data.hpp"
#include "pathcast/io.hpp"
#include "pathcast/metrics.hpp"
#include "pathcast/model.hpp"

namespace pathcast {

struct TrainConfig {
  double learning_rate = 1e-2;
  double decay_rate = 0.9;  // per-epoch exponential decay
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t early_stop_window = 3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool oversample_positive = false;
  std::string early_stop_metric = "loss";
  double decision_threshold = 0.5;
  unsigned long long seed = 1;

  void validate() const {
    if (learning_rate <= 0.0 || decay_rate <= 0.0 || decay_rate > 1.0) {
      throw std::invalid_argument("train config: bad learning rate or decay");
    }
    if (batch_size == 0 || early_stop_window == 0) {
      throw std::invalid_argument("train config: batch_size and early_stop_window >= 1");
    }
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0 || epsilon <= 0.0) {
      throw std::invalid_argument("train config: bad Adam constants");
    }
    if (early_stop_metric != "loss") {
      throw std::invalid_argument("train config: unsupported early_stop_metric '" +
                                  early_stop_metric + "'");
    }
    if (decision_threshold <= 0.0 || decision_threshold >= 1.0) {
      throw std::invalid_argument("train config: decision threshold outside (0,1)");
    }
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"learning_rate", c.learning_rate},
                        {"decay_rate", c.decay_rate},
                        {"batch_size", c.batch_size},
                        {"max_epochs", c.max_epochs},
                        {"early_stop_window", c.early_stop_window},
                        {"beta1", c.beta1},
                        {"beta2", c.beta2},
                        {"epsilon", c.epsilon},
                        {"oversample_positive", c.oversample_positive},
                        {"early_stop_metric", c.early_stop_metric},
                        {"decision_threshold", c.decision_threshold},
                        {"seed", c.seed}};
}

// Missing keys keep their defaults; unknown keys are rejected so a typo
// cannot silently fall back to a default.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "learning_rate", "decay_rate",        "batch_size",        "max_epochs",
      "early_stop_window", "beta1",         "beta2",             "epsilon",
      "oversample_positive", "early_stop_metric", "decision_threshold", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("train config: unknown key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay_rate = j.value("decay_rate", c.decay_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_window = j.value("early_stop_window", c.early_stop_window);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.oversample_positive = j.value("oversample_positive", c.oversample_positive);
    c.early_stop_metric = j.value("early_stop_metric", c.early_stop_metric);
    c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument(std::string("train config: ") + ex.what());
  }
  c.validate();
  return c;
}

// He-normal weights (stddev sqrt(2 / fan_in)), zero biases; bit-identical
// for a fixed seed.
inline ParamMap init_params(const ModelConfig& cfg, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ParamMap params;
  for (const ParamSpec& spec : param_specs(cfg)) {
    Tensor t(spec.shape);
    if (spec.fan_in > 0) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
      for (double& x : t.values()) x = stddev * gauss(rng);
    }
    params.emplace(spec.name, std::move(t));
  }
  return params;
}

struct AdamState {
  std::map<std::string, Tensor> m, v;
  long long steps = 0;
};

// Standard Adam with bias correction; the effective learning rate is
// learning_rate * decay_rate^epoch. Returns false without touching any
// parameter when a gradient is non-finite (the step is skipped).
inline bool adam_step(ParamMap& params, const GradientMap& grads, AdamState& state,
                      const TrainConfig& cfg, std::size_t epoch) {
  cfg.validate();
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end() || !it->second.same_shape(g)) {
      throw std::invalid_argument("adam_step: gradient/parameter mismatch for '" + name + "'");
    }
    if (!g.all_finite()) return false;
  }
  ++state.steps;
  const double lr =
      cfg.learning_rate * std::pow(cfg.decay_rate, static_cast<double>(epoch));
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
  for (auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape())).first->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m.data()[i] / bc1;
      const double v_hat = v.data()[i] / bc2;
      p.data()[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  return true;
}

namespace detail {

inline PathRequest to_request(const PathInstance& inst,
                              const std::vector<std::vector<std::size_t>>& paths) {
  if (inst.path_id >= paths.size()) {
    throw std::invalid_argument("instance references unknown path " +
                                std::to_string(inst.path_id));
  }
  PathRequest req;
  req.t = inst.t;
  req.nodes = paths[inst.path_id];
  req.label = inst.label;
  req.tag = inst.path_id;
  return req;
}

// Groups instances by prediction time and emits chunks of at most
// batch_size, so every chunk shares one window encoding. When rng is given,
// group order and within-group order are shuffled reproducibly.
inline std::vector<std::vector<PathRequest>> time_batches(
    const std::vector<PathInstance>& instances,
    const std::vector<std::vector<std::size_t>>& paths, std::size_t batch_size,
    std::mt19937_64* rng) {
  std::map<std::size_t, std::vector<PathInstance>> by_time;
  for (const PathInstance& inst : instances) by_time[inst.t].push_back(inst);
  std::vector<std::size_t> times;
  times.reserve(by_time.size());
  for (const auto& [t, group] : by_time) times.push_back(t);
  if (rng) std::shuffle(times.begin(), times.end(), *rng);
  std::vector<std::vector<PathRequest>> batches;
  for (std::size_t t : times) {
    std::vector<PathInstance>& group = by_time[t];
    if (rng) std::shuffle(group.begin(), group.end(), *rng);
    for (std::size_t start = 0; start < group.size(); start += batch_size) {
      const std::size_t end = std::min(group.size(), start + batch_size);
      std::vector<PathRequest> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(to_request(group[i], paths));
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

}  // namespace detail

struct SplitEvaluation {
  MetricsReport metrics;
  double mean_loss = 0.0;
};

// Loss and metrics of fixed parameters on a set of instances; batched by
// prediction time, no gradients.
inline SplitEvaluation evaluate_split(const ParamMap& params, const ModelConfig& cfg,
                                      const TimeEvolvingGraph& graph,
                                      const std::vector<std::vector<std::size_t>>& paths,
                                      const std::vector<PathInstance>& instances,
                                      std::size_t batch_size, double threshold,
                                      OperatorCache* shared_cache = nullptr) {
  if (instances.empty()) throw std::invalid_argument("evaluate_split: empty instance list");
  OperatorCache local(graph, cfg.mode, cfg.norm);
  OperatorCache& cache = shared_cache ? *shared_cache : local;
  std::vector<int> predicted, labels;
  predicted.reserve(instances.size());
  labels.reserve(instances.size());
  double loss_sum = 0.0;
  for (const auto& batch :
       detail::time_batches(instances, paths, batch_size, /*rng=*/nullptr)) {
    ComputeGraph g;
    ModelIds ids = register_model(g, cfg, params);
    BatchIds out = build_forward(g, ids, cfg, graph, cache, batch, /*with_loss=*/true);
    loss_sum += g.value(out.loss).at(0, 0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Tensor& probs = g.value(out.probs[i]);
      predicted.push_back(probs.at(0, 1) > threshold ? 1 : 0);
      labels.push_back(batch[i].label);
    }
  }
  SplitEvaluation eval;
  eval.metrics = compute_metrics(predicted, labels);
  eval.mean_loss = loss_sum / static_cast<double>(instances.size());
  return eval;
}

// Validation-loss early stopping: remembers the best epoch and signals a
// stop after `window` consecutive epochs without strict improvement.
class EarlyStopTracker {
public:
  explicit EarlyStopTracker(std::size_t window) : window_(window) {
    if (window_ == 0) throw std::invalid_argument("early stop: window must be >= 1");
  }

  // Feeds one epoch's validation loss; returns true when this epoch is the
  // new best.
  bool update(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ >= window_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

private:
  std::size_t window_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based in history
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_macro_f1 = 0.0;
};

struct FitResult {
  ParamMap params;  // best-validation snapshot
  std::vector<EpochStats> history;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;   // 1-based
  std::size_t skipped_steps = 0;
};

inline std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,val_loss,val_macro_f1\n";
  for (const EpochStats& row : history) {
    out += std::to_string(row.epoch) + "," + format_double(row.train_loss) + "," +
           format_double(row.val_loss) + "," + format_double(row.val_macro_f1) + "\n";
  }
  return out;
}

// Minibatch Adam with per-epoch decayed learning rate, validation-loss early
// stopping, and a best-on-validation parameter snapshot. Losses in the
// history are per-instance means.
inline FitResult fit(const TimeEvolvingGraph& graph,
                     const std::vector<std::vector<std::size_t>>& paths,
                     const DatasetSplit& split, const ModelConfig& model_cfg,
                     const TrainConfig& train_cfg) {
  model_cfg.validate();
  train_cfg.validate();
  if (split.train.empty() || split.val.empty()) {
    throw std::invalid_argument("fit: empty train or validation split");
  }

  std::vector<PathInstance> train_set = split.train;
  if (train_cfg.oversample_positive) {
    std::size_t pos = 0;
    for (const PathInstance& inst : train_set) pos += static_cast<std::size_t>(inst.label);
    if (pos > 0 && pos * 2 < train_set.size()) {
      const std::size_t extra =
          std::min<std::size_t>((train_set.size() - pos) / pos, 5) - 1;
      std::vector<PathInstance> boosted = train_set;
      for (const PathInstance& inst : split.train) {
        if (inst.label == 1) {
          for (std::size_t k = 0; k < extra; ++k) boosted.push_back(inst);
        }
      }
      train_set = std::move(boosted);
    }
  }

  FitResult result;
  result.params = init_params(model_cfg, model_cfg.seed);
  ParamMap current = result.params;
  AdamState adam;
  OperatorCache cache(graph, model_cfg.mode, model_cfg.norm);
  EarlyStopTracker tracker(train_cfg.early_stop_window);

  for (std::size_t epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(train_cfg.seed ^
                                (0x9E3779B97F4A7C15ULL * (static_cast<unsigned long long>(epoch) + 1)));
    double train_loss_sum = 0.0;
    std::size_t train_count = 0;
    for (const auto& batch :
         detail::time_batches(train_set, paths, train_cfg.batch_size, &shuffle_rng)) {
      ComputeGraph g;
      ModelIds ids = register_model(g, model_cfg, current);
      BatchIds out = build_forward(g, ids, model_cfg, graph, cache, batch, /*with_loss=*/true);
      g.set_root(out.loss);
      train_loss_sum += g.value(out.loss).at(0, 0);
      train_count += batch.size();
      GradientMap grads = g.gradient(out.loss);
      if (!adam_step(current, grads, adam, train_cfg, epoch)) ++result.skipped_steps;
    }

    SplitEvaluation val = evaluate_split(current, model_cfg, graph, paths, split.val,
                                         train_cfg.batch_size, train_cfg.decision_threshold,
                                         &cache);
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = train_loss_sum / static_cast<double>(train_count);
    stats.val_loss = val.mean_loss;
    stats.val_macro_f1 = val.metrics.macro_f1;
    result.history.push_back(stats);

    if (tracker.update(val.mean_loss)) {
      result.params = current;
      result.best_epoch = tracker.best_epoch();
    } else if (tracker.should_stop()) {
      break;
    }
  }
  result.best_val_loss = tracker.best();
  if (result.history.empty()) result.params = std::move(current);
  return result;
}

}  // namespace pathcast
