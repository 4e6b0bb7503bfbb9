#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/metrics.hpp"
#include "ssbd/nn/layers.hpp"
#include "ssbd/rng.hpp"

namespace ssbd {

// SGD with classical momentum and decoupled-from-nothing weight decay, torch
// semantics: v = mu * v + g + wd * p; p -= lr * v.
template <typename S>
class Sgd {
 public:
  Sgd(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), wd_(weight_decay) {}

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  // Velocity is tracked by position, so pass the same list every step.
  void step(const nn::ParamList<S>& params) {
    if (velocity_.size() != params.size()) {
      velocity_.assign(params.size(), {});
      for (std::size_t i = 0; i < params.size(); ++i)
        velocity_[i].assign(static_cast<std::size_t>(params[i].size), S(0));
    }
    const S lr = static_cast<S>(lr_), mu = static_cast<S>(momentum_), wd = static_cast<S>(wd_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& p = params[i];
      S* v = velocity_[i].data();
      for (Index j = 0; j < p.size; ++j) {
        v[j] = mu * v[j] + p.grad[j] + wd * p.value[j];
        p.value[j] -= lr * v[j];
      }
    }
  }

  void reset() { velocity_.clear(); }

 private:
  double lr_, momentum_, wd_;
  std::vector<std::vector<S>> velocity_;
};

// Uniform hook between the trainer and each trainable component: the task
// owns its model and data, computes batch gradients, and predicts classes.
template <typename S>
class TrainTask {
 public:
  virtual ~TrainTask() = default;
  virtual Index size() const = 0;
  virtual Index num_classes() const = 0;
  virtual Index label_of(Index i) const = 0;
  // Zeroes gradients, runs forward/backward over the batch, leaves gradients
  // in place, returns the mean loss.
  virtual S train_batch(const std::vector<Index>& batch) = 0;
  virtual Index predict(Index i) const = 0;
  virtual nn::ParamList<S> params() = 0;
};

struct TrainConfig {
  Index epochs = 10;
  Index batch_size = 8;
  double learning_rate = 1e-2;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  bool balanced_sampling = false;
  std::string loss = "categorical-cross-entropy";  // or "binary-cross-entropy"
  double stop_at_accuracy = -1.0;  // early exit once training accuracy reaches this
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"balanced_sampling", c.balanced_sampling},
          {"loss", c.loss}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.balanced_sampling = j.value("balanced_sampling", c.balanced_sampling);
  c.loss = j.value("loss", c.loss);
  c.stop_at_accuracy = j.value("stop_at_accuracy", c.stop_at_accuracy);
  if (c.loss != "categorical-cross-entropy" && c.loss != "binary-cross-entropy")
    throw SchemaViolation("unknown loss: " + c.loss);
  return c;
}

struct EpochStats {
  Index epoch = 0;
  double loss = 0;
  double accuracy = 0;
  double macro_f1 = 0;
};

namespace detail {

/// Class-balanced epoch order: cycles the classes round-robin, drawing from
// per-class pools reshuffled on exhaustion.
template <typename S>
inline std::vector<Index> balanced_order(TrainTask<S>& task, Rng& rng) {
  const Index n = task.size();
  std::vector<std::vector<Index>> pools(static_cast<std::size_t>(task.num_classes()));
  for (Index i = 0; i < n; ++i)
    pools[static_cast<std::size_t>(task.label_of(i))].push_back(i);
  std::vector<std::vector<Index>> live;
  for (auto& p : pools)
    if (!p.empty()) live.push_back(std::move(p));
  std::vector<std::size_t> cursor(live.size(), 0);
  for (auto& p : live) rng.shuffle(p);
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(n));
  for (Index slot = 0; slot < n; ++slot) {
    auto& pool = live[static_cast<std::size_t>(slot) % live.size()];
    auto& cur = cursor[static_cast<std::size_t>(slot) % live.size()];
    if (cur >= pool.size()) {
      rng.shuffle(pool);
      cur = 0;
    }
    order.push_back(pool[cur++]);
  }
  return order;
}

}  // namespace detail

template <typename S>
inline EpochStats evaluate_task(TrainTask<S>& task) {
  std::vector<Index> truth, pred;
  truth.reserve(static_cast<std::size_t>(task.size()));
  pred.reserve(static_cast<std::size_t>(task.size()));
  for (Index i = 0; i < task.size(); ++i) {
    truth.push_back(task.label_of(i));
    pred.push_back(task.predict(i));
  }
  const MetricsReport m = compute_metrics(truth, pred, task.num_classes());
  EpochStats s;
  s.accuracy = m.accuracy;
  s.macro_f1 = m.macro_f1;
  return s;
}

using EpochCallback = std::function<void(const EpochStats&)>;

// Trains for cfg.epochs (or until stop_at_accuracy) and returns one stats row
// per completed epoch. Deterministic for a fixed config and task state.
template <typename S>
inline std::vector<EpochStats> train(TrainTask<S>& task, const TrainConfig& cfg,
                                     const EpochCallback& on_epoch = {}) {
  if (task.size() == 0) throw EmptySplit("training split is empty");
  if (cfg.batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  Rng rng(cfg.seed);
  Sgd<S> opt(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  const nn::ParamList<S> params = task.params();
  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Index> order;
    if (cfg.balanced_sampling) {
      order = detail::balanced_order(task, rng);
    } else {
      order.resize(static_cast<std::size_t>(task.size()));
      for (Index i = 0; i < task.size(); ++i) order[static_cast<std::size_t>(i)] = i;
      rng.shuffle(order);
    }
    double loss_sum = 0;
    Index n_batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<Index> batch(order.begin() + static_cast<std::ptrdiff_t>(at),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      const double loss = static_cast<double>(task.train_batch(batch));
      if (!std::isfinite(loss))
        throw NonFiniteLoss("loss became non-finite at epoch " + std::to_string(epoch));
      opt.step(params);
      loss_sum += loss;
      ++n_batches;
    }
    EpochStats stats = evaluate_task(task);
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(n_batches);
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (cfg.stop_at_accuracy > 0 && stats.accuracy >= cfg.stop_at_accuracy) break;
  }
  return history;
}

inline nlohmann::json history_to_json(const std::vector<EpochStats>& history) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : history)
    rows.push_back({{"epoch", s.epoch},
                    {"loss", s.loss},
                    {"accuracy", s.accuracy},
                    {"macro_f1", s.macro_f1}});
  return rows;
}

}  // namespace ssbd
