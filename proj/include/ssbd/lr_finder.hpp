#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/train.hpp"

// Learning-rate range test: sweep the rate geometrically from lr_min to
// lr_max over a fixed number of steps, one optimizer step per point, and
// suggest the rate where the smoothed loss falls fastest per decade.

namespace ssbd {

struct LrFinderConfig {
  double lr_min = 1e-6;
  double lr_max = 10.0;
  Index steps = 60;
  Index batch_size = 8;
  double smoothing = 0.9;           // EMA factor, bias-corrected
  double divergence_factor = 4.0;   // stop once smoothed loss exceeds best * factor
  std::uint64_t seed = 17;
};

struct LrPoint {
  double lr = 0;
  double loss = 0;
  double smoothed = 0;
};

struct LrFinderResult {
  std::vector<LrPoint> points;
  double suggested_lr = 0;
};

template <typename S>
inline void restore(const nn::ParamList<S>& params,
                    const std::vector<std::vector<S>>& snapshot) {
  for (std::size_t i = 0; i < params.size(); ++i)
    std::copy(snapshot[i].begin(), snapshot[i].end(), params[i].value);
}

template <typename S>
inline LrFinderResult lr_range_test(TrainTask<S>& task, const LrFinderConfig& cfg,
                                    double momentum = 0.0, double weight_decay = 0.0) {
  if (task.size() == 0) throw EmptySplit("range test needs a non-empty split");
  if (cfg.steps < 2 || cfg.lr_min <= 0 || cfg.lr_max <= cfg.lr_min)
    throw std::invalid_argument("bad range test configuration");
  const nn::ParamList<S> params = task.params();
  std::vector<std::vector<S>> snapshot(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    snapshot[i].assign(params[i].value, params[i].value + params[i].size);

  Rng rng(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(task.size()));
  for (Index i = 0; i < task.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  std::size_t cursor = 0;
  const auto next_batch = [&] {
    std::vector<Index> batch;
    for (Index i = 0; i < cfg.batch_size; ++i) {
      if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    return batch;
  };

  Sgd<S> opt(cfg.lr_min, momentum, weight_decay);
  const double ratio = std::pow(cfg.lr_max / cfg.lr_min,
                                1.0 / static_cast<double>(cfg.steps - 1));
  LrFinderResult result;
  double ema = 0, best = std::numeric_limits<double>::infinity();
  for (Index step = 0; step < cfg.steps; ++step) {
    const double lr = cfg.lr_min * std::pow(ratio, static_cast<double>(step));
    const double loss = static_cast<double>(task.train_batch(next_batch()));
    if (!std::isfinite(loss)) {
      if (step == 0) {
        restore(params, snapshot);
        throw DivergedImmediately("loss was non-finite at the smallest rate");
      }
      break;
    }
    ema = cfg.smoothing * ema + (1 - cfg.smoothing) * loss;
    const double smoothed =
        ema / (1 - std::pow(cfg.smoothing, static_cast<double>(step + 1)));
    result.points.push_back({lr, loss, smoothed});
    best = std::min(best, smoothed);
    if (smoothed > cfg.divergence_factor * best && step > 0) break;
    opt.set_learning_rate(lr);
    opt.step(params);
  }
  restore(params, snapshot);

  if (result.points.size() < 2)
    throw DivergedImmediately("range test collected fewer than two finite points");
  double steepest = std::numeric_limits<double>::infinity();
  double suggestion = result.points.front().lr;
  for (std::size_t i = 0; i + 1 < result.points.size(); ++i) {
    const auto& a = result.points[i];
    const auto& b = result.points[i + 1];
    const double slope = (b.smoothed - a.smoothed) / (std::log(b.lr) - std::log(a.lr));
    if (slope < steepest) {
      steepest = slope;
      suggestion = std::sqrt(a.lr * b.lr);
    }
  }
  result.suggested_lr = std::clamp(suggestion, cfg.lr_min, cfg.lr_max);
  return result;
}

inline nlohmann::json lr_result_to_json(const LrFinderResult& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points)
    pts.push_back({{"lr", p.lr}, {"loss", p.loss}, {"smoothed", p.smoothed}});
  return {{"points", pts}, {"suggested_lr", r.suggested_lr}};
}

}  // namespace ssbd
