#pragma once

#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/label.hpp"
#include "ssbd/m2.hpp"
#include "ssbd/metrics.hpp"
#include "ssbd/tensor.hpp"

namespace ssbd {

struct DeltaRow {
  double delta = 0;
  double macro_f1 = 0;  // over the action classes
  double accuracy = 0;
  Index noclass_count = 0;
};

struct DeltaSweep {
  std::vector<DeltaRow> rows;
  double best_delta = 0;  // argmax macro_f1, earliest on ties
};

inline std::vector<double> default_delta_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 67; ++i) grid.push_back(i / 100.0);
  return grid;
}

// Re-thresholds cached M2 probabilities over a delta grid; no inference.
inline DeltaSweep sweep_delta(const std::vector<Eigen::Vector3f>& probs,
                              const std::vector<ChunkLabel>& truth,
                              const std::vector<double>& grid = default_delta_grid()) {
  if (probs.size() != truth.size())
    throw LengthMismatch("probs and truth differ in length");
  if (probs.empty()) throw EmptyInput("nothing to sweep");
  if (grid.empty()) throw EmptyInput("empty delta grid");

  std::vector<Index> truth_idx(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) truth_idx[i] = static_cast<Index>(truth[i]);

  DeltaSweep sweep;
  double best_f1 = -1;
  for (const double delta : grid) {
    std::vector<Index> preds(probs.size());
    Index noclass = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const ChunkLabel l = apply_noclass_threshold(probs[i], delta);
      preds[i] = static_cast<Index>(l);
      if (l == ChunkLabel::no_class) ++noclass;
    }
    const MetricsReport m = compute_metrics(preds, truth_idx, kNumLabels);
    DeltaRow row{delta, m.macro_f1_actions, m.accuracy, noclass};
    sweep.rows.push_back(row);
    if (row.macro_f1 > best_f1) {
      best_f1 = row.macro_f1;
      sweep.best_delta = delta;
    }
  }
  return sweep;
}

inline nlohmann::json sweep_to_json(const DeltaSweep& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const DeltaRow& r : s.rows)
    rows.push_back({{"delta", r.delta},
                    {"macro_f1", r.macro_f1},
                    {"accuracy", r.accuracy},
                    {"noclass_count", r.noclass_count}});
  return {{"rows", rows}, {"best_delta", s.best_delta}};
}

}  // namespace ssbd
