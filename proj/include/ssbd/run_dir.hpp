#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/train.hpp"

// Training run directory: config snapshot, per-epoch metrics CSV, a
// checkpoint at the best validation macro-F1 and one at the final epoch.

namespace ssbd {

struct TrainRunResult {
  std::vector<EpochStats> history;
  std::vector<EpochStats> val_history;  // empty without a validation task
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  Index best_epoch = -1;
  double best_f1 = -1;
};

using ModelSaver = std::function<void(const std::filesystem::path&)>;

template <typename S>
inline TrainRunResult run_training(TrainTask<S>& task, TrainTask<S>* val_task,
                                   const TrainConfig& cfg, const std::filesystem::path& dir,
                                   const ModelSaver& save_model) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream cfg_out(dir / "config.json");
    if (!cfg_out) throw IoError("cannot write " + (dir / "config.json").string());
    cfg_out << train_config_to_json(cfg).dump(2) << "\n";
  }

  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
  csv << "epoch,loss,accuracy,macro_f1";
  if (val_task != nullptr) csv << ",val_accuracy,val_macro_f1";
  csv << "\n";

  TrainRunResult result;
  result.best_checkpoint = dir / "best.ckpt";
  result.final_checkpoint = dir / "final.ckpt";

  const auto on_epoch = [&](const EpochStats& stats) {
    csv << stats.epoch << "," << stats.loss << "," << stats.accuracy << "," << stats.macro_f1;
    double selection_f1 = stats.macro_f1;
    if (val_task != nullptr) {
      EpochStats val = evaluate_task(*val_task);
      val.epoch = stats.epoch;
      result.val_history.push_back(val);
      csv << "," << val.accuracy << "," << val.macro_f1;
      selection_f1 = val.macro_f1;
    }
    csv << "\n";
    if (selection_f1 > result.best_f1) {
      result.best_f1 = selection_f1;
      result.best_epoch = stats.epoch;
      save_model(result.best_checkpoint);
    }
  };

  result.history = train(task, cfg, on_epoch);
  save_model(result.final_checkpoint);
  csv.close();
  return result;
}

}  // namespace ssbd
