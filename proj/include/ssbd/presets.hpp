#pragma once

#include <string>
#include <vector>

#include "ssbd/distill.hpp"
#include "ssbd/error.hpp"
#include "ssbd/train.hpp"

// Published hyperparameter bundles, selectable by name from the CLI.

namespace ssbd {

struct Preset {
  std::string name;
  std::string description;
  TrainConfig train;
  DistillConfig distill;
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    std::vector<Preset> t;
    {
      Preset p;
      p.name = "m1-paper";
      p.description = "binary chunk detector, balanced sampling";
      p.train.epochs = 240;
      p.train.batch_size = 128;
      p.train.learning_rate = 2.31e-3;
      p.train.momentum = 0.3;
      p.train.weight_decay = 1e-5;
      p.train.balanced_sampling = true;
      p.train.loss = "binary-cross-entropy";
      t.push_back(p);
    }
    {
      Preset p;
      p.name = "m2-paper";
      p.description = "action identifier over representative frame + keypoints";
      p.train.epochs = 300;
      p.train.batch_size = 64;
      p.train.learning_rate = 8.29e-1;
      p.train.momentum = 0.0;
      p.train.weight_decay = 8.29e-5;
      t.push_back(p);
    }
    {
      Preset p;
      p.name = "prefetch-paper";
      p.description = "child/adult crop classifier head";
      p.train.epochs = 300;
      p.train.batch_size = 64;
      p.train.learning_rate = 3.82e-2;
      p.train.momentum = 0.0;
      p.train.weight_decay = 1e-5;
      p.train.loss = "binary-cross-entropy";
      t.push_back(p);
    }
    {
      Preset p;
      p.name = "distill-paper";
      p.description = "teacher to student transfer, soft/hard blend";
      p.train.epochs = 100;
      p.train.batch_size = 64;
      p.train.learning_rate = 1e-2;
      p.train.momentum = 0.0;
      p.train.weight_decay = 0.0;
      p.distill.temperature = 2.0;
      p.distill.soft_weight = 0.25;
      p.distill.hard_weight = 0.75;
      t.push_back(p);
    }
    return t;
  }();
  return table;
}

inline const Preset& preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw SchemaViolation("unknown preset: " + name);
}

}  // namespace ssbd
