#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "ssbd/distill.hpp"
#include "ssbd/error.hpp"
#include "ssbd/m1.hpp"
#include "ssbd/m2.hpp"
#include "ssbd/pipeline.hpp"
#include "ssbd/prefetch.hpp"
#include "ssbd/presets.hpp"
#include "ssbd/train.hpp"

// One JSON config file drives the CLI. Keys, all optional:
//   preset    name from the preset registry; seeds train/distill settings
//   train     TrainConfig overrides
//   distill   DistillConfig overrides
//   pipeline  PipelineConfig
//   m1, m2, prefetch, teacher, student   per-model configs
//   backbone  {arch, seed} applied to every backbone-bearing model

namespace ssbd {

struct AppConfig {
  PipelineConfig pipeline;
  TrainConfig train;
  DistillConfig distill;
  M1Config m1;
  M2Config m2;
  PrefetchConfig prefetch;
  TeacherConfig teacher;
  StudentConfig student;
  std::string preset_name;  // empty when no preset was named
};

inline AppConfig app_config_from_json(const nlohmann::json& j) {
  AppConfig c;
  if (j.contains("preset")) {
    c.preset_name = j.at("preset").get<std::string>();
    const Preset& p = preset(c.preset_name);
    c.train = p.train;
    c.distill = p.distill;
  }
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("distill")) c.distill = distill_config_from_json(j.at("distill"), c.distill);
  if (j.contains("pipeline")) c.pipeline = pipeline_config_from_json(j.at("pipeline"));
  if (j.contains("m1")) c.m1 = m1_config_from_json(j.at("m1"));
  if (j.contains("m2")) c.m2 = m2_config_from_json(j.at("m2"));
  if (j.contains("prefetch")) c.prefetch = prefetch_config_from_json(j.at("prefetch"));
  if (j.contains("teacher"))
    c.teacher = TeacherModel<float>::teacher_config_from_json(j.at("teacher"));
  if (j.contains("student"))
    c.student = StudentModel<float>::student_config_from_json(j.at("student"));
  if (j.contains("backbone")) {
    const nn::BackboneConfig base = nn::backbone_config_from_json(j.at("backbone"));
    for (nn::BackboneConfig* b :
         {&c.m2.backbone, &c.prefetch.backbone, &c.teacher.backbone, &c.student.backbone}) {
      b->arch = base.arch;
      b->seed = base.seed;
    }
  }
  return c;
}

inline nlohmann::json app_config_to_json(const AppConfig& c) {
  nlohmann::json j{{"pipeline", pipeline_config_to_json(c.pipeline)},
                   {"train", train_config_to_json(c.train)},
                   {"distill", distill_config_to_json(c.distill)},
                   {"m1", m1_config_to_json(c.m1)},
                   {"m2", m2_config_to_json(c.m2)},
                   {"prefetch", prefetch_config_to_json(c.prefetch)},
                   {"teacher", TeacherModel<float>::teacher_config_to_json(c.teacher)},
                   {"student", StudentModel<float>::student_config_to_json(c.student)}};
  if (!c.preset_name.empty()) j["preset"] = c.preset_name;
  return j;
}

inline AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation("config file " + path.string() + ": " + e.what());
  }
  return app_config_from_json(j);
}

}  // namespace ssbd
