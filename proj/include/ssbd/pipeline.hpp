#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/label.hpp"
#include "ssbd/m1.hpp"
#include "ssbd/m2.hpp"
#include "ssbd/pose.hpp"
#include "ssbd/prefetch.hpp"
#include "ssbd/preprocess.hpp"
#include "ssbd/tensor.hpp"
#include "ssbd/video.hpp"

namespace ssbd {

struct PipelineConfig {
  Index window_size = 2;  // chunks per M1-decision window
  Index stride = kDefaultStride;
  double noclass_delta = kDefaultNoClassDelta;
  bool smoothing = false;
  bool use_prefetch = true;
};

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
  return {{"window_size", c.window_size},
          {"stride", c.stride},
          {"noclass_delta", c.noclass_delta},
          {"smoothing", c.smoothing},
          {"use_prefetch", c.use_prefetch}};
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.window_size = j.value("window_size", c.window_size);
  c.stride = j.value("stride", c.stride);
  c.noclass_delta = j.value("noclass_delta", c.noclass_delta);
  c.smoothing = j.value("smoothing", c.smoothing);
  c.use_prefetch = j.value("use_prefetch", c.use_prefetch);
  if (c.window_size < 1) throw SchemaViolation("window_size must be >= 1");
  if (c.stride < 1) throw SchemaViolation("stride must be >= 1");
  return c;
}

struct SegmentResult {
  Index chunk_index = 0;
  double start_time = 0;  // seconds
  ChunkLabel label = ChunkLabel::no_class;
  std::optional<Eigen::Vector3f> probs;  // present iff the chunk reached M2
  std::optional<double> intensity;       // max of probs
  double m1_probability = 0;
};

// Scans decisions in consecutive disjoint windows of `window` chunks (the
// last one may be shorter). Any positive decision sends the whole window to
// M2. Returns the emitted indices in ascending order.
inline std::vector<Index> window_chunks(const std::vector<bool>& m1_decisions, Index window) {
  if (window < 1) throw SchemaViolation("window size must be >= 1");
  const Index n = static_cast<Index>(m1_decisions.size());
  std::vector<Index> emitted;
  for (Index i = 0; i < n; i += window) {
    const Index end = std::min(n, i + window);
    bool any = false;
    for (Index j = i; j < end && !any; ++j) any = m1_decisions[static_cast<std::size_t>(j)];
    if (!any) continue;
    for (Index j = i; j < end; ++j) emitted.push_back(j);
  }
  return emitted;
}

// Radius-1 majority vote over labels; ties keep the original label, probs
// and intensities stay untouched.
inline std::vector<SegmentResult> smooth_predictions(const std::vector<SegmentResult>& results) {
  if (results.empty()) throw EmptyInput("nothing to smooth");
  std::vector<SegmentResult> out = results;
  const Index n = static_cast<Index>(results.size());
  for (Index i = 0; i < n; ++i) {
    Index counts[kNumLabels] = {};
    for (Index j = std::max<Index>(0, i - 1); j <= std::min(n - 1, i + 1); ++j)
      ++counts[static_cast<int>(results[static_cast<std::size_t>(j)].label)];
    int best = static_cast<int>(results[static_cast<std::size_t>(i)].label);
    bool tie = false;
    for (int c = 0; c < kNumLabels; ++c) {
      if (c == best) continue;
      if (counts[c] > counts[best]) {
        best = c;
        tie = false;
      } else if (counts[c] == counts[best]) {
        tie = true;
      }
    }
    if (!tie) out[static_cast<std::size_t>(i)].label = static_cast<ChunkLabel>(best);
  }
  return out;
}

// Full cascade over one video: resample, optionally crop via prefetch, M1 on
// the crops, windowing, M2 with the no-class threshold on the original
// chunks. Chunks never sent to M2 come out as no-class without probs.
template <typename S = float>
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, BinaryNet<S> m1, ActionIdentifier<S> m2,
           std::shared_ptr<const PoseEstimator> pose,
           std::optional<ChildClassifier<S>> child = std::nullopt,
           std::shared_ptr<const PersonDetector> detector = nullptr)
      : cfg_(cfg), m1_(std::move(m1)), m2_(std::move(m2)), pose_(std::move(pose)),
        child_(std::move(child)), detector_(std::move(detector)) {
    if (cfg_.window_size < 1) throw SchemaViolation("window_size must be >= 1");
    if (cfg_.use_prefetch && (!child_.has_value() || !detector_))
      throw ComponentNotLoaded("prefetch enabled but detector or child classifier missing");
    if (!pose_) throw ComponentNotLoaded("pose estimator missing");
    m2_.set_noclass_delta(cfg_.noclass_delta);
  }

  const PipelineConfig& config() const { return cfg_; }
  Index last_m2_invocations() const { return m2_invocations_; }

  std::vector<SegmentResult> run(const std::filesystem::path& video_path) {
    return run(sample_and_resize(video_path));
  }

  std::vector<SegmentResult> run(const FrameSequence& seq) {
    const std::vector<VideoChunk> chunks = make_chunks(seq, {}, cfg_.stride);
    m2_invocations_ = 0;

    std::vector<SegmentResult> results(chunks.size());
    std::vector<bool> decisions(chunks.size(), false);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      SegmentResult& r = results[i];
      r.chunk_index = static_cast<Index>(i);
      r.start_time = static_cast<double>(r.chunk_index) * static_cast<double>(cfg_.stride) /
                     kTargetFps;
      try {
        const VideoChunk* input = &chunks[i];
        VideoChunk cropped;
        if (cfg_.use_prefetch) {
          cropped = prefetch_chunk(chunks[i], *detector_, *child_);
          input = &cropped;
        }
        r.m1_probability = static_cast<double>(m1_.forward(input->data));
        decisions[i] = m1_is_action(r.m1_probability);
      } catch (const Error& e) {
        throw Error(e.kind(), "chunk " + std::to_string(i) + ": " + e.what());
      }
    }

    const Index window = std::min<Index>(cfg_.window_size,
                                         std::max<Index>(1, static_cast<Index>(chunks.size())));
    for (const Index idx : window_chunks(decisions, window)) {
      SegmentResult& r = results[static_cast<std::size_t>(idx)];
      try {
        const VideoChunk& chunk = chunks[static_cast<std::size_t>(idx)];
        const Tensor<float> kp = pack_keypoints(extract_keypoints(chunk, *pose_));
        const Eigen::Matrix<S, 3, 1> probs = m2_.forward(chunk.data, kp);
        ++m2_invocations_;
        r.probs = probs.template cast<float>();
        r.intensity = static_cast<double>(probs.maxCoeff());
        r.label = apply_noclass_threshold(probs, cfg_.noclass_delta);
      } catch (const Error& e) {
        throw Error(e.kind(), "chunk " + std::to_string(idx) + ": " + e.what());
      }
    }

    return cfg_.smoothing && !results.empty() ? smooth_predictions(results) : results;
  }

 private:
  PipelineConfig cfg_;
  BinaryNet<S> m1_;
  ActionIdentifier<S> m2_;
  std::shared_ptr<const PoseEstimator> pose_;
  std::optional<ChildClassifier<S>> child_;
  std::shared_ptr<const PersonDetector> detector_;
  Index m2_invocations_ = 0;
};

inline nlohmann::json segment_to_json(const SegmentResult& r, const std::string& video_id) {
  nlohmann::json j{{"video_id", video_id},
                   {"chunk_index", r.chunk_index},
                   {"start_time", r.start_time},
                   {"label", label_name(r.label)},
                   {"m1_probability", r.m1_probability}};
  if (r.probs.has_value())
    j["probs"] = {(*r.probs)(0), (*r.probs)(1), (*r.probs)(2)};
  if (r.intensity.has_value()) j["intensity"] = *r.intensity;
  return j;
}

inline SegmentResult segment_from_json(const nlohmann::json& j) {
  SegmentResult r;
  r.chunk_index = j.at("chunk_index").get<Index>();
  r.start_time = j.at("start_time").get<double>();
  r.label = require_label(j.at("label").get<std::string>());
  r.m1_probability = j.at("m1_probability").get<double>();
  if (j.contains("probs")) {
    const auto& p = j.at("probs");
    if (p.size() != 3) throw SchemaViolation("probs must have 3 entries");
    r.probs = Eigen::Vector3f(p[0].get<float>(), p[1].get<float>(), p[2].get<float>());
  }
  if (j.contains("intensity")) r.intensity = j.at("intensity").get<double>();
  return r;
}

// One JSON record per line per chunk.
inline void write_predictions_jsonl(const std::filesystem::path& path,
                                    const std::string& video_id,
                                    const std::vector<SegmentResult>& results,
                                    bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const SegmentResult& r : results) out << segment_to_json(r, video_id).dump() << "\n";
}

struct PredictionRecord {
  std::string video_id;
  SegmentResult segment;
};

inline std::vector<PredictionRecord> read_predictions_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PredictionRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaViolation("bad prediction record: " + std::string(e.what()));
    }
    records.push_back({j.at("video_id").get<std::string>(), segment_from_json(j)});
  }
  return records;
}

}  // namespace ssbd
