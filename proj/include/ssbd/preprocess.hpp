#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssbd/annotations.hpp"
#include "ssbd/error.hpp"
#include "ssbd/image.hpp"
#include "ssbd/npy.hpp"
#include "ssbd/tensor.hpp"
#include "ssbd/video.hpp"

namespace ssbd {

inline constexpr double kTargetFps = 10.0;
inline constexpr Index kFrameSize = 100;
inline constexpr Index kChunkFrames = 40;
inline constexpr Index kDefaultStride = 20;
// A chunk keeps its annotated action label only when at least this many of
// its frames fall inside an interval of that action.
inline constexpr Index kMajorityFrames = 30;

// Video resampled to the pipeline's working rate and resolution. Frame i
// corresponds to time i / kTargetFps in the source video.
struct FrameSequence {
  std::vector<Image> frames;
  std::string video_id;
};

struct VideoChunk {
  Tensor<float> data;  // (kChunkFrames, 3, kFrameSize, kFrameSize)
  Index start_frame = 0;  // index into the resampled sequence
  ChunkLabel label = ChunkLabel::no_class;
};

// Decodes, resamples to 10 fps by picking the nearest source frame for each
// output tick, and resizes to 100x100. Streams the source so full-resolution
// videos never live in memory all at once.
inline FrameSequence sample_and_resize(VideoReader& reader, const std::string& video_id = "") {
  const double src_fps = reader.fps();
  if (src_fps <= 0) throw UndecodableVideo("source fps must be positive");
  FrameSequence seq;
  seq.video_id = video_id;
  Image current;
  long long current_idx = -1;
  for (long long k = 0;; ++k) {
    const long long target = std::llround(static_cast<double>(k) * src_fps / kTargetFps);
    while (current_idx < target) {
      if (!reader.next(current)) {
        if (seq.frames.empty()) throw EmptyVideo("video has no frames");
        return seq;
      }
      ++current_idx;
    }
    seq.frames.push_back(resize_bilinear(current, kFrameSize, kFrameSize));
  }
}

inline FrameSequence sample_and_resize(const std::filesystem::path& path,
                                       const std::string& video_id = "") {
  auto reader = open_video(path);
  return sample_and_resize(*reader, video_id);
}

// Number of stride-offset windows of kChunkFrames frames that fit in a
// sequence of length n_frames: max(0, floor((L - 40) / s) + 1).
inline Index chunk_count(Index n_frames, Index stride) {
  if (stride <= 0) throw std::invalid_argument("stride must be positive");
  if (n_frames < kChunkFrames) return 0;
  return (n_frames - kChunkFrames) / stride + 1;
}

// A chunk takes an action label only when at least 30 of its 40 frames
// (75%) carry that action; anything weaker is no-class.
inline ChunkLabel label_chunk(const std::vector<ChunkLabel>& labels) {
  if (static_cast<Index>(labels.size()) != kChunkFrames)
    throw ShapeMismatch("label_chunk expects exactly 40 frame labels");
  Index counts[kNumLabels] = {};
  for (const ChunkLabel l : labels) ++counts[static_cast<int>(l)];
  ChunkLabel best = ChunkLabel::no_class;
  Index best_count = 0;
  for (int c = 1; c < kNumLabels; ++c) {
    if (counts[c] > best_count) {
      best_count = counts[c];
      best = static_cast<ChunkLabel>(c);
    }
  }
  return best_count >= kMajorityFrames ? best : ChunkLabel::no_class;
}

// Slice variant; frames past the end of `frame_labels` count as unlabelled.
inline ChunkLabel label_chunk_at(const std::vector<ChunkLabel>& frame_labels, Index start_frame) {
  std::vector<ChunkLabel> window(static_cast<std::size_t>(kChunkFrames), ChunkLabel::no_class);
  for (Index i = 0; i < kChunkFrames; ++i) {
    const Index f = start_frame + i;
    if (f >= 0 && f < static_cast<Index>(frame_labels.size()))
      window[static_cast<std::size_t>(i)] = frame_labels[static_cast<std::size_t>(f)];
  }
  return label_chunk(window);
}

inline Tensor<float> pack_frames(const std::vector<Image>& frames, Index start, Index count) {
  Tensor<float> out({count, 3, kFrameSize, kFrameSize});
  for (Index i = 0; i < count; ++i) {
    const Image& f = frames[static_cast<std::size_t>(start + i)];
    if (image_height(f) != kFrameSize || image_width(f) != kFrameSize)
      throw ShapeMismatch("frame is not 100x100");
    std::copy(f.data(), f.data() + f.size(), out.data() + i * f.size());
  }
  return out;
}

// Slices a resampled sequence into overlapping 40-frame chunks and applies
// majority labelling. Sequences shorter than 40 frames yield no chunks.
inline std::vector<VideoChunk> make_chunks(const FrameSequence& seq,
                                           const std::vector<ChunkLabel>& frame_labels,
                                           Index stride = kDefaultStride,
                                           const WarningSink& warn = {}) {
  const Index n = static_cast<Index>(seq.frames.size());
  const Index count = chunk_count(n, stride);
  if (count == 0 && warn)
    warn(seq.video_id + ": only " + std::to_string(n) + " frames at 10 fps, no chunks produced");
  std::vector<VideoChunk> chunks;
  chunks.reserve(static_cast<std::size_t>(count));
  for (Index c = 0; c < count; ++c) {
    VideoChunk chunk;
    chunk.start_frame = c * stride;
    chunk.data = pack_frames(seq.frames, chunk.start_frame, kChunkFrames);
    chunk.label = label_chunk_at(frame_labels, chunk.start_frame);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// On-disk chunk store. One directory per dataset:
//   <video>_<chunk:05d>.npy     float32 (40, 3, 100, 100)
//   <video>_<chunk:05d>.kp.npy  float32 (40, 17, 3): x, y, confidence
//   <video>_<chunk:05d>.json    {"video_id", "chunk_index", "start_frame", "label"}

struct ChunkRecord {
  std::string video_id;
  Index chunk_index = 0;
  Index start_frame = 0;
  ChunkLabel label = ChunkLabel::no_class;
  std::filesystem::path data_path;
  std::filesystem::path keypoints_path;
};

inline std::string chunk_stem(const std::string& video_id, Index chunk_index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%05lld", static_cast<long long>(chunk_index));
  return video_id + buf;
}

inline void save_chunk(const std::filesystem::path& dir, const std::string& video_id,
                       Index chunk_index, const VideoChunk& chunk,
                       const Tensor<float>* keypoints = nullptr) {
  std::filesystem::create_directories(dir);
  const std::string stem = chunk_stem(video_id, chunk_index);
  npy::save(dir / (stem + ".npy"), chunk.data);
  if (keypoints != nullptr) npy::save(dir / (stem + ".kp.npy"), *keypoints);
  nlohmann::json meta{{"video_id", video_id},
                      {"chunk_index", chunk_index},
                      {"start_frame", chunk.start_frame},
                      {"label", label_name(chunk.label)}};
  std::ofstream out(dir / (stem + ".json"));
  out << meta.dump(2) << "\n";
}

inline std::vector<ChunkRecord> list_chunks(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("chunk store not found: " + dir.string());
  std::vector<ChunkRecord> records;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    nlohmann::json meta = nlohmann::json::parse(in);
    ChunkRecord rec;
    rec.video_id = meta.at("video_id").get<std::string>();
    rec.chunk_index = meta.at("chunk_index").get<Index>();
    rec.start_frame = meta.at("start_frame").get<Index>();
    rec.label = require_label(meta.at("label").get<std::string>());
    const std::string stem = chunk_stem(rec.video_id, rec.chunk_index);
    rec.data_path = dir / (stem + ".npy");
    rec.keypoints_path = dir / (stem + ".kp.npy");
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(), [](const ChunkRecord& a, const ChunkRecord& b) {
    return std::tie(a.video_id, a.chunk_index) < std::tie(b.video_id, b.chunk_index);
  });
  return records;
}

inline Tensor<float> load_chunk_data(const ChunkRecord& rec) {
  Tensor<float> t = npy::load<float>(rec.data_path);
  if (t.shape() != std::vector<Index>{kChunkFrames, 3, kFrameSize, kFrameSize})
    throw ShapeMismatch("chunk tensor has wrong shape: " + rec.data_path.string());
  return t;
}

inline Tensor<float> load_chunk_keypoints(const ChunkRecord& rec) {
  Tensor<float> t = npy::load<float>(rec.keypoints_path);
  if (t.shape() != std::vector<Index>{kChunkFrames, 17, 3})
    throw ShapeMismatch("keypoint tensor has wrong shape: " + rec.keypoints_path.string());
  return t;
}

}  // namespace ssbd
