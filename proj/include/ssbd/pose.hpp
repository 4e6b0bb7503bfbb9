#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>

#include "ssbd/error.hpp"
#include "ssbd/image.hpp"
#include "ssbd/preprocess.hpp"
#include "ssbd/tensor.hpp"

namespace ssbd {

inline constexpr Index kNumJoints = 17;  // COCO ordering
inline constexpr float kKeypointConfFloor = 0.2f;

struct Keypoint {
  float x = 0.5f;  // normalized to [0, 1] within the frame
  float y = 0.5f;
  float confidence = 0.f;
};

using Skeleton = std::array<Keypoint, kNumJoints>;

class PoseEstimator {
 public:
  virtual ~PoseEstimator() = default;
  virtual Skeleton estimate(const Image& frame) const = 0;
  virtual std::string name() const = 0;
};

// Lightweight estimator that anchors a canonical skeleton to the brightest
// blob in the frame. Intended for synthetic footage and smoke runs; swap in a
// real estimator behind the same interface for production data.
class BlobPoseEstimator final : public PoseEstimator {
 public:
  explicit BlobPoseEstimator(float luma_threshold = 0.5f) : threshold_(luma_threshold) {}

  Skeleton estimate(const Image& frame) const override {
    const Index h = image_height(frame), w = image_width(frame);
    double sum = 0, sx = 0, sy = 0;
    Index min_r = h, max_r = -1, min_c = w, max_c = -1;
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) {
        const float luma =
            0.299f * frame(0, r, c) + 0.587f * frame(1, r, c) + 0.114f * frame(2, r, c);
        if (luma < threshold_) continue;
        sum += luma;
        sx += luma * static_cast<double>(c);
        sy += luma * static_cast<double>(r);
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
        min_c = std::min(min_c, c);
        max_c = std::max(max_c, c);
      }
    }
    Skeleton sk;
    if (sum <= 0) {
      for (auto& kp : sk) kp = Keypoint{0.5f, 0.5f, 0.f};
      return sk;
    }
    const float cx = static_cast<float>(sx / sum) / static_cast<float>(w - 1);
    const float cy = static_cast<float>(sy / sum) / static_cast<float>(h - 1);
    const float half_w =
        std::max(static_cast<float>(max_c - min_c) / static_cast<float>(w - 1), 0.02f) / 2.f;
    const float half_h =
        std::max(static_cast<float>(max_r - min_r) / static_cast<float>(h - 1), 0.02f) / 2.f;
    // Joint offsets on a unit body: nose, eyes, ears, shoulders, elbows,
    // wrists, hips, knees, ankles.
    static constexpr float kOffsets[kNumJoints][2] = {
        {0.00f, -0.90f}, {-0.08f, -0.95f}, {0.08f, -0.95f}, {-0.18f, -0.90f}, {0.18f, -0.90f},
        {-0.45f, -0.55f}, {0.45f, -0.55f}, {-0.70f, -0.20f}, {0.70f, -0.20f}, {-0.85f, 0.10f},
        {0.85f, 0.10f},   {-0.30f, 0.15f}, {0.30f, 0.15f},  {-0.32f, 0.55f}, {0.32f, 0.55f},
        {-0.34f, 0.92f},  {0.34f, 0.92f}};
    const float conf = std::min(1.f, static_cast<float>(sum / (0.05 * h * w)));
    for (Index j = 0; j < kNumJoints; ++j) {
      sk[static_cast<std::size_t>(j)] =
          Keypoint{std::clamp(cx + kOffsets[j][0] * half_w, 0.f, 1.f),
                   std::clamp(cy + kOffsets[j][1] * half_h, 0.f, 1.f), conf};
    }
    return sk;
  }

  std::string name() const override { return "blob-centroid"; }

 private:
  float threshold_;
};

// Pose trajectory for one chunk. Coordinates are dense: low-confidence
// joints were forward-filled, only `confidence` records the raw scores.
struct KeypointSequence {
  Tensor<float> coords;      // (kChunkFrames, kNumJoints, 2)
  Tensor<float> confidence;  // (kChunkFrames, kNumJoints)
};

// Storage layout used by the chunk store: (40, 17, 3) with x, y, confidence.
inline Tensor<float> pack_keypoints(const KeypointSequence& seq) {
  Tensor<float> out({kChunkFrames, kNumJoints, 3});
  for (Index t = 0; t < kChunkFrames; ++t)
    for (Index j = 0; j < kNumJoints; ++j) {
      out(t, j, 0) = seq.coords(t, j, 0);
      out(t, j, 1) = seq.coords(t, j, 1);
      out(t, j, 2) = seq.confidence(t, j);
    }
  return out;
}

inline KeypointSequence unpack_keypoints(const Tensor<float>& packed) {
  if (packed.shape() != std::vector<Index>{kChunkFrames, kNumJoints, 3})
    throw ShapeMismatch("packed keypoints must be (40, 17, 3)");
  KeypointSequence seq{Tensor<float>({kChunkFrames, kNumJoints, 2}),
                       Tensor<float>({kChunkFrames, kNumJoints})};
  for (Index t = 0; t < kChunkFrames; ++t)
    for (Index j = 0; j < kNumJoints; ++j) {
      seq.coords(t, j, 0) = packed(t, j, 0);
      seq.coords(t, j, 1) = packed(t, j, 1);
      seq.confidence(t, j) = packed(t, j, 2);
    }
  return seq;
}

// Runs the estimator over every frame of a chunk and applies the confidence
// floor: joints below kKeypointConfFloor inherit the previous frame's
// coordinates, with frame 0 falling back to the frame centre.
inline KeypointSequence extract_keypoints(const VideoChunk& chunk,
                                          const PoseEstimator& estimator) {
  KeypointSequence seq{Tensor<float>({kChunkFrames, kNumJoints, 2}),
                       Tensor<float>({kChunkFrames, kNumJoints})};
  Image frame = make_image(kFrameSize, kFrameSize);
  for (Index t = 0; t < kChunkFrames; ++t) {
    std::copy(chunk.data.data() + t * frame.size(), chunk.data.data() + (t + 1) * frame.size(),
              frame.data());
    Skeleton sk;
    try {
      sk = estimator.estimate(frame);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw EstimatorFailure("pose estimator failed on frame " + std::to_string(t) + ": " +
                             e.what());
    }
    for (Index j = 0; j < kNumJoints; ++j) {
      const Keypoint& kp = sk[static_cast<std::size_t>(j)];
      float x = std::clamp(kp.x, 0.f, 1.f);
      float y = std::clamp(kp.y, 0.f, 1.f);
      if (kp.confidence < kKeypointConfFloor) {
        if (t == 0) {
          x = 0.5f;
          y = 0.5f;
        } else {
          x = seq.coords(t - 1, j, 0);
          y = seq.coords(t - 1, j, 1);
        }
      }
      seq.coords(t, j, 0) = x;
      seq.coords(t, j, 1) = y;
      seq.confidence(t, j) = kp.confidence;
    }
  }
  return seq;
}

// Person-region proposal for the prefetch stage: bounding box of the
// brightest blob, padded and clamped. Falls back to the full frame when the
// frame is uniformly dark.
struct CropBox {
  Index top = 0, left = 0, height = 0, width = 0;
};

inline CropBox propose_person_box(const Image& frame, float luma_threshold = 0.5f,
                                  float pad_fraction = 0.15f) {
  const Index h = image_height(frame), w = image_width(frame);
  Index min_r = h, max_r = -1, min_c = w, max_c = -1;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const float luma =
          0.299f * frame(0, r, c) + 0.587f * frame(1, r, c) + 0.114f * frame(2, r, c);
      if (luma < luma_threshold) continue;
      min_r = std::min(min_r, r);
      max_r = std::max(max_r, r);
      min_c = std::min(min_c, c);
      max_c = std::max(max_c, c);
    }
  if (max_r < 0) return CropBox{0, 0, h, w};
  const Index pad_r = static_cast<Index>(std::lround(pad_fraction * static_cast<double>(max_r - min_r + 1)));
  const Index pad_c = static_cast<Index>(std::lround(pad_fraction * static_cast<double>(max_c - min_c + 1)));
  CropBox box;
  box.top = std::max<Index>(0, min_r - pad_r);
  box.left = std::max<Index>(0, min_c - pad_c);
  box.height = std::min(h, max_r + pad_r + 1) - box.top;
  box.width = std::min(w, max_c + pad_c + 1) - box.left;
  return box;
}

}  // namespace ssbd
