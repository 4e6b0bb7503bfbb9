#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/image.hpp"
#include "ssbd/nn/backbone.hpp"
#include "ssbd/nn/checkpoint.hpp"
#include "ssbd/nn/footprint.hpp"
#include "ssbd/nn/layers.hpp"
#include "ssbd/nn/loss.hpp"
#include "ssbd/pose.hpp"
#include "ssbd/preprocess.hpp"
#include "ssbd/rng.hpp"
#include "ssbd/tensor.hpp"

namespace ssbd {

struct BoundingBox {
  double x = 0, y = 0;  // top-left, pixels
  double w = 0, h = 0;
  double detector_score = 0;
  double child_prob = 0;

  double area() const { return h * w; }
};

// One crop region per frame of a chunk.
struct CropPlan {
  std::vector<BoundingBox> per_frame_region;  // length kChunkFrames
};

class PersonDetector {
 public:
  virtual ~PersonDetector() = default;
  // Boxes for the person class with detector_score filled in; child_prob is
  // left for the classifier.
  virtual std::vector<BoundingBox> detect(const Image& frame) const = 0;
  virtual std::string name() const = 0;
};

// Reference adapter over the bright-blob proposal; stands in for an external
// detector on synthetic footage.
class BlobPersonDetector final : public PersonDetector {
 public:
  explicit BlobPersonDetector(float luma_threshold = 0.5f) : threshold_(luma_threshold) {}

  std::vector<BoundingBox> detect(const Image& frame) const override {
    const CropBox blob = propose_person_box(frame, threshold_);
    if (blob.height == image_height(frame) && blob.width == image_width(frame)) return {};
    BoundingBox box;
    box.x = static_cast<double>(blob.left);
    box.y = static_cast<double>(blob.top);
    box.w = static_cast<double>(blob.width);
    box.h = static_cast<double>(blob.height);
    box.detector_score = 0.9;
    return {box};
  }

  std::string name() const override { return "blob-proposal"; }

 private:
  float threshold_;
};

struct PrefetchConfig {
  nn::BackboneConfig backbone{nn::BackboneArch::vgg19, 0, 7011, true};
  Index hidden = 273;
  std::uint64_t seed = 404;
};

inline nlohmann::json prefetch_config_to_json(const PrefetchConfig& c) {
  return {{"backbone", nn::backbone_config_to_json(c.backbone)},
          {"hidden", c.hidden},
          {"seed", c.seed}};
}

inline PrefetchConfig prefetch_config_from_json(const nlohmann::json& j) {
  PrefetchConfig c;
  if (j.contains("backbone")) c.backbone = nn::backbone_config_from_json(j.at("backbone"));
  c.hidden = j.value("hidden", c.hidden);
  c.seed = j.value("seed", c.seed);
  return c;
}

// Frozen image backbone with a trainable two-layer binary head. Crops are
// resized to the backbone's input before embedding.
template <typename S = float>
class ChildClassifier {
 public:
  explicit ChildClassifier(const PrefetchConfig& cfg = {})
      : cfg_(cfg), backbone_(cfg.backbone) {
    Rng rng(cfg.seed);
    const Index in = backbone_.embed_dim();
    fc1_ = nn::Linear<S>(in, cfg.hidden, rng);
    fc2_ = nn::Linear<S>(cfg.hidden, 1, rng);
  }

  const PrefetchConfig& config() const { return cfg_; }
  const nn::FrozenBackbone<S>& backbone() const { return backbone_; }

  ColVec<S> features(const Image& crop) const {
    if (image_height(crop) < 1 || image_width(crop) < 1)
      throw DegenerateCrop("empty crop");
    return backbone_.embed(crop);
  }

  S prob_from_features(const ColVec<S>& f) const {
    return S(1) / (S(1) + std::exp(-logit_from_features(f)));
  }

  S classify_child(const Image& crop) const { return prob_from_features(features(crop)); }

  // Crops the frame to each box (clamped) and fills child_prob. Boxes that
  // collapse below 2x2 pixels are dropped.
  std::vector<BoundingBox> annotate(const Image& frame,
                                    const std::vector<BoundingBox>& boxes) const {
    std::vector<BoundingBox> out;
    out.reserve(boxes.size());
    for (BoundingBox box : boxes) {
      const Image crop = crop_to_box(frame, box);
      if (image_height(crop) < 2 || image_width(crop) < 2) continue;
      box.child_prob = static_cast<double>(classify_child(crop));
      out.push_back(box);
    }
    return out;
  }

  struct TrainCache {
    RowMat<S> features;  // (B, embed)
    typename nn::Linear<S>::Cache fc1;
    RowMat<S> hidden;
    typename nn::Linear<S>::Cache fc2;
  };

  // Head pass over pre-extracted backbone features, one row per image.
  ColVec<S> train_forward(const RowMat<S>& feats, TrainCache& cache) {
    cache.features = feats;
    RowMat<S> h = fc1_.forward(feats, cache.fc1);
    h = h.cwiseMax(S(0));
    cache.hidden = h;
    RowMat<S> logits = fc2_.forward(h, cache.fc2);
    return logits.col(0);
  }

  void train_backward(const TrainCache& cache, const ColVec<S>& dlogits) {
    RowMat<S> g(dlogits.size(), 1);
    g.col(0) = dlogits;
    RowMat<S> dh = fc2_.backward(cache.fc2, g);
    dh = (cache.hidden.array() > S(0)).template cast<S>() * dh.array();
    fc1_.backward(cache.fc1, dh);
  }

  void zero_grad() {
    fc1_.zero_grad();
    fc2_.zero_grad();
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> ps;
    fc1_.params("head.fc1", ps);
    fc2_.params("head.fc2", ps);
    return ps;
  }

  Footprint footprint() const {
    Footprint fp;
    fp.learnable = fc1_.param_count() + fc2_.param_count();
    fp.frozen = nn::backbone_param_count(cfg_.backbone);
    return fp;
  }

  void save(const std::filesystem::path& path) {
    nlohmann::json meta = prefetch_config_to_json(cfg_);
    meta["backbone_identity"] = backbone_.identity();
    nn::save_checkpoint(path, "prefetch", meta, params());
  }

  static ChildClassifier load(const std::filesystem::path& path) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    if (ckpt.kind != "prefetch")
      throw ComponentNotLoaded("expected a prefetch checkpoint, got " + ckpt.kind);
    ChildClassifier model(prefetch_config_from_json(ckpt.meta));
    auto ps = model.params();
    nn::apply_checkpoint(ckpt, ps);
    return model;
  }

 private:
  S logit_from_features(const ColVec<S>& f) const {
    ColVec<S> h = (fc1_.w * f + fc1_.b).cwiseMax(S(0));
    return (fc2_.w * h + fc2_.b)(0);
  }

  static Image crop_to_box(const Image& frame, const BoundingBox& box) {
    const Index fh = image_height(frame), fw = image_width(frame);
    const Index left = std::clamp<Index>(static_cast<Index>(std::llround(box.x)), 0, fw);
    const Index top = std::clamp<Index>(static_cast<Index>(std::llround(box.y)), 0, fh);
    const Index right = std::clamp<Index>(static_cast<Index>(std::llround(box.x + box.w)), left, fw);
    const Index bottom = std::clamp<Index>(static_cast<Index>(std::llround(box.y + box.h)), top, fh);
    if (right - left < 1 || bottom - top < 1) return make_image(0, 0);
    return crop_image(frame, left, top, right - left, bottom - top);
  }

  PrefetchConfig cfg_;
  nn::FrozenBackbone<S> backbone_;
  nn::Linear<S> fc1_, fc2_;
};

namespace detail {

// Total order on box content so selection cannot depend on list order.
inline std::tuple<double, double, double, double, double, double> box_key(const BoundingBox& b) {
  return {b.x, b.y, b.w, b.h, b.detector_score, b.child_prob};
}

inline bool better_in_frame(const BoundingBox& a, const BoundingBox& b) {
  if (a.child_prob != b.child_prob) return a.child_prob > b.child_prob;
  if (a.area() != b.area()) return a.area() > b.area();
  return box_key(a) < box_key(b);
}

}  // namespace detail

// Per frame, the box with the highest child probability wins. Frames with no
// detection reuse the largest box seen anywhere else in the chunk; if nothing
// was detected at all, the full frame is used.
inline CropPlan select_crop_regions(const std::vector<std::vector<BoundingBox>>& detections,
                                    Index frame_height = kFrameSize,
                                    Index frame_width = kFrameSize) {
  if (static_cast<Index>(detections.size()) != kChunkFrames)
    throw ShapeMismatch("expected one detection list per chunk frame");

  const BoundingBox* largest = nullptr;
  for (const auto& frame : detections)
    for (const auto& box : frame) {
      if (!largest || box.area() > largest->area() ||
          (box.area() == largest->area() && detail::box_key(box) < detail::box_key(*largest)))
        largest = &box;
    }

  BoundingBox full;
  full.w = static_cast<double>(frame_width);
  full.h = static_cast<double>(frame_height);

  CropPlan plan;
  plan.per_frame_region.reserve(static_cast<std::size_t>(kChunkFrames));
  for (const auto& frame : detections) {
    if (frame.empty()) {
      plan.per_frame_region.push_back(largest ? *largest : full);
      continue;
    }
    const BoundingBox* best = &frame.front();
    for (const auto& box : frame)
      if (detail::better_in_frame(box, *best)) best = &box;
    plan.per_frame_region.push_back(*best);
  }
  return plan;
}

// Crops every frame to its planned region and resizes back to the working
// resolution. Regions that clamp below 2x2 pixels are rejected.
inline VideoChunk apply_crops(const VideoChunk& chunk, const CropPlan& plan) {
  if (static_cast<Index>(plan.per_frame_region.size()) != kChunkFrames)
    throw ShapeMismatch("crop plan length does not match chunk");
  if (chunk.data.shape() != std::vector<Index>{kChunkFrames, 3, kFrameSize, kFrameSize})
    throw ShapeMismatch("chunk data must be (40, 3, 100, 100)");

  VideoChunk out;
  out.data = Tensor<float>({kChunkFrames, 3, kFrameSize, kFrameSize});
  out.start_frame = chunk.start_frame;
  out.label = chunk.label;

  Image frame = make_image(kFrameSize, kFrameSize);
  for (Index t = 0; t < kChunkFrames; ++t) {
    std::copy(chunk.data.data() + t * frame.size(), chunk.data.data() + (t + 1) * frame.size(),
              frame.data());
    const BoundingBox& box = plan.per_frame_region[static_cast<std::size_t>(t)];
    const Index left = std::clamp<Index>(static_cast<Index>(std::llround(box.x)), 0, kFrameSize);
    const Index top = std::clamp<Index>(static_cast<Index>(std::llround(box.y)), 0, kFrameSize);
    const Index right =
        std::clamp<Index>(static_cast<Index>(std::llround(box.x + box.w)), left, kFrameSize);
    const Index bottom =
        std::clamp<Index>(static_cast<Index>(std::llround(box.y + box.h)), top, kFrameSize);
    if (right - left < 2 || bottom - top < 2)
      throw DegenerateCrop("crop region for frame " + std::to_string(t) +
                           " collapses to " + std::to_string(bottom - top) + "x" +
                           std::to_string(right - left));
    const Image cropped = crop_image(frame, left, top, right - left, bottom - top);
    const Image resized = resize_bilinear(cropped, kFrameSize, kFrameSize);
    std::copy(resized.data(), resized.data() + resized.size(), out.data.data() + t * frame.size());
  }
  return out;
}

// Detector + classifier + selection + cropping in one step.
template <typename S>
inline VideoChunk prefetch_chunk(const VideoChunk& chunk, const PersonDetector& detector,
                                 const ChildClassifier<S>& classifier) {
  std::vector<std::vector<BoundingBox>> detections;
  detections.reserve(static_cast<std::size_t>(kChunkFrames));
  Image frame = make_image(kFrameSize, kFrameSize);
  for (Index t = 0; t < kChunkFrames; ++t) {
    std::copy(chunk.data.data() + t * frame.size(), chunk.data.data() + (t + 1) * frame.size(),
              frame.data());
    detections.push_back(classifier.annotate(frame, detector.detect(frame)));
  }
  return apply_crops(chunk, select_crop_regions(detections));
}

}  // namespace ssbd
