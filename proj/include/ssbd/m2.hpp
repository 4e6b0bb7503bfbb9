#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ssbd/label.hpp"
#include "ssbd/nn/backbone.hpp"
#include "ssbd/nn/checkpoint.hpp"
#include "ssbd/nn/footprint.hpp"
#include "ssbd/nn/loss.hpp"
#include "ssbd/nn/lstm.hpp"
#include "ssbd/pose.hpp"
#include "ssbd/preprocess.hpp"

// Stage two: identifies which action a positive chunk contains. A single
// representative frame supplies the spatial embedding; the keypoint
// trajectory supplies the temporal signal via a small bidirectional LSTM.
// Their concatenation feeds one linear layer and a softmax over the three
// action classes, with a confidence floor mapping weak maxima to no-class.

namespace ssbd {

inline constexpr double kNoClassBase = 0.33;
inline constexpr double kDefaultNoClassDelta = 0.10;

// (40, 17, 2) or (40, 17, 3) keypoints -> (40, 34) rows of interleaved x, y.
template <typename S = float>
inline RowMat<S> keypoint_coords(const Tensor<float>& kp) {
  const auto& sh = kp.shape();
  if (sh.size() != 3 || sh[1] != kNumJoints || (sh[2] != 2 && sh[2] != 3))
    throw ShapeMismatch("expected a (T, 17, 2|3) keypoint tensor");
  RowMat<S> coords(sh[0], 2 * kNumJoints);
  for (Index t = 0; t < sh[0]; ++t)
    for (Index j = 0; j < kNumJoints; ++j) {
      coords(t, 2 * j) = static_cast<S>(kp(t, j, 0));
      coords(t, 2 * j + 1) = static_cast<S>(kp(t, j, 1));
    }
  return coords;
}

// Frame whose skeleton moves the most: argmax over t of the Euclidean norm
// of J[t + 1] - J[t] across all 34 coordinates. Ties resolve to the earliest
// frame; a motionless sequence yields frame 0.
inline Index select_representative_frame(const RowMat<float>& coords) {
  if (coords.rows() < 2) return 0;
  Index best = 0;
  float best_norm = -1.f;
  for (Index t = 0; t + 1 < coords.rows(); ++t) {
    const float norm = (coords.row(t + 1) - coords.row(t)).norm();
    if (norm > best_norm) {
      best_norm = norm;
      best = t;
    }
  }
  return best;
}

inline Index select_representative_frame(const Tensor<float>& kp) {
  return select_representative_frame(keypoint_coords<float>(kp));
}

// max(probs) below 0.33 + delta means no class is confidently present.
template <typename Derived>
inline ChunkLabel apply_noclass_threshold(const Eigen::MatrixBase<Derived>& probs, double delta) {
  if (probs.size() != kNumActionLabels) throw ShapeMismatch("expected 3 action probabilities");
  Index arg = 0;
  const double mx = static_cast<double>(probs.maxCoeff(&arg));
  if (mx < kNoClassBase + delta) return ChunkLabel::no_class;
  return static_cast<ChunkLabel>(arg + 1);
}

struct M2Config {
  nn::BackboneConfig backbone{nn::BackboneArch::resnet18, 2048, 7011, true};
  Index lstm_hidden = 2;
  double noclass_delta = kDefaultNoClassDelta;
  std::uint64_t seed = 202;
};

inline nlohmann::json m2_config_to_json(const M2Config& c) {
  return {{"backbone", nn::backbone_config_to_json(c.backbone)},
          {"lstm_hidden", c.lstm_hidden},
          {"noclass_delta", c.noclass_delta},
          {"seed", c.seed}};
}

inline M2Config m2_config_from_json(const nlohmann::json& j) {
  M2Config c;
  if (j.contains("backbone")) c.backbone = nn::backbone_config_from_json(j.at("backbone"));
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.noclass_delta = j.value("noclass_delta", c.noclass_delta);
  c.seed = j.value("seed", c.seed);
  return c;
}

template <typename S = float>
class ActionIdentifier {
 public:
  explicit ActionIdentifier(const M2Config& cfg = {}) : cfg_(cfg), backbone_(cfg.backbone) {
    Rng rng(cfg.seed);
    lstm_ = nn::BiLstm<S>(2 * kNumJoints, cfg.lstm_hidden, rng);
    head_ = nn::Linear<S>(backbone_.embed_dim() + 2 * cfg.lstm_hidden, kNumActionLabels, rng);
  }

  const M2Config& config() const { return cfg_; }
  const nn::FrozenBackbone<S>& backbone() const { return backbone_; }
  Index concat_dim() const { return head_.in_features(); }

  // Spatial embedding of the chunk's representative frame.
  ColVec<S> embed_representative(const Tensor<float>& chunk, const Tensor<float>& kp) const {
    const Index rep = select_representative_frame(kp);
    Image frame = make_image(chunk.shape()[2], chunk.shape()[3]);
    std::copy(chunk.data() + rep * frame.size(), chunk.data() + (rep + 1) * frame.size(),
              frame.data());
    return backbone_.embed(frame);
  }

  // chunk (40, 3, 100, 100) + keypoints (40, 17, 2|3) -> probabilities (3).
  Eigen::Matrix<S, 3, 1> forward(const Tensor<float>& chunk, const Tensor<float>& kp) const {
    return probs_from_parts(embed_representative(chunk, kp), keypoint_coords<S>(kp));
  }

  Eigen::Matrix<S, 3, 1> probs_from_parts(const ColVec<S>& embed, const RowMat<S>& coords) const {
    const ColVec<S> logits = logits_from_parts(embed, coords);
    return nn::softmax<S>(logits);
  }

  ColVec<S> logits_from_parts(const ColVec<S>& embed, const RowMat<S>& coords) const {
    const RowMat<S> out = lstm_.forward(coords);
    const ColVec<S> fin = lstm_.final_state(out);
    RowMat<S> concat(1, head_.in_features());
    concat.leftCols(embed.size()) = embed.transpose();
    concat.rightCols(fin.size()) = fin.transpose();
    return head_.forward(concat).row(0).transpose();
  }

  ChunkLabel classify(const Tensor<float>& chunk, const Tensor<float>& kp) const {
    return apply_noclass_threshold(forward(chunk, kp), cfg_.noclass_delta);
  }

  struct TrainCache {
    typename nn::BiLstm<S>::Cache lstm;
    typename nn::Linear<S>::Cache head;
    Index t_len = 0;
  };

  // The backbone is frozen, so training works from a cached embedding.
  ColVec<S> train_forward(const ColVec<S>& embed, const RowMat<S>& coords, TrainCache& cache) {
    const RowMat<S> out = lstm_.forward(coords, &cache.lstm);
    const ColVec<S> fin = lstm_.final_state(out);
    cache.t_len = coords.rows();
    RowMat<S> concat(1, head_.in_features());
    concat.leftCols(embed.size()) = embed.transpose();
    concat.rightCols(fin.size()) = fin.transpose();
    return head_.forward(concat, cache.head).row(0).transpose();
  }

  void train_backward(const TrainCache& cache, const ColVec<S>& dlogits) {
    const RowMat<S> dconcat = head_.backward(cache.head, dlogits.transpose());
    const Index h = cfg_.lstm_hidden;
    // Only the final states feed the head; scatter their gradient back to the
    // steps they came from.
    RowMat<S> dout = RowMat<S>::Zero(cache.t_len, 2 * h);
    dout.row(cache.t_len - 1).head(h) = dconcat.row(0).segment(backbone_.embed_dim(), h);
    dout.row(0).tail(h) = dconcat.row(0).segment(backbone_.embed_dim() + h, h);
    lstm_.backward(cache.lstm, dout);
  }

  void zero_grad() {
    lstm_.zero_grad();
    head_.zero_grad();
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> list;
    lstm_.params("lstm", list);
    head_.params("head", list);
    return list;
  }

  Footprint footprint() const {
    return {lstm_.param_count() + head_.param_count(), backbone_.param_count()};
  }

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) {
    nlohmann::json meta{{"config", m2_config_to_json(cfg_)},
                        {"backbone_identity", backbone_.identity()}};
    if (!extra.is_null() && !extra.empty()) meta["train"] = extra;
    nn::save_checkpoint(path, "m2", meta, params());
  }

  static ActionIdentifier load(const std::filesystem::path& path, bool materialize = true) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    if (ckpt.kind != "m2")
      throw ComponentNotLoaded("expected an m2 checkpoint, found '" + ckpt.kind + "'");
    M2Config cfg = m2_config_from_json(ckpt.meta.at("config"));
    cfg.backbone.materialize = materialize;
    ActionIdentifier net(cfg);
    nn::apply_checkpoint(ckpt, net.params());
    return net;
  }

  void set_noclass_delta(double delta) { cfg_.noclass_delta = delta; }

 private:
  M2Config cfg_;
  nn::FrozenBackbone<S> backbone_;
  nn::BiLstm<S> lstm_;
  nn::Linear<S> head_;
};

// Ablation variant: every frame's features enter the LSTM alongside the
// keypoints instead of a single representative frame.
struct AllFramesConfig {
  nn::BackboneConfig backbone{nn::BackboneArch::resnet18, 0, 7011, true};
  Index lstm_hidden = 8;
  double noclass_delta = kDefaultNoClassDelta;
  std::uint64_t seed = 203;
};

inline nlohmann::json allframes_config_to_json(const AllFramesConfig& c) {
  return {{"backbone", nn::backbone_config_to_json(c.backbone)},
          {"lstm_hidden", c.lstm_hidden},
          {"noclass_delta", c.noclass_delta},
          {"seed", c.seed}};
}

inline AllFramesConfig allframes_config_from_json(const nlohmann::json& j) {
  AllFramesConfig c;
  if (j.contains("backbone")) c.backbone = nn::backbone_config_from_json(j.at("backbone"));
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.noclass_delta = j.value("noclass_delta", c.noclass_delta);
  c.seed = j.value("seed", c.seed);
  return c;
}

template <typename S = float>
class AllFramesIdentifier {
 public:
  explicit AllFramesIdentifier(const AllFramesConfig& cfg = {}) : cfg_(cfg), backbone_(cfg.backbone) {
    Rng rng(cfg.seed);
    lstm_ = nn::BiLstm<S>(backbone_.native_dim() + 2 * kNumJoints, cfg.lstm_hidden, rng);
    head_ = nn::Linear<S>(2 * cfg.lstm_hidden, kNumActionLabels, rng);
  }

  const AllFramesConfig& config() const { return cfg_; }

  RowMat<S> frame_features(const Tensor<float>& chunk) const {
    return backbone_.frame_features(chunk);
  }

  Eigen::Matrix<S, 3, 1> forward(const Tensor<float>& chunk, const Tensor<float>& kp) const {
    return probs_from_parts(frame_features(chunk), keypoint_coords<S>(kp));
  }

  Eigen::Matrix<S, 3, 1> probs_from_parts(const RowMat<S>& feats, const RowMat<S>& coords) const {
    RowMat<S> joint(feats.rows(), feats.cols() + coords.cols());
    joint.leftCols(feats.cols()) = feats;
    joint.rightCols(coords.cols()) = coords;
    const RowMat<S> out = lstm_.forward(joint);
    const ColVec<S> fin = lstm_.final_state(out);
    const ColVec<S> logits = head_.forward(fin.transpose()).row(0).transpose();
    return nn::softmax<S>(logits);
  }

  ChunkLabel classify(const Tensor<float>& chunk, const Tensor<float>& kp) const {
    return apply_noclass_threshold(forward(chunk, kp), cfg_.noclass_delta);
  }

  struct TrainCache {
    typename nn::BiLstm<S>::Cache lstm;
    typename nn::Linear<S>::Cache head;
    Index t_len = 0;
  };

  ColVec<S> train_forward(const RowMat<S>& feats, const RowMat<S>& coords, TrainCache& cache) {
    RowMat<S> joint(feats.rows(), feats.cols() + coords.cols());
    joint.leftCols(feats.cols()) = feats;
    joint.rightCols(coords.cols()) = coords;
    const RowMat<S> out = lstm_.forward(joint, &cache.lstm);
    const ColVec<S> fin = lstm_.final_state(out);
    cache.t_len = joint.rows();
    return head_.forward(fin.transpose(), cache.head).row(0).transpose();
  }

  void train_backward(const TrainCache& cache, const ColVec<S>& dlogits) {
    const RowMat<S> dfin = head_.backward(cache.head, dlogits.transpose());
    const Index h = cfg_.lstm_hidden;
    RowMat<S> dout = RowMat<S>::Zero(cache.t_len, 2 * h);
    dout.row(cache.t_len - 1).head(h) = dfin.row(0).head(h);
    dout.row(0).tail(h) = dfin.row(0).tail(h);
    lstm_.backward(cache.lstm, dout);
  }

  void zero_grad() {
    lstm_.zero_grad();
    head_.zero_grad();
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> list;
    lstm_.params("lstm", list);
    head_.params("head", list);
    return list;
  }

  Footprint footprint() const {
    return {lstm_.param_count() + head_.param_count(), backbone_.param_count()};
  }

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) {
    nlohmann::json meta{{"config", allframes_config_to_json(cfg_)},
                        {"backbone_identity", backbone_.identity()}};
    if (!extra.is_null() && !extra.empty()) meta["train"] = extra;
    nn::save_checkpoint(path, "m2-allframes", meta, params());
  }

  static AllFramesIdentifier load(const std::filesystem::path& path, bool materialize = true) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    if (ckpt.kind != "m2-allframes")
      throw ComponentNotLoaded("expected an all-frames checkpoint, found '" + ckpt.kind + "'");
    AllFramesConfig cfg = allframes_config_from_json(ckpt.meta.at("config"));
    cfg.backbone.materialize = materialize;
    AllFramesIdentifier net(cfg);
    nn::apply_checkpoint(ckpt, net.params());
    return net;
  }

  void set_noclass_delta(double delta) { cfg_.noclass_delta = delta; }

 private:
  AllFramesConfig cfg_;
  nn::FrozenBackbone<S> backbone_;
  nn::BiLstm<S> lstm_;
  nn::Linear<S> head_;
};

}  // namespace ssbd
