#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include <json.hpp>

#include "ssbd/label.hpp"
#include "ssbd/m2.hpp"
#include "ssbd/nn/attention.hpp"
#include "ssbd/nn/backbone.hpp"
#include "ssbd/nn/checkpoint.hpp"
#include "ssbd/nn/footprint.hpp"
#include "ssbd/nn/loss.hpp"
#include "ssbd/nn/lstm.hpp"

// Knowledge distillation: a heavyweight teacher (trainable final residual
// stage, wide bidirectional LSTM, self-attention, deep head) supervises a
// compact student (frozen features, single-direction LSTM, two-layer head)
// through a blended soft/hard loss.

namespace ssbd {

struct DistillConfig {
  double temperature = 2.0;
  double soft_weight = 0.25;
  double hard_weight = 0.75;
};

inline nlohmann::json distill_config_to_json(const DistillConfig& c) {
  return {{"temperature", c.temperature},
          {"soft_weight", c.soft_weight},
          {"hard_weight", c.hard_weight}};
}

inline DistillConfig distill_config_from_json(const nlohmann::json& j, DistillConfig c = {}) {
  c.temperature = j.value("temperature", c.temperature);
  c.soft_weight = j.value("soft_weight", c.soft_weight);
  c.hard_weight = j.value("hard_weight", c.hard_weight);
  if (c.temperature <= 0) throw SchemaViolation("temperature must be positive");
  return c;
}

// L = soft_weight * T^2 * KL(softmax(t/T) || softmax(s/T))
//   + hard_weight * CE(s, label).
// Optionally yields the gradient with respect to the student logits.
template <typename S>
inline S distillation_loss(const ColVec<S>& student_logits, const ColVec<S>& teacher_logits,
                           Index label, const DistillConfig& cfg, ColVec<S>* grad = nullptr) {
  if (student_logits.size() != teacher_logits.size())
    throw ShapeMismatch("student and teacher logit widths differ");
  const S temp = static_cast<S>(cfg.temperature);
  const ColVec<S> p_t = nn::softmax<S>((teacher_logits / temp).eval());
  const ColVec<S> p_s = nn::softmax<S>((student_logits / temp).eval());
  const S soft = temp * temp * nn::kl_divergence(p_t, p_s);
  ColVec<S> dce;
  const S hard = nn::ce_with_logits<S>(student_logits, label, grad != nullptr ? &dce : nullptr);
  if (grad != nullptr) {
    *grad = static_cast<S>(cfg.soft_weight) * temp * (p_s - p_t) +
            static_cast<S>(cfg.hard_weight) * dce;
  }
  return static_cast<S>(cfg.soft_weight) * soft + static_cast<S>(cfg.hard_weight) * hard;
}

// ---------------------------------------------------------------------------

struct TeacherConfig {
  nn::BackboneConfig backbone{nn::BackboneArch::resnet18, 0, 7011, true};
  Index lstm_hidden = 1024;
  Index attn_dim = 1024;
  Index attn_heads = 4;
  Index fc1 = 192;
  Index fc2 = 96;
  std::uint64_t seed = 301;
};

template <typename S = float>
class TeacherModel {
 public:
  explicit TeacherModel(const TeacherConfig& cfg = {}) : cfg_(cfg), backbone_(cfg.backbone) {
    Rng rng(cfg.seed);
    const auto spec = backbone_.final_stage_spec();
    stage_ = nn::ResidualBlock<S>(spec.in, spec.out, spec.stride, rng);
    lstm_ = nn::BiLstm<S>(spec.out, cfg.lstm_hidden, rng);
    proj_ = nn::Linear<S>(2 * cfg.lstm_hidden, cfg.attn_dim, rng);
    attn_ = nn::MultiheadSelfAttention<S>(cfg.attn_dim, cfg.attn_heads, rng);
    head1_ = nn::Linear<S>(cfg.attn_dim, cfg.fc1, rng);
    head2_ = nn::Linear<S>(cfg.fc1, cfg.fc2, rng);
    head3_ = nn::Linear<S>(cfg.fc2, kNumActionLabels, rng);
  }

  const TeacherConfig& config() const { return cfg_; }
  const nn::FrozenBackbone<S>& backbone() const { return backbone_; }

  // Frozen features for one chunk: per-frame trunk maps (T, C, h, w).
  Tensor<S> extract_maps(const Tensor<float>& chunk) const {
    return backbone_.chunk_trunk_maps(chunk);
  }

  ColVec<S> forward_from_maps(const Tensor<S>& maps) const {
    const Tensor<S> staged = stage_.forward(maps);
    const RowMat<S> feats = nn::spatial_mean_frames(staged);
    const RowMat<S> seq = lstm_.forward(feats);
    const RowMat<S> attended = attn_.forward(proj_.forward(seq));
    const ColVec<S> pooled = attended.colwise().mean().transpose();
    const RowMat<S> h1 = nn::relu_mat<S>(head1_.forward(pooled.transpose()));
    const RowMat<S> h2 = nn::relu_mat<S>(head2_.forward(h1));
    return head3_.forward(h2).row(0).transpose();
  }

  ColVec<S> forward(const Tensor<float>& chunk) const {
    return forward_from_maps(extract_maps(chunk));
  }

  struct TrainCache {
    typename nn::ResidualBlock<S>::Cache stage;
    std::vector<Index> staged_shape;
    typename nn::BiLstm<S>::Cache lstm;
    typename nn::Linear<S>::Cache proj;
    typename nn::MultiheadSelfAttention<S>::Cache attn;
    Index t_len = 0;
    typename nn::Linear<S>::Cache head1, head2, head3;
    RowMat<S> h1_out, h2_out;
  };

  ColVec<S> train_forward(const Tensor<S>& maps, TrainCache& cache) {
    const Tensor<S> staged = stage_.forward_train(maps, cache.stage);
    cache.staged_shape = staged.shape();
    const RowMat<S> feats = nn::spatial_mean_frames(staged);
    const RowMat<S> seq = lstm_.forward(feats, &cache.lstm);
    const RowMat<S> attended = attn_.forward(proj_.forward(seq, cache.proj), &cache.attn);
    cache.t_len = attended.rows();
    const ColVec<S> pooled = attended.colwise().mean().transpose();
    cache.h1_out = nn::relu_mat<S>(head1_.forward(pooled.transpose(), cache.head1));
    cache.h2_out = nn::relu_mat<S>(head2_.forward(cache.h1_out, cache.head2));
    return head3_.forward(cache.h2_out, cache.head3).row(0).transpose();
  }

  void train_backward(const TrainCache& cache, const ColVec<S>& dlogits) {
    RowMat<S> d = head3_.backward(cache.head3, dlogits.transpose());
    d = (d.array() * (cache.h2_out.array() > S(0)).template cast<S>()).matrix();
    d = head2_.backward(cache.head2, d);
    d = (d.array() * (cache.h1_out.array() > S(0)).template cast<S>()).matrix();
    const RowMat<S> dpooled = head1_.backward(cache.head1, d);
    RowMat<S> dattended =
        dpooled.replicate(cache.t_len, 1) / static_cast<S>(cache.t_len);
    const RowMat<S> dproj = attn_.backward(cache.attn, dattended);
    const RowMat<S> dseq = proj_.backward(cache.proj, dproj);
    const RowMat<S> dfeats = lstm_.backward(cache.lstm, dseq);
    const Tensor<S> dstaged = nn::spatial_mean_frames_backward(cache.staged_shape, dfeats);
    stage_.backward(cache.stage, dstaged);
  }

  void zero_grad() {
    stage_.zero_grad();
    lstm_.zero_grad();
    proj_.zero_grad();
    attn_.zero_grad();
    head1_.zero_grad();
    head2_.zero_grad();
    head3_.zero_grad();
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> list;
    stage_.params("stage", list);
    lstm_.params("lstm", list);
    proj_.params("proj", list);
    attn_.params("attn", list);
    head1_.params("head1", list);
    head2_.params("head2", list);
    head3_.params("head3", list);
    return list;
  }

  nn::ParamList<S> state() {
    nn::ParamList<S> list = params();
    stage_.buffers("stage", list);
    return list;
  }

  Footprint footprint() const {
    Footprint f;
    f.learnable = stage_.param_count() + lstm_.param_count() + proj_.param_count() +
                  attn_.param_count() + head1_.param_count() + head2_.param_count() +
                  head3_.param_count();
    f.frozen = backbone_.param_count() - stage_.param_count();
    return f;
  }

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) {
    nlohmann::json meta{{"config", teacher_config_to_json(cfg_)}};
    if (!extra.is_null() && !extra.empty()) meta["train"] = extra;
    nn::save_checkpoint(path, "teacher", meta, state());
  }

  static TeacherModel load(const std::filesystem::path& path, bool materialize = true) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    if (ckpt.kind != "teacher")
      throw ComponentNotLoaded("expected a teacher checkpoint, found '" + ckpt.kind + "'");
    TeacherConfig cfg = teacher_config_from_json(ckpt.meta.at("config"));
    cfg.backbone.materialize = materialize;
    TeacherModel model(cfg);
    nn::apply_checkpoint(ckpt, model.state());
    return model;
  }

  static nlohmann::json teacher_config_to_json(const TeacherConfig& c) {
    return {{"backbone", nn::backbone_config_to_json(c.backbone)},
            {"lstm_hidden", c.lstm_hidden},
            {"attn_dim", c.attn_dim},
            {"attn_heads", c.attn_heads},
            {"fc1", c.fc1},
            {"fc2", c.fc2},
            {"seed", c.seed}};
  }

  static TeacherConfig teacher_config_from_json(const nlohmann::json& j) {
    TeacherConfig c;
    if (j.contains("backbone")) c.backbone = nn::backbone_config_from_json(j.at("backbone"));
    c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
    c.attn_dim = j.value("attn_dim", c.attn_dim);
    c.attn_heads = j.value("attn_heads", c.attn_heads);
    c.fc1 = j.value("fc1", c.fc1);
    c.fc2 = j.value("fc2", c.fc2);
    c.seed = j.value("seed", c.seed);
    return c;
  }

 private:
  TeacherConfig cfg_;
  nn::FrozenBackbone<S> backbone_;
  nn::ResidualBlock<S> stage_;
  nn::BiLstm<S> lstm_;
  nn::Linear<S> proj_;
  nn::MultiheadSelfAttention<S> attn_;
  nn::Linear<S> head1_, head2_, head3_;
};

// ---------------------------------------------------------------------------

struct StudentConfig {
  nn::BackboneConfig backbone{nn::BackboneArch::resnet18, 0, 7011, true};
  Index lstm_hidden = 1024;
  Index fc_hidden = 2560;
  std::uint64_t seed = 302;
};

template <typename S = float>
class StudentModel {
 public:
  explicit StudentModel(const StudentConfig& cfg = {}) : cfg_(cfg), backbone_(cfg.backbone) {
    Rng rng(cfg.seed);
    lstm_ = nn::Lstm<S>(backbone_.native_dim(), cfg.lstm_hidden, rng);
    fc1_ = nn::Linear<S>(cfg.lstm_hidden, cfg.fc_hidden, rng);
    fc2_ = nn::Linear<S>(cfg.fc_hidden, kNumActionLabels, rng);
  }

  const StudentConfig& config() const { return cfg_; }
  const nn::FrozenBackbone<S>& backbone() const { return backbone_; }

  // Frozen per-frame features (T, native) for one chunk.
  RowMat<S> extract_features(const Tensor<float>& chunk) const {
    return backbone_.frame_features(chunk);
  }

  ColVec<S> forward_from_features(const RowMat<S>& feats) const {
    const RowMat<S> out = lstm_.forward(feats);
    const RowMat<S> last = out.row(out.rows() - 1);
    const RowMat<S> h = nn::relu_mat<S>(fc1_.forward(last));
    return fc2_.forward(h).row(0).transpose();
  }

  ColVec<S> forward(const Tensor<float>& chunk) const {
    return forward_from_features(extract_features(chunk));
  }

  ChunkLabel classify(const Tensor<float>& chunk, double delta = kDefaultNoClassDelta) const {
    const ColVec<S> probs = nn::softmax<S>(forward(chunk));
    return apply_noclass_threshold(probs, delta);
  }

  struct TrainCache {
    typename nn::Lstm<S>::Cache lstm;
    typename nn::Linear<S>::Cache fc1, fc2;
    RowMat<S> h_out;
    Index t_len = 0;
  };

  ColVec<S> train_forward(const RowMat<S>& feats, TrainCache& cache) {
    const RowMat<S> out = lstm_.forward(feats, &cache.lstm);
    cache.t_len = feats.rows();
    const RowMat<S> last = out.row(out.rows() - 1);
    cache.h_out = nn::relu_mat<S>(fc1_.forward(last, cache.fc1));
    return fc2_.forward(cache.h_out, cache.fc2).row(0).transpose();
  }

  void train_backward(const TrainCache& cache, const ColVec<S>& dlogits) {
    RowMat<S> d = fc2_.backward(cache.fc2, dlogits.transpose());
    d = (d.array() * (cache.h_out.array() > S(0)).template cast<S>()).matrix();
    const RowMat<S> dlast = fc1_.backward(cache.fc1, d);
    RowMat<S> dout = RowMat<S>::Zero(cache.t_len, lstm_.hidden_size());
    dout.row(cache.t_len - 1) = dlast.row(0);
    lstm_.backward(cache.lstm, dout);
  }

  void zero_grad() {
    lstm_.zero_grad();
    fc1_.zero_grad();
    fc2_.zero_grad();
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> list;
    lstm_.params("lstm", list);
    fc1_.params("fc1", list);
    fc2_.params("fc2", list);
    return list;
  }

  Footprint footprint() const {
    return {lstm_.param_count() + fc1_.param_count() + fc2_.param_count(),
            backbone_.param_count()};
  }

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) {
    nlohmann::json meta{{"config", student_config_to_json(cfg_)}};
    if (!extra.is_null() && !extra.empty()) meta["train"] = extra;
    nn::save_checkpoint(path, "student", meta, params());
  }

  static StudentModel load(const std::filesystem::path& path, bool materialize = true) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    if (ckpt.kind != "student")
      throw ComponentNotLoaded("expected a student checkpoint, found '" + ckpt.kind + "'");
    StudentConfig cfg = student_config_from_json(ckpt.meta.at("config"));
    cfg.backbone.materialize = materialize;
    StudentModel model(cfg);
    nn::apply_checkpoint(ckpt, model.params());
    return model;
  }

  static nlohmann::json student_config_to_json(const StudentConfig& c) {
    return {{"backbone", nn::backbone_config_to_json(c.backbone)},
            {"lstm_hidden", c.lstm_hidden},
            {"fc_hidden", c.fc_hidden},
            {"seed", c.seed}};
  }

  static StudentConfig student_config_from_json(const nlohmann::json& j) {
    StudentConfig c;
    if (j.contains("backbone")) c.backbone = nn::backbone_config_from_json(j.at("backbone"));
    c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
    c.fc_hidden = j.value("fc_hidden", c.fc_hidden);
    c.seed = j.value("seed", c.seed);
    return c;
  }

 private:
  StudentConfig cfg_;
  nn::FrozenBackbone<S> backbone_;
  nn::Lstm<S> lstm_;
  nn::Linear<S> fc1_, fc2_;
};

// Teacher and student share one frozen backbone configuration so the student
// consumes exactly the features the teacher was built over.
template <typename S = float>
inline std::pair<TeacherModel<S>, StudentModel<S>> build_teacher_student(
    const nn::BackboneConfig& backbone, TeacherConfig tcfg = {}, StudentConfig scfg = {}) {
  tcfg.backbone = backbone;
  scfg.backbone = backbone;
  return {TeacherModel<S>(tcfg), StudentModel<S>(scfg)};
}

}  // namespace ssbd
