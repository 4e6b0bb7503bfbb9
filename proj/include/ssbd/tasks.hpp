#pragma once

#include <utility>
#include <vector>

#include "ssbd/distill.hpp"
#include "ssbd/error.hpp"
#include "ssbd/m1.hpp"
#include "ssbd/m2.hpp"
#include "ssbd/nn/loss.hpp"
#include "ssbd/prefetch.hpp"
#include "ssbd/preprocess.hpp"
#include "ssbd/tensor.hpp"
#include "ssbd/train.hpp"

// TrainTask adapters. Frozen backbones never see gradients, so every task
// precomputes their outputs once and trains the learnable part from caches.
// All tasks borrow their dataset; the caller keeps it alive.

namespace ssbd {

template <typename S = float>
class M1Task final : public TrainTask<S> {
 public:
  M1Task(BinaryNet<S>& net, const std::vector<VideoChunk>* chunks, std::vector<Index> labels)
      : net_(net), chunks_(chunks), labels_(std::move(labels)) {
    if (chunks_ == nullptr || chunks_->size() != labels_.size())
      throw LengthMismatch("chunks and labels differ in length");
    for (const Index l : labels_)
      if (l != 0 && l != 1) throw SchemaViolation("m1 labels must be 0 or 1");
  }

  Index size() const override { return static_cast<Index>(labels_.size()); }
  Index num_classes() const override { return 2; }
  Index label_of(Index i) const override { return labels_[static_cast<std::size_t>(i)]; }

  S train_batch(const std::vector<Index>& batch) override {
    net_.zero_grad();
    const Index b = static_cast<Index>(batch.size());
    Tensor<S> x({b, kChunkFrames, 3, kFrameSize, kFrameSize});
    const Index stride = kChunkFrames * 3 * kFrameSize * kFrameSize;
    for (Index i = 0; i < b; ++i) {
      const Tensor<float>& src = (*chunks_)[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])].data;
      for (Index k = 0; k < stride; ++k) x.data()[i * stride + k] = static_cast<S>(src.data()[k]);
    }
    typename BinaryNet<S>::TrainCache cache;
    const ColVec<S> logits = net_.train_forward(x, cache);
    ColVec<S> dlogits(b);
    S loss = 0;
    for (Index i = 0; i < b; ++i) {
      S dz;
      loss += nn::bce_with_logits(logits(i),
                                  static_cast<S>(labels_[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])]),
                                  &dz);
      dlogits(i) = dz / static_cast<S>(b);
    }
    net_.train_backward(cache, dlogits);
    return loss / static_cast<S>(b);
  }

  Index predict(Index i) const override {
    return m1_is_action(static_cast<double>(net_.forward((*chunks_)[static_cast<std::size_t>(i)].data))) ? 1 : 0;
  }

  nn::ParamList<S> params() override { return net_.params(); }

 private:
  BinaryNet<S>& net_;
  const std::vector<VideoChunk>* chunks_;
  std::vector<Index> labels_;
};

// Trains the identifier head from cached representative-frame embeddings and
// keypoint coordinate rows; labels are action indices 0..2.
template <typename S = float>
class M2Task final : public TrainTask<S> {
 public:
  M2Task(ActionIdentifier<S>& net, std::vector<ColVec<S>> embeds, std::vector<RowMat<S>> coords,
         std::vector<Index> labels)
      : net_(net), embeds_(std::move(embeds)), coords_(std::move(coords)),
        labels_(std::move(labels)) {
    if (embeds_.size() != labels_.size() || coords_.size() != labels_.size())
      throw LengthMismatch("embeddings, coords and labels differ in length");
    for (const Index l : labels_)
      if (l < 0 || l >= kNumActionLabels)
        throw SchemaViolation("m2 labels must be action indices 0..2");
  }

  static M2Task from_chunks(ActionIdentifier<S>& net, const std::vector<VideoChunk>& chunks,
                            const std::vector<Tensor<float>>& keypoints) {
    std::vector<ColVec<S>> embeds;
    std::vector<RowMat<S>> coords;
    std::vector<Index> labels;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (!is_action(chunks[i].label))
        throw SchemaViolation("m2 training chunks must carry an action label");
      embeds.push_back(net.embed_representative(chunks[i].data, keypoints[i]));
      coords.push_back(keypoint_coords<S>(keypoints[i]));
      labels.push_back(static_cast<Index>(chunks[i].label) - 1);
    }
    return M2Task(net, std::move(embeds), std::move(coords), std::move(labels));
  }

  Index size() const override { return static_cast<Index>(labels_.size()); }
  Index num_classes() const override { return kNumActionLabels; }
  Index label_of(Index i) const override { return labels_[static_cast<std::size_t>(i)]; }

  S train_batch(const std::vector<Index>& batch) override {
    net_.zero_grad();
    const S inv_b = S(1) / static_cast<S>(batch.size());
    S loss = 0;
    for (const Index idx : batch) {
      const std::size_t i = static_cast<std::size_t>(idx);
      typename ActionIdentifier<S>::TrainCache cache;
      const ColVec<S> logits = net_.train_forward(embeds_[i], coords_[i], cache);
      ColVec<S> dlogits;
      loss += nn::ce_with_logits<S>(logits, labels_[i], &dlogits);
      net_.train_backward(cache, (dlogits * inv_b).eval());
    }
    return loss * inv_b;
  }

  Index predict(Index i) const override {
    const std::size_t k = static_cast<std::size_t>(i);
    Index arg = 0;
    net_.probs_from_parts(embeds_[k], coords_[k]).maxCoeff(&arg);
    return arg;
  }

  nn::ParamList<S> params() override { return net_.params(); }

 private:
  ActionIdentifier<S>& net_;
  std::vector<ColVec<S>> embeds_;
  std::vector<RowMat<S>> coords_;
  std::vector<Index> labels_;
};

// Same contract as M2Task for the all-frames ablation: cached per-frame
// feature rows instead of a single representative embedding.
template <typename S = float>
class AllFramesTask final : public TrainTask<S> {
 public:
  AllFramesTask(AllFramesIdentifier<S>& net, std::vector<RowMat<S>> feats,
                std::vector<RowMat<S>> coords, std::vector<Index> labels)
      : net_(net), feats_(std::move(feats)), coords_(std::move(coords)),
        labels_(std::move(labels)) {
    if (feats_.size() != labels_.size() || coords_.size() != labels_.size())
      throw LengthMismatch("features, coords and labels differ in length");
    for (const Index l : labels_)
      if (l < 0 || l >= kNumActionLabels)
        throw SchemaViolation("all-frames labels must be action indices 0..2");
  }

  static AllFramesTask from_chunks(AllFramesIdentifier<S>& net,
                                   const std::vector<VideoChunk>& chunks,
                                   const std::vector<Tensor<float>>& keypoints) {
    std::vector<RowMat<S>> feats;
    std::vector<RowMat<S>> coords;
    std::vector<Index> labels;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (!is_action(chunks[i].label))
        throw SchemaViolation("all-frames training chunks must carry an action label");
      feats.push_back(net.frame_features(chunks[i].data));
      coords.push_back(keypoint_coords<S>(keypoints[i]));
      labels.push_back(static_cast<Index>(chunks[i].label) - 1);
    }
    return AllFramesTask(net, std::move(feats), std::move(coords), std::move(labels));
  }

  Index size() const override { return static_cast<Index>(labels_.size()); }
  Index num_classes() const override { return kNumActionLabels; }
  Index label_of(Index i) const override { return labels_[static_cast<std::size_t>(i)]; }

  S train_batch(const std::vector<Index>& batch) override {
    net_.zero_grad();
    const S inv_b = S(1) / static_cast<S>(batch.size());
    S loss = 0;
    for (const Index idx : batch) {
      const std::size_t i = static_cast<std::size_t>(idx);
      typename AllFramesIdentifier<S>::TrainCache cache;
      const ColVec<S> logits = net_.train_forward(feats_[i], coords_[i], cache);
      ColVec<S> dlogits;
      loss += nn::ce_with_logits<S>(logits, labels_[i], &dlogits);
      net_.train_backward(cache, (dlogits * inv_b).eval());
    }
    return loss * inv_b;
  }

  Index predict(Index i) const override {
    const std::size_t k = static_cast<std::size_t>(i);
    Index arg = 0;
    net_.probs_from_parts(feats_[k], coords_[k]).maxCoeff(&arg);
    return arg;
  }

  nn::ParamList<S> params() override { return net_.params(); }

 private:
  AllFramesIdentifier<S>& net_;
  std::vector<RowMat<S>> feats_;
  std::vector<RowMat<S>> coords_;
  std::vector<Index> labels_;
};

// Child/adult head over cached backbone features, one row per image.
template <typename S = float>
class PrefetchTask final : public TrainTask<S> {
 public:
  PrefetchTask(ChildClassifier<S>& net, RowMat<S> features, std::vector<Index> labels)
      : net_(net), features_(std::move(features)), labels_(std::move(labels)) {
    if (features_.rows() != static_cast<Index>(labels_.size()))
      throw LengthMismatch("features and labels differ in length");
    for (const Index l : labels_)
      if (l != 0 && l != 1) throw SchemaViolation("child/adult labels must be 0 or 1");
  }

  Index size() const override { return static_cast<Index>(labels_.size()); }
  Index num_classes() const override { return 2; }
  Index label_of(Index i) const override { return labels_[static_cast<std::size_t>(i)]; }

  S train_batch(const std::vector<Index>& batch) override {
    net_.zero_grad();
    const Index b = static_cast<Index>(batch.size());
    RowMat<S> x(b, features_.cols());
    for (Index i = 0; i < b; ++i) x.row(i) = features_.row(batch[static_cast<std::size_t>(i)]);
    typename ChildClassifier<S>::TrainCache cache;
    const ColVec<S> logits = net_.train_forward(x, cache);
    ColVec<S> dlogits(b);
    S loss = 0;
    for (Index i = 0; i < b; ++i) {
      S dz;
      loss += nn::bce_with_logits(logits(i),
                                  static_cast<S>(labels_[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])]),
                                  &dz);
      dlogits(i) = dz / static_cast<S>(b);
    }
    net_.train_backward(cache, dlogits);
    return loss / static_cast<S>(b);
  }

  Index predict(Index i) const override {
    return net_.prob_from_features(features_.row(i).transpose()) >= S(0.5) ? 1 : 0;
  }

  nn::ParamList<S> params() override { return net_.params(); }

 private:
  ChildClassifier<S>& net_;
  RowMat<S> features_;
  std::vector<Index> labels_;
};

// Teacher over cached trunk maps; plain cross-entropy on action labels.
template <typename S = float>
class TeacherTask final : public TrainTask<S> {
 public:
  TeacherTask(TeacherModel<S>& net, std::vector<Tensor<S>> maps, std::vector<Index> labels)
      : net_(net), maps_(std::move(maps)), labels_(std::move(labels)) {
    if (maps_.size() != labels_.size()) throw LengthMismatch("maps and labels differ in length");
  }

  Index size() const override { return static_cast<Index>(labels_.size()); }
  Index num_classes() const override { return kNumActionLabels; }
  Index label_of(Index i) const override { return labels_[static_cast<std::size_t>(i)]; }

  S train_batch(const std::vector<Index>& batch) override {
    net_.zero_grad();
    const S inv_b = S(1) / static_cast<S>(batch.size());
    S loss = 0;
    for (const Index idx : batch) {
      const std::size_t i = static_cast<std::size_t>(idx);
      typename TeacherModel<S>::TrainCache cache;
      const ColVec<S> logits = net_.train_forward(maps_[i], cache);
      ColVec<S> dlogits;
      loss += nn::ce_with_logits<S>(logits, labels_[i], &dlogits);
      net_.train_backward(cache, (dlogits * inv_b).eval());
    }
    return loss * inv_b;
  }

  Index predict(Index i) const override {
    Index arg = 0;
    net_.forward_from_maps(maps_[static_cast<std::size_t>(i)]).maxCoeff(&arg);
    return arg;
  }

  nn::ParamList<S> params() override { return net_.params(); }

 private:
  TeacherModel<S>& net_;
  std::vector<Tensor<S>> maps_;
  std::vector<Index> labels_;
};

// Student under the blended distillation loss; teacher logits are fixed.
template <typename S = float>
class DistillTask final : public TrainTask<S> {
 public:
  DistillTask(StudentModel<S>& net, std::vector<RowMat<S>> features, RowMat<S> teacher_logits,
              std::vector<Index> labels, DistillConfig cfg = {})
      : net_(net), features_(std::move(features)), teacher_logits_(std::move(teacher_logits)),
        labels_(std::move(labels)), cfg_(cfg) {
    if (features_.size() != labels_.size() ||
        teacher_logits_.rows() != static_cast<Index>(labels_.size()))
      throw LengthMismatch("features, teacher logits and labels differ in length");
  }

  Index size() const override { return static_cast<Index>(labels_.size()); }
  Index num_classes() const override { return kNumActionLabels; }
  Index label_of(Index i) const override { return labels_[static_cast<std::size_t>(i)]; }

  S train_batch(const std::vector<Index>& batch) override {
    net_.zero_grad();
    const S inv_b = S(1) / static_cast<S>(batch.size());
    S loss = 0;
    for (const Index idx : batch) {
      const std::size_t i = static_cast<std::size_t>(idx);
      typename StudentModel<S>::TrainCache cache;
      const ColVec<S> logits = net_.train_forward(features_[i], cache);
      ColVec<S> grad;
      loss += distillation_loss<S>(logits, teacher_logits_.row(idx).transpose(), labels_[i],
                                   cfg_, &grad);
      net_.train_backward(cache, (grad * inv_b).eval());
    }
    return loss * inv_b;
  }

  Index predict(Index i) const override {
    Index arg = 0;
    net_.forward_from_features(features_[static_cast<std::size_t>(i)]).maxCoeff(&arg);
    return arg;
  }

  nn::ParamList<S> params() override { return net_.params(); }

 private:
  StudentModel<S>& net_;
  std::vector<RowMat<S>> features_;
  RowMat<S> teacher_logits_;
  std::vector<Index> labels_;
  DistillConfig cfg_;
};

}  // namespace ssbd
