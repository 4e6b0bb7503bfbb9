#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ssbd/nn/checkpoint.hpp"
#include "ssbd/nn/layers.hpp"
#include "ssbd/nn/footprint.hpp"
#include "ssbd/nn/loss.hpp"
#include "ssbd/preprocess.hpp"

/// Stage one: a small (2+1)D network that scores a 40-frame chunk for the
// presence of any self-stimulatory action. Spatial 3x3 convolution over each
// frame, average pooling, then a temporal convolution across frames, batch
// norm, global average pooling and a two-layer head producing one logit.

namespace ssbd {

struct M1Config {
  Index spatial_channels = 24;
  Index temporal_channels = 48;
  Index head_hidden = 680;
  Index spatial_stride = 2;
  Index pool = 2;
  Index temporal_stride = 2;
  std::uint64_t seed = 101;
};

inline nlohmann::json m1_config_to_json(const M1Config& c) {
  return {{"spatial_channels", c.spatial_channels}, {"temporal_channels", c.temporal_channels},
          {"head_hidden", c.head_hidden},           {"spatial_stride", c.spatial_stride},
          {"pool", c.pool},                         {"temporal_stride", c.temporal_stride},
          {"seed", c.seed}};
}

inline M1Config m1_config_from_json(const nlohmann::json& j) {
  M1Config c;
  c.spatial_channels = j.value("spatial_channels", c.spatial_channels);
  c.temporal_channels = j.value("temporal_channels", c.temporal_channels);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.spatial_stride = j.value("spatial_stride", c.spatial_stride);
  c.pool = j.value("pool", c.pool);
  c.temporal_stride = j.value("temporal_stride", c.temporal_stride);
  c.seed = j.value("seed", c.seed);
  return c;
}

template <typename S = float>
class BinaryNet {
 public:
  explicit BinaryNet(const M1Config& cfg = {}) : cfg_(cfg) {
    Rng rng(cfg.seed);
    spatial_ = nn::Conv2d<S>(3, cfg.spatial_channels, 3, cfg.spatial_stride, 1, rng);
    temporal_ = nn::TemporalConv<S>(cfg.spatial_channels, cfg.temporal_channels, 3,
                                    cfg.temporal_stride, 1, rng);
    bn_ = nn::BatchNorm<S>(cfg.temporal_channels);
    fc1_ = nn::Linear<S>(cfg.temporal_channels, cfg.head_hidden, rng);
    fc2_ = nn::Linear<S>(cfg.head_hidden, 1, rng);
  }

  const M1Config& config() const { return cfg_; }

  // batch: (B, 40, 3, 100, 100) -> action probabilities in (0, 1).
  ColVec<S> forward_batch(const Tensor<S>& batch) const {
    ColVec<S> logits = infer_logits(batch);
    for (Index i = 0; i < logits.size(); ++i) logits(i) = nn::sigmoid(logits(i));
    return logits;
  }

  S forward(const Tensor<float>& chunk) const {
    check_chunk_shape(chunk.shape(), 4);
    Tensor<S> batch({1, kChunkFrames, 3, kFrameSize, kFrameSize});
    copy_in(chunk, batch);
    return forward_batch(batch)(0);
  }

  struct TrainCache {
    typename nn::Conv2d<S>::Cache conv;
    std::vector<Index> pooled_shape;
    typename nn::TemporalConv<S>::Cache temporal;
    typename nn::BatchNorm<S>::Cache bn;
    nn::ReluCache<S> relu;
    std::vector<Index> bn_out_shape;
    typename nn::Linear<S>::Cache fc1, fc2;
    RowMat<S> fc1_out;
  };

  // batch: (B, 40, 3, 100, 100) -> raw logits (B). Updates batch norm
  // statistics, so this overload is for training only.
  ColVec<S> train_forward(const Tensor<S>& batch, TrainCache& cache) {
    check_chunk_shape(batch.shape(), 5);
    Tensor<S> x = spatial_.forward(batch, cache.conv);
    Tensor<S> pooled = nn::avg_pool2d(x, cfg_.pool);
    cache.pooled_shape = pooled.shape();
    x = temporal_.forward(pooled, cache.temporal);
    cache.bn_out_shape = x.shape();
    x = bn_.forward_train(x, cache.bn);
    x = nn::relu(x, cache.relu);
    RowMat<S> feat = nn::global_avg_pool_video(x);
    cache.fc1_out = nn::relu_mat<S>(fc1_.forward(feat, cache.fc1));
    return fc2_.forward(cache.fc1_out, cache.fc2).col(0);
  }

  void train_backward(const TrainCache& cache, const ColVec<S>& dlogits) {
    RowMat<S> dy = dlogits;
    RowMat<S> dh = fc2_.backward(cache.fc2, dy);
    dh = (dh.array() * (cache.fc1_out.array() > S(0)).template cast<S>()).matrix();
    RowMat<S> dfeat = fc1_.backward(cache.fc1, dh);
    Tensor<S> dx = nn::global_avg_pool_video_backward(cache.bn_out_shape, dfeat);
    dx = nn::relu_backward(cache.relu, dx);
    dx = bn_.backward(cache.bn, dx);
    dx = temporal_.backward(cache.temporal, dx);
    dx = nn::avg_pool2d_backward(spatial_.out_shape(cache.conv.x.shape()), cfg_.pool, dx);
    spatial_.backward(cache.conv, dx);
  }

  void zero_grad() {
    spatial_.zero_grad();
    temporal_.zero_grad();
    bn_.zero_grad();
    fc1_.zero_grad();
    fc2_.zero_grad();
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> list;
    spatial_.params("spatial", list);
    temporal_.params("temporal", list);
    bn_.params("bn", list);
    fc1_.params("fc1", list);
    fc2_.params("fc2", list);
    return list;
  }

  nn::ParamList<S> state() {
    nn::ParamList<S> list = params();
    bn_.buffers("bn", list);
    return list;
  }

  Footprint footprint() const {
    Footprint f;
    f.learnable = spatial_.param_count() + temporal_.param_count() + bn_.param_count() +
                  fc1_.param_count() + fc2_.param_count();
    return f;
  }

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) {
    nlohmann::json meta{{"config", m1_config_to_json(cfg_)}};
    if (!extra.is_null() && !extra.empty()) meta["train"] = extra;
    nn::save_checkpoint(path, "m1", meta, state());
  }

  static BinaryNet load(const std::filesystem::path& path) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(path);
    if (ckpt.kind != "m1")
      throw ComponentNotLoaded("expected an m1 checkpoint, found '" + ckpt.kind + "'");
    BinaryNet net(m1_config_from_json(ckpt.meta.at("config")));
    nn::apply_checkpoint(ckpt, net.state());
    return net;
  }

 private:
  static void check_chunk_shape(const std::vector<Index>& sh, std::size_t want_dims) {
    const bool ok = sh.size() == want_dims && sh[sh.size() - 4] == kChunkFrames &&
                    sh[sh.size() - 3] == 3 && sh[sh.size() - 2] == kFrameSize &&
                    sh[sh.size() - 1] == kFrameSize;
    if (!ok) throw ShapeMismatch("expected (B, 40, 3, 100, 100) input");
  }

  static void copy_in(const Tensor<float>& chunk, Tensor<S>& batch) {
    for (Index i = 0; i < chunk.size(); ++i) batch.data()[i] = static_cast<S>(chunk.data()[i]);
  }

  ColVec<S> infer_logits(const Tensor<S>& batch) const {
    check_chunk_shape(batch.shape(), 5);
    Tensor<S> x = spatial_.forward(batch);
    x = nn::avg_pool2d(x, cfg_.pool);
    x = temporal_.forward(x);
    x = bn_.forward(x);
    x = nn::relu(x);
    const RowMat<S> feat = nn::global_avg_pool_video(x);
    const RowMat<S> h = nn::relu_mat<S>(fc1_.forward(feat));
    return fc2_.forward(h).col(0);
  }

  M1Config cfg_;
  nn::Conv2d<S> spatial_;
  nn::TemporalConv<S> temporal_;
  nn::BatchNorm<S> bn_;
  nn::Linear<S> fc1_, fc2_;
};

inline bool m1_is_action(double prob) { return prob >= 0.5; }

}  // namespace ssbd
