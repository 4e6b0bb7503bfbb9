#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/image.hpp"
#include "ssbd/nn/layers.hpp"
#include "ssbd/rng.hpp"
#include "ssbd/tensor.hpp"

// Frozen spatial feature extractors. Weights are drawn from a seeded
// generator at construction, so a (arch, seed) pair pins the features
// bit-for-bit across runs and machines; checkpoints only need to record the
// pair. Pretrained snapshots can be dropped in later by loading weights over
// the generated ones without touching any caller.

namespace ssbd::nn {

enum class BackboneArch { vgg19, resnet18, tiny };

inline std::string arch_name(BackboneArch a) {
  switch (a) {
    case BackboneArch::vgg19: return "vgg19";
    case BackboneArch::resnet18: return "resnet18";
    case BackboneArch::tiny: return "tiny";
  }
  return "?";
}

inline BackboneArch arch_from_name(const std::string& s) {
  if (s == "vgg19") return BackboneArch::vgg19;
  if (s == "resnet18") return BackboneArch::resnet18;
  if (s == "tiny") return BackboneArch::tiny;
  throw SchemaViolation("unknown backbone arch: " + s);
}

struct BackboneConfig {
  BackboneArch arch = BackboneArch::resnet18;
  Index embed_dim = 0;  // 0 keeps the native width; otherwise a fixed random projection
  std::uint64_t seed = 7011;
  bool materialize = true;  // false builds a weightless shell good only for counting
};

inline nlohmann::json backbone_config_to_json(const BackboneConfig& c) {
  return {{"arch", arch_name(c.arch)}, {"embed_dim", c.embed_dim}, {"seed", c.seed}};
}

inline BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  if (j.contains("arch")) c.arch = arch_from_name(j.at("arch").get<std::string>());
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.seed = j.value("seed", c.seed);
  return c;
}

// The torch BasicBlock: two 3x3 convs with batch norm, an optional strided
// 1x1 projection on the skip path, ReLU on the sum.
template <typename S>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(Index in_c, Index out_c, Index stride, Rng& rng)
      : conv1(in_c, out_c, 3, stride, 1, rng), bn1(out_c), conv2(out_c, out_c, 3, 1, 1, rng),
        bn2(out_c) {
    if (stride != 1 || in_c != out_c) {
      down_conv.emplace(in_c, out_c, 1, stride, 0, rng);
      down_bn.emplace(out_c);
    }
  }

  Index out_channels() const { return conv2.out_channels(); }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> y = relu(bn1.forward(conv1.forward(x)));
    y = bn2.forward(conv2.forward(y));
    if (down_conv.has_value()) {
      const Tensor<S> skip = down_bn->forward(down_conv->forward(x));
      y.flat() += skip.flat();
    } else {
      y.flat() += x.flat();
    }
    return relu(y);
  }

  struct Cache {
    typename Conv2d<S>::Cache c1, c2;
    typename BatchNorm<S>::Cache b1, b2;
    ReluCache<S> r1;
    typename Conv2d<S>::Cache cd;
    typename BatchNorm<S>::Cache bd;
    Tensor<S> pre_relu;
  };

  Tensor<S> forward_train(const Tensor<S>& x, Cache& cache) {
    Tensor<S> y = relu(bn1.forward_train(conv1.forward(x, cache.c1), cache.b1), cache.r1);
    y = bn2.forward_train(conv2.forward(y, cache.c2), cache.b2);
    if (down_conv.has_value()) {
      const Tensor<S> skip = down_bn->forward_train(down_conv->forward(x, cache.cd), cache.bd);
      y.flat() += skip.flat();
    } else {
      y.flat() += x.flat();
    }
    cache.pre_relu = y;
    return relu(y);
  }

  Tensor<S> backward(const Cache& cache, const Tensor<S>& dy) {
    Tensor<S> d(dy.shape());
    for (Index i = 0; i < dy.size(); ++i)
      d.data()[i] = cache.pre_relu.data()[i] > S(0) ? dy.data()[i] : S(0);
    Tensor<S> dbranch = conv2.backward(cache.c2, bn2.backward(cache.b2, d));
    dbranch = conv1.backward(cache.c1, bn1.backward(cache.b1, relu_backward(cache.r1, dbranch)));
    if (down_conv.has_value()) {
      const Tensor<S> dskip = down_conv->backward(cache.cd, down_bn->backward(cache.bd, d));
      dbranch.flat() += dskip.flat();
    } else {
      dbranch.flat() += d.flat();
    }
    return dbranch;
  }

  void zero_grad() {
    conv1.zero_grad();
    conv2.zero_grad();
    bn1.zero_grad();
    bn2.zero_grad();
    if (down_conv.has_value()) {
      down_conv->zero_grad();
      down_bn->zero_grad();
    }
  }

  void params(const std::string& prefix, ParamList<S>& list) {
    conv1.params(prefix + ".conv1", list);
    bn1.params(prefix + ".bn1", list);
    conv2.params(prefix + ".conv2", list);
    bn2.params(prefix + ".bn2", list);
    if (down_conv.has_value()) {
      down_conv->params(prefix + ".down_conv", list);
      down_bn->params(prefix + ".down_bn", list);
    }
  }

  void buffers(const std::string& prefix, ParamList<S>& list) {
    bn1.buffers(prefix + ".bn1", list);
    bn2.buffers(prefix + ".bn2", list);
    if (down_bn.has_value()) down_bn->buffers(prefix + ".down_bn", list);
  }

  Index param_count() const {
    Index n = conv1.param_count() + bn1.param_count() + conv2.param_count() + bn2.param_count();
    if (down_conv.has_value()) n += down_conv->param_count() + down_bn->param_count();
    return n;
  }

  Conv2d<S> conv1;
  BatchNorm<S> bn1;
  Conv2d<S> conv2;
  BatchNorm<S> bn2;
  std::optional<Conv2d<S>> down_conv;
  std::optional<BatchNorm<S>> down_bn;
};

namespace detail {

// Channel plan for the VGG-19 feature stack; -1 marks a 2x2 max pool.
inline const std::vector<int>& vgg19_plan() {
  static const std::vector<int> plan = {64,  64,  -1, 128, 128, -1, 256, 256, 256, 256, -1, 512,
                                        512, 512, 512, -1,  512, 512, 512, 512, -1};
  return plan;
}

struct BlockSpec {
  Index in, out, stride;
};

inline const std::vector<BlockSpec>& resnet18_plan() {
  static const std::vector<BlockSpec> plan = {{64, 64, 1},   {64, 64, 1},   {64, 128, 2},
                                              {128, 128, 1}, {128, 256, 2}, {256, 256, 1},
                                              {256, 512, 2}, {512, 512, 1}};
  return plan;
}

inline long long conv_params(long long in, long long out, long long k) {
  return in * out * k * k + out;
}

// Random conv stacks grow activations multiplicatively, unlike the trained
// networks they stand in for; rescaling each output to zero mean and unit
// variance keeps downstream heads in a trainable regime.
template <typename S, typename Derived>
void standardize(Eigen::MatrixBase<Derived>& x) {
  const S mean = x.mean();
  const S var = (x.array() - mean).square().mean();
  x = (x.array() - mean) / std::sqrt(var + S(1e-8));
}

inline long long block_params(const BlockSpec& b) {
  long long n = conv_params(b.in, b.out, 3) + conv_params(b.out, b.out, 3) + 4 * b.out;
  if (b.stride != 1 || b.in != b.out) n += conv_params(b.in, b.out, 1) + 2 * b.out;
  return n;
}

}  // namespace detail

inline Index backbone_native_dim(BackboneArch arch) {
  switch (arch) {
    case BackboneArch::vgg19: return 1000;
    case BackboneArch::resnet18: return 512;
    case BackboneArch::tiny: return 32;
  }
  return 0;
}

inline Index backbone_input_size(BackboneArch arch) {
  switch (arch) {
    case BackboneArch::vgg19: return 224;
    case BackboneArch::resnet18: return 112;
    case BackboneArch::tiny: return 64;
  }
  return 0;
}

// Parameter count of the frozen stack, computable without materializing.
inline long long backbone_param_count(const BackboneConfig& cfg) {
  long long n = 0;
  switch (cfg.arch) {
    case BackboneArch::vgg19: {
      long long in = 3;
      for (int c : detail::vgg19_plan()) {
        if (c < 0) continue;
        n += detail::conv_params(in, c, 3);
        in = c;
      }
      n += 25088LL * 4096 + 4096;  // 512 * 7 * 7 flattened
      n += 4096LL * 4096 + 4096;
      n += 4096LL * 1000 + 1000;
      break;
    }
    case BackboneArch::resnet18: {
      n += detail::conv_params(3, 64, 7) + 2 * 64;  // stem conv + bn
      for (const auto& b : detail::resnet18_plan()) n += detail::block_params(b);
      break;
    }
    case BackboneArch::tiny: {
      n += detail::conv_params(3, 8, 3) + detail::conv_params(8, 16, 3);
      n += detail::block_params({16, 32, 2});
      break;
    }
  }
  if (cfg.embed_dim > 0 && cfg.embed_dim != backbone_native_dim(cfg.arch))
    n += static_cast<long long>(backbone_native_dim(cfg.arch)) * cfg.embed_dim + cfg.embed_dim;
  return n;
}

template <typename S = float>
class FrozenBackbone {
 public:
  explicit FrozenBackbone(const BackboneConfig& cfg) : cfg_(cfg) {
    if (!cfg_.materialize) return;
    Rng rng(cfg_.seed);
    switch (cfg_.arch) {
      case BackboneArch::vgg19: {
        Index in = 3;
        for (int c : detail::vgg19_plan()) {
          if (c < 0) {
            pool_after_.back() = true;
            continue;
          }
          vconvs_.emplace_back(in, c, 3, 1, 1, rng);
          pool_after_.push_back(false);
          in = c;
        }
        fc_.emplace_back(25088, 4096, rng);
        fc_.emplace_back(4096, 4096, rng);
        fc_.emplace_back(4096, 1000, rng);
        break;
      }
      case BackboneArch::resnet18: {
        stem_ = Conv2d<S>(3, 64, 7, 2, 3, rng);
        stem_bn_ = BatchNorm<S>(64);
        for (const auto& b : detail::resnet18_plan())
          blocks_.emplace_back(b.in, b.out, b.stride, rng);
        break;
      }
      case BackboneArch::tiny: {
        stem_ = Conv2d<S>(3, 8, 3, 2, 1, rng);
        stem2_ = Conv2d<S>(8, 16, 3, 2, 1, rng);
        blocks_.emplace_back(16, 32, 2, rng);
        break;
      }
    }
    const Index native = backbone_native_dim(cfg_.arch);
    if (cfg_.embed_dim > 0 && cfg_.embed_dim != native)
      projection_.emplace(native, cfg_.embed_dim, rng);
  }

  const BackboneConfig& config() const { return cfg_; }
  bool materialized() const { return cfg_.materialize; }
  Index native_dim() const { return backbone_native_dim(cfg_.arch); }
  Index embed_dim() const { return cfg_.embed_dim > 0 ? cfg_.embed_dim : native_dim(); }
  Index input_size() const { return backbone_input_size(cfg_.arch); }
  long long param_count() const { return backbone_param_count(cfg_); }

  std::string identity() const {
    return arch_name(cfg_.arch) + "-random/seed=" + std::to_string(cfg_.seed) +
           "/embed=" + std::to_string(embed_dim());
  }

  // Full stack on one image, resized to the arch's input size. Embeddings
  // are unit length so linear heads train at sane step sizes.
  ColVec<S> embed(const Image& img) const {
    ColVec<S> feat = native_features(prepare(img));
    if (projection_.has_value())
      feat = relu_mat<S>(projection_->forward(feat.transpose()).transpose());
    feat /= feat.norm() + S(1e-8);
    return feat;
  }

  // Per-frame native features for a (T, 3, H, W) chunk tensor: (T, native).
  RowMat<S> frame_features(const Tensor<float>& chunk) const {
    const auto& sh = chunk.shape();
    if (sh.size() != 4 || sh[1] != 3) throw ShapeMismatch("expected a (T, 3, H, W) chunk");
    RowMat<S> out(sh[0], native_dim());
    Image frame = make_image(sh[2], sh[3]);
    for (Index t = 0; t < sh[0]; ++t) {
      std::copy(chunk.data() + t * frame.size(), chunk.data() + (t + 1) * frame.size(),
                frame.data());
      out.row(t) = native_features(prepare(frame)).transpose();
    }
    return out;
  }

  // Trunk activations feeding the final residual stage: (C, h, w). Only the
  // residual archs expose this split.
  Tensor<S> trunk_maps(const Image& img) const {
    require_materialized();
    if (cfg_.arch == BackboneArch::vgg19)
      throw ShapeMismatch("vgg19 has no trunk/stage split");
    Tensor<S> x = prepare(img);
    x = trunk_forward(x);
    auto view = x.flat();
    detail::standardize<S>(view);
    return x;
  }

  // Per-frame trunk maps for a chunk: (T, C, h, w).
  Tensor<S> chunk_trunk_maps(const Tensor<float>& chunk) const {
    const auto& sh = chunk.shape();
    if (sh.size() != 4 || sh[1] != 3) throw ShapeMismatch("expected a (T, 3, H, W) chunk");
    Image frame = make_image(sh[2], sh[3]);
    Tensor<S> out;
    for (Index t = 0; t < sh[0]; ++t) {
      std::copy(chunk.data() + t * frame.size(), chunk.data() + (t + 1) * frame.size(),
                frame.data());
      Tensor<S> maps = trunk_maps(frame);
      if (t == 0) {
        std::vector<Index> osh = {sh[0]};
        for (Index d : maps.shape()) osh.push_back(d);
        out.resize(osh);
      }
      std::copy(maps.data(), maps.data() + maps.size(), out.data() + t * maps.size());
    }
    return out;
  }

  // Shape of the final trainable stage's input, (C, h, w).
  std::vector<Index> trunk_map_shape() const {
    const Index s = input_size();
    if (cfg_.arch == BackboneArch::resnet18) {
      Index e = s / 2;            // stem conv
      e = (e + 2 - 3) / 2 + 1;    // max pool
      for (std::size_t i = 0; i + 1 < detail::resnet18_plan().size(); ++i)
        if (detail::resnet18_plan()[i].stride == 2) e = (e + 2 - 3) / 2 + 1;
      return {512, e, e};
    }
    if (cfg_.arch == BackboneArch::tiny) {
      const Index e = s / 4;
      return {16, e, e};
    }
    throw ShapeMismatch("vgg19 has no trunk/stage split");
  }

  // Spec of the final stage, for building a trainable twin.
  detail::BlockSpec final_stage_spec() const {
    if (cfg_.arch == BackboneArch::resnet18) return detail::resnet18_plan().back();
    if (cfg_.arch == BackboneArch::tiny) return {16, 32, 2};
    throw ShapeMismatch("vgg19 has no trunk/stage split");
  }

  // The frozen final stage + pooling, for the non-distilled paths.
  ColVec<S> stage_embed(const Tensor<S>& maps) const {
    require_materialized();
    return global_avg_pool_image(blocks_.back().forward(maps));
  }

  Tensor<S> prepare(const Image& img) const {
    const Index s = input_size();
    Image resized = (image_height(img) == s && image_width(img) == s)
                        ? img
                        : resize_bilinear(img, s, s);
    if constexpr (std::is_same_v<S, float>) return resized;
    return cast_tensor<S>(resized);
  }

 private:
  void require_materialized() const {
    if (!cfg_.materialize)
      throw BackboneUnavailable("backbone built in count-only mode: " + identity());
  }

  Tensor<S> trunk_forward(const Tensor<S>& x0) const {
    require_materialized();
    Tensor<S> x = x0;
    if (cfg_.arch == BackboneArch::resnet18) {
      x = relu(stem_bn_.forward(stem_.forward(x)));
      x = max_pool2d(x, 3, 2, 1);
      for (std::size_t i = 0; i + 1 < blocks_.size(); ++i) x = blocks_[i].forward(x);
      return x;
    }
    // tiny
    x = relu(stem_.forward(x));
    x = relu(stem2_.forward(x));
    return x;
  }

  ColVec<S> native_features(const Tensor<S>& input) const {
    require_materialized();
    ColVec<S> feat;
    if (cfg_.arch == BackboneArch::vgg19) {
      Tensor<S> x = input;
      for (std::size_t i = 0; i < vconvs_.size(); ++i) {
        x = relu(vconvs_[i].forward(x));
        if (pool_after_[i]) x = max_pool2d(x, 2, 2);
      }
      Eigen::Map<const RowMat<S>> flat(x.data(), 1, x.size());
      RowMat<S> h = relu_mat<S>(fc_[0].forward(flat));
      h = relu_mat<S>(fc_[1].forward(h));
      feat = fc_[2].forward(h).transpose();
    } else {
      Tensor<S> maps = trunk_forward(input);
      feat = global_avg_pool_image(blocks_.back().forward(maps));
    }
    detail::standardize<S>(feat);
    return feat;
  }

  BackboneConfig cfg_;
  std::vector<Conv2d<S>> vconvs_;
  std::vector<bool> pool_after_;
  std::vector<Linear<S>> fc_;
  Conv2d<S> stem_, stem2_;
  BatchNorm<S> stem_bn_;
  std::vector<ResidualBlock<S>> blocks_;
  std::optional<Linear<S>> projection_;
};

}  // namespace ssbd::nn
