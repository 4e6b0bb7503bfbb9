#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ssbd/m1.hpp"
#include "ssbd/rng.hpp"

#include "helpers.hpp"

using namespace ssbd;
using ssbd::test::grad_check;

namespace {

Tensor<float> noise_chunk(std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> chunk({kChunkFrames, 3, kFrameSize, kFrameSize});
  for (Index i = 0; i < chunk.size(); ++i) chunk.flat()(i) = static_cast<float>(rng.uniform());
  return chunk;
}

template <typename S>
Tensor<S> noise_batch(Index b, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<S> batch({b, kChunkFrames, 3, kFrameSize, kFrameSize});
  for (Index i = 0; i < batch.size(); ++i) batch.flat()(i) = static_cast<S>(rng.uniform());
  return batch;
}

}  // namespace

TEST_CASE("m1 footprint is the layer sum") {
  BinaryNet<float> net;
  // conv 672, temporal 3504, bn 96, fc1 33320, fc2 681.
  CHECK(net.footprint().learnable == 38273);
  CHECK(net.config().spatial_channels == 24);
}

TEST_CASE("m1 config json round trip") {
  M1Config cfg;
  cfg.spatial_channels = 8;
  cfg.head_hidden = 32;
  cfg.seed = 77;
  const auto back = m1_config_from_json(m1_config_to_json(cfg));
  CHECK(back.spatial_channels == 8);
  CHECK(back.head_hidden == 32);
  CHECK(back.seed == 77);
  CHECK(back.temporal_channels == cfg.temporal_channels);

  // Missing keys fall back to defaults.
  const auto sparse = m1_config_from_json(nlohmann::json{{"head_hidden", 12}});
  CHECK(sparse.head_hidden == 12);
  CHECK(sparse.spatial_channels == 24);
}

TEST_CASE("m1 forward is a probability and is deterministic in the seed") {
  M1Config cfg;
  cfg.spatial_channels = 6;
  cfg.temporal_channels = 8;
  cfg.head_hidden = 16;
  BinaryNet<float> a(cfg);
  BinaryNet<float> b(cfg);

  const auto chunk = noise_chunk(1);
  const float pa = a.forward(chunk);
  CHECK(pa > 0.f);
  CHECK(pa < 1.f);
  CHECK(b.forward(chunk) == pa);
  CHECK(a.forward(chunk) == pa);

  M1Config other = cfg;
  other.seed = 999;
  BinaryNet<float> c(other);
  CHECK(c.forward(chunk) != pa);
}

TEST_CASE("m1 rejects malformed chunks") {
  M1Config cfg;
  cfg.spatial_channels = 4;
  cfg.temporal_channels = 4;
  cfg.head_hidden = 8;
  BinaryNet<float> net(cfg);

  CHECK_THROWS_AS(net.forward(Tensor<float>({39, 3, kFrameSize, kFrameSize})), ShapeMismatch);
  CHECK_THROWS_AS(net.forward(Tensor<float>({kChunkFrames, 1, kFrameSize, kFrameSize})),
                  ShapeMismatch);
  CHECK_THROWS_AS(net.forward(Tensor<float>({kChunkFrames, 3, 50, 50})), ShapeMismatch);
  CHECK_THROWS_AS(net.forward_batch(Tensor<float>({kChunkFrames, 3, kFrameSize, kFrameSize})),
                  ShapeMismatch);

  typename BinaryNet<float>::TrainCache cache;
  CHECK_THROWS_AS(net.train_forward(Tensor<float>({1, 39, 3, kFrameSize, kFrameSize}), cache),
                  ShapeMismatch);
}

TEST_CASE("m1 checkpoint round trips bit for bit") {
  const auto dir = ssbd::test::temp_dir("m1_ckpt");
  M1Config cfg;
  cfg.spatial_channels = 6;
  cfg.temporal_channels = 8;
  cfg.head_hidden = 16;
  cfg.seed = 5;
  BinaryNet<float> net(cfg);

  // Perturb the state away from the seeded init so the load has to work.
  auto params = net.params();
  Rng rng(404);
  for (auto& p : params)
    for (Index i = 0; i < p.size; ++i) p.value[i] += static_cast<float>(rng.normal() * 0.01);

  const auto chunk = noise_chunk(2);
  const float before = net.forward(chunk);

  net.save(dir / "m1.ckpt", {{"epochs", 3}});
  auto loaded = BinaryNet<float>::load(dir / "m1.ckpt");
  CHECK(loaded.config().head_hidden == 16);
  CHECK(loaded.forward(chunk) == before);

  // Loading a checkpoint of another kind is refused.
  nn::save_checkpoint(dir / "other.ckpt", "m2", nlohmann::json{{"config", nlohmann::json::object()}},
                      net.state());
  CHECK_THROWS_AS(BinaryNet<float>::load(dir / "other.ckpt"), ComponentNotLoaded);
  std::filesystem::remove_all(dir);
}

TEST_CASE("m1 training gradients match finite differences") {
  M1Config cfg;
  cfg.spatial_channels = 3;
  cfg.temporal_channels = 4;
  cfg.head_hidden = 6;
  cfg.spatial_stride = 4;
  cfg.pool = 2;
  cfg.temporal_stride = 4;
  cfg.seed = 11;
  BinaryNet<double> net(cfg);

  const auto batch = noise_batch<double>(2, 21);
  const std::vector<double> targets = {1.0, 0.0};

  auto params = net.params();
  const auto result = grad_check<double>(
      params,
      [&] {
        net.zero_grad();
        typename BinaryNet<double>::TrainCache cache;
        const ColVec<double> logits = net.train_forward(batch, cache);
        ColVec<double> dlogits(logits.size());
        double loss = 0;
        for (Index i = 0; i < logits.size(); ++i) {
          double d = 0;
          loss += nn::bce_with_logits(logits(i), targets[static_cast<std::size_t>(i)], &d);
          dlogits(i) = d;
        }
        net.train_backward(cache, dlogits);
        return loss;
      },
      3);
  CHECK(result.max_rel_error < 1e-3);
}

TEST_CASE("m1 decision threshold sits at one half") {
  CHECK(m1_is_action(0.5));
  CHECK(m1_is_action(0.501));
  CHECK_FALSE(m1_is_action(0.499));
  CHECK_FALSE(m1_is_action(0.0));
  CHECK(m1_is_action(1.0));
}
