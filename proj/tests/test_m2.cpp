#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest/doctest.h>

#include <ssbd/m2.hpp>
#include <ssbd/nn/loss.hpp>

#include "helpers.hpp"

#include <cmath>

using namespace ssbd;

namespace {

Tensor<float> noise_keypoints(Rng& rng, Index frames = kChunkFrames, Index depth = 3) {
  Tensor<float> kp({frames, kNumJoints, depth});
  for (Index i = 0; i < kp.size(); ++i) kp.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
  return kp;
}

Tensor<float> noise_chunk(Rng& rng) {
  Tensor<float> chunk({kChunkFrames, 3, kFrameSize, kFrameSize});
  for (Index i = 0; i < chunk.size(); ++i)
    chunk.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
  return chunk;
}

M2Config tiny_m2_config() {
  M2Config cfg;
  cfg.backbone = {nn::BackboneArch::tiny, 16, 7011, true};
  cfg.lstm_hidden = 2;
  cfg.seed = 202;
  return cfg;
}

}  // namespace

TEST_CASE("keypoint_coords interleaves x and y per joint") {
  Tensor<float> kp({4, kNumJoints, 3});
  for (Index t = 0; t < 4; ++t)
    for (Index j = 0; j < kNumJoints; ++j) {
      kp(t, j, 0) = static_cast<float>(10 * t + j);
      kp(t, j, 1) = static_cast<float>(10 * t + j) + 0.5f;
      kp(t, j, 2) = 0.9f;
    }

  const RowMat<double> coords = keypoint_coords<double>(kp);
  REQUIRE(coords.rows() == 4);
  REQUIRE(coords.cols() ==
2 * kNumJoints);
  CHECK(coords(0, 0) == 0.0);
  CHECK(coords(0, 1) == 0.5);
  CHECK(coords(2, 2 * 5) == 25.0);
  CHECK(coords(2, 2 * 5 + 1) == 25.5);
  CHECK(coords(3, 2 * 16) == 46.0);

  Tensor<float> flat({4, kNumJoints, 2});
  flat.flat().setZero();
  flat(1, 2, 0) = 7.f;
  flat(1, 2, 1) = 8.f;
  const RowMat<float> c2 = keypoint_coords<float>(flat);
  CHECK(c2(1, 4) == 7.f);
  CHECK(c2(1, 5) == 8.f);
  CHECK(c2.row(0).norm() == 0.f);
}

TEST_CASE("keypoint_coords rejects malformed tensors") {
  CHECK_THROWS_AS(keypoint_coords<float>(Tensor<float>({4, 16, 3})), ShapeMismatch);
  CHECK_THROWS_AS(keypoint_coords<float>(Tensor<float>({4, kNumJoints, 4})), ShapeMismatch);
  CHECK_THROWS_AS(keypoint_coords<float>(Tensor<float>({4, kNumJoints})), ShapeMismatch);
}

TEST_CASE("representative frame is the one starting the largest move") {
  RowMat<float> coords = RowMat<float>::Zero(5, 2 * kNumJoints);
  // Displacements between consecutive rows: 1, 1, 3, 0.
  coords.row(1).setConstant(0.f);
  coords(1, 0) = 1.f;
  coords.row(2) = coords.row(1);
  coords(2, 0) = 2.f;
  coords.row(3) = coords.row(2);
  coords(3, 4) = 3.f;
  coords.row(4) = coords.row(3);
  CHECK(select_representative_frame(coords) == 2);

  SUBCASE("motionless sequence picks frame 0") {
    CHECK(select_representative_frame(RowMat<float>::Zero(6, 2 * kNumJoints)) == 0);
  }
  SUBCASE("a single frame has no displacement to compare") {
    CHECK(select_representative_frame(RowMat<float>::Zero(1, 2 * kNumJoints)) == 0);
  }
  SUBCASE("ties resolve to the earliest frame") {
    RowMat<float> tied = RowMat<float>::Zero(4, 2 * kNumJoints);
    tied(1, 0) = 2.f;  // |row1 - row0| = 2
    tied(2, 0) = 0.f;  // |row2 - row1| = 2 again
    tied.row(3) = tied.row(2);
    CHECK(select_representative_frame(tied) == 0);
  }
}

TEST_CASE("representative frame works straight from a keypoint tensor") {
  Tensor<float> kp({6, kNumJoints, 3});
  kp.flat().setZero();
  for (Index t = 0; t < 6; ++t) kp(t, 0, 0) = 0.1f * static_cast<float>(t);
  kp(4, 0, 0) = 5.f;  // jump between frames 3 and 4, then a big drop 4 -> 5
  kp(5, 0, 0) = 0.5f;
  // Displacement 3->4 is |5 - 0.3| = 4.7 and 4->5 is |0.5 - 5| = 4.5.
  CHECK(select_representative_frame(kp) == 3);
}

TEST_CASE("no-class threshold gates on max probability") {
  Eigen::Vector3d p(0.5, 0.3, 0.2);
  CHECK(apply_noclass_threshold(p, 0.10) == ChunkLabel::arm_flapping);

  Eigen::Vector3d spin(0.05, 0.15, 0.80);
  CHECK(apply_noclass_threshold(spin, 0.10) == ChunkLabel::spinning);
  CHECK(apply_noclass_threshold(Eigen::Vector3d(0.2, 0.6, 0.2), 0.10) == ChunkLabel::head_banging);

  SUBCASE("below the bar yields no_class") {
    Eigen::Vector3d weak(0.40, 0.35, 0.25);
    CHECK(apply_noclass_threshold(weak, 0.10) == ChunkLabel::no_class);
  }
  SUBCASE("hitting the bar exactly keeps the action") {
    Eigen::Vector3d edge(kNoClassBase + 0.10, 0.3, 0.27);
    CHECK(apply_noclass_threshold(edge, 0.10) == ChunkLabel::arm_flapping);
  }
  SUBCASE("a huge delta suppresses everything") {
    Eigen::Vector3d sure(0.98, 0.01, 0.01);
    CHECK(apply_noclass_threshold(sure, 0.70) == ChunkLabel::no_class);
  }
  SUBCASE("delta can relax the gate below the default") {
    Eigen::Vector3d weak(0.35, 0.33, 0.32);
    CHECK(apply_noclass_threshold(weak, 0.10) == ChunkLabel::no_class);
    CHECK(apply_noclass_threshold(weak, 0.0) == ChunkLabel::arm_flapping);
  }
  SUBCASE("wrong arity is rejected") {
    Eigen::Vector4d four(0.25, 0.25, 0.25, 0.25);
    CHECK_THROWS_AS(apply_noclass_threshold(four, 0.10), ShapeMismatch);
  }
}

TEST_CASE("default identifier concatenates a 2048-dim embedding with both lstm ends") {
  M2Config cfg;  // resnet18 projected to 2048, hidden 2
  cfg.backbone.materialize = false;
  ActionIdentifier<float> m2(cfg);

  CHECK(m2.concat_dim() == 2052);

  const Footprint fp = m2.footprint();
  // BiLstm(34, 2) holds 608 weights, the head another 2052 * 3 + 3.
  CHECK(fp.learnable == 6767);
  CHECK(fp.frozen == m2.backbone().param_count());
  CHECK(fp.frozen == 11181312 + 512 * 2048 + 2048);
  CHECK(fp.total() == fp.learnable + fp.frozen);

  nn::ParamList<float> list = m2.params();
  CHECK(nn::param_count(list) == fp.learnable);
}

TEST_CASE("m2 forward yields a proper distribution and is seed-deterministic") {
  Rng rng(501);
  const Tensor<float> chunk = noise_chunk(rng);
  const Tensor<float> kp = noise_keypoints(rng);

  ActionIdentifier<float> m2(tiny_m2_config());
  const Eigen::Vector3f probs = m2.forward(chunk, kp);
  CHECK(probs.sum() == doctest::Approx(1.0f).epsilon(1e-5));
  CHECK(probs.minCoeff() > 0.f);
  CHECK(probs.maxCoeff() < 1.f);

  SUBCASE("forward matches the two-part decomposition") {
    const ColVec<float> embed = m2.embed_representative(chunk, kp);
    CHECK(embed.size() == 16);
    const Eigen::Vector3f again = m2.probs_from_parts(embed, keypoint_coords<float>(kp));
    CHECK(again == probs);
  }
  SUBCASE("same config, same weights") {
    ActionIdentifier<float> twin(tiny_m2_config());
    CHECK(twin.forward(chunk, kp) == probs);
  }
  SUBCASE("a different seed moves the output") {
    M2Config other = tiny_m2_config();
    other.seed = 777;
    ActionIdentifier<float> rival(other);
    CHECK(rival.forward(chunk, kp) != probs);
  }
}

TEST_CASE("classify respects the adjustable no-class delta") {
  Rng rng(502);
  const Tensor<float> chunk = noise_chunk(rng);
  const Tensor<float> kp = noise_keypoints(rng);

  ActionIdentifier<float> m2(tiny_m2_config());
  const Eigen::Vector3f probs = m2.forward(chunk, kp);

  m2.set_noclass_delta(-1.0);  // threshold below zero, the argmax always wins
  Index arg = 0;
  probs.maxCoeff(&arg);
  CHECK(m2.classify(chunk, kp) == static_cast<ChunkLabel>(arg + 1));
  CHECK(m2.config().noclass_delta == -1.0);

  m2.set_noclass_delta(0.7);  // threshold above one, nothing passes
  CHECK(m2.classify(chunk, kp) == ChunkLabel::no_class);
}

TEST_CASE("m2 config survives a json round trip") {
  M2Config cfg = tiny_m2_config();
  cfg.noclass_delta = 0.05;
  cfg.seed = 99;
  const M2Config back = m2_config_from_json(m2_config_to_json(cfg));
  CHECK(back.backbone.arch == cfg.backbone.arch);
  CHECK(back.backbone.embed_dim == cfg.backbone.embed_dim);
  CHECK(back.lstm_hidden == cfg.lstm_hidden);
  CHECK(back.noclass_delta == cfg.noclass_delta);
  CHECK(back.seed == cfg.seed);

  const M2Config sparse = m2_config_from_json(nlohmann::json{{"lstm_hidden", 4}});
  CHECK(sparse.lstm_hidden == 4);
  CHECK(sparse.backbone.arch == nn::BackboneArch::resnet18);
  CHECK(sparse.noclass_delta == kDefaultNoClassDelta);
}

TEST_CASE("m2 checkpoints restore the exact weights") {
  Rng rng(503);
  const Tensor<float> chunk = noise_chunk(rng);
  const Tensor<float> kp = noise_keypoints(rng);

  ActionIdentifier<float> m2(tiny_m2_config());
  Rng noise(404);
  for (auto& p : m2.params())
    for (Index i = 0; i < p.size; ++i)
      p.value[i] += static_cast<float>(noise.uniform(-0.2, 0.2));
  const Eigen::Vector3f before = m2.forward(chunk, kp);

  const auto dir = test_helpers::temp_dir("m2_ckpt");
  const auto path = dir / "m2.ckpt";
  m2.save(path, {{"epochs", 12}});

  ActionIdentifier<float> restored = ActionIdentifier<float>::load(path);
  CHECK(restored.forward(chunk, kp) == before);
  CHECK(restored.config().lstm_hidden == m2.config().lstm_hidden);
  CHECK(restored.config().backbone.seed == m2.config().backbone.seed);

  SUBCASE("loading without the backbone still scores cached parts") {
    ActionIdentifier<float> shell = ActionIdentifier<float>::load(path, false);
    const ColVec<float> embed = m2.embed_representative(chunk, kp);
    CHECK(shell.probs_from_parts(embed, keypoint_coords<float>(kp)) == before);
    CHECK_THROWS_AS(shell.embed_representative(chunk, kp), BackboneUnavailable);
  }
  SUBCASE("a checkpoint of the wrong kind is refused") {
    AllFramesConfig acfg;
    acfg.backbone = {nn::BackboneArch::tiny, 0, 7011, true};
    AllFramesIdentifier<float> other(acfg);
    const auto wrong = dir / "allframes.ckpt";
    other.save(wrong);
    CHECK_THROWS_AS(ActionIdentifier<float>::load(wrong), ComponentNotLoaded);
    CHECK_THROWS_AS(AllFramesIdentifier<float>::load(path), ComponentNotLoaded);
  }
}

TEST_CASE("m2 training gradients agree with finite differences") {
  M2Config cfg;
  cfg.backbone = {nn::BackboneArch::tiny, 8, 7011, false};
  cfg.lstm_hidden = 3;
  cfg.seed = 11;
  ActionIdentifier<double> m2(cfg);

  Rng rng(504);
  ColVec<double> embed(8);
  for (Index i = 0; i < embed.size(); ++i) embed(i) = rng.uniform(-1.0, 1.0);
  RowMat<double> coords(6, 2 * kNumJoints);
  for (Index i = 0; i < coords.size(); ++i) coords.data()[i] = rng.uniform(0.0, 1.0);

  nn::ParamList<double> list = m2.params();
  const double rel = test_helpers::grad_check<double>(list, [&] {
    m2.zero_grad();
    typename ActionIdentifier<double>::TrainCache cache;
    const ColVec<double> logits = m2.train_forward(embed, coords, cache);
    ColVec<double> dlogits;
    const double loss = nn::ce_with_logits(logits, 1, &dlogits);
    m2.train_backward(cache, dlogits);
    return loss;
  });
  CHECK(rel < 1e-5);
}

TEST_CASE("all-frames variant consumes per-frame features next to coordinates") {
  AllFramesConfig cfg;
  cfg.backbone = {nn::BackboneArch::tiny, 0, 7011, true};
  cfg.lstm_hidden = 4;
  cfg.seed = 203;
  AllFramesIdentifier<float> net(cfg);

  Rng rng(505);
  const Tensor<float> chunk = noise_chunk(rng);
  const Tensor<float> kp = noise_keypoints(rng);

  const RowMat<float> feats = net.frame_features(chunk);
  CHECK(feats.rows() == kChunkFrames);
  CHECK(feats.cols() == 32);

  const Eigen::Vector3f probs = net.forward(chunk, kp);
  CHECK(probs.sum() == doctest::Approx(1.0f).epsilon(1e-5));
  CHECK(probs.minCoeff() > 0.f);
  CHECK(net.probs_from_parts(feats, keypoint_coords<float>(kp)) == probs);

  const Footprint fp = net.footprint();
  CHECK(fp.learnable == nn::param_count(net.params()));
  CHECK(fp.frozen == net.backbone().param_count());

  SUBCASE("classify applies the same threshold rule") {
    net.set_noclass_delta(0.7);
    CHECK(net.classify(chunk, kp) == ChunkLabel::no_class);
  }
  SUBCASE("checkpoint round trip") {
    const auto dir = test_helpers::temp_dir("m2_allframes_ckpt");
    const auto path = dir / "af.ckpt";
    net.save(path);
    AllFramesIdentifier<float> back = AllFramesIdentifier<float>::load(path);
    CHECK(back.forward(chunk, kp) == probs);
  }
}

TEST_CASE("all-frames config round trips and defaults hold") {
  AllFramesConfig cfg;
  CHECK(cfg.lstm_hidden == 8);
  CHECK(cfg.backbone.arch == nn::BackboneArch::resnet18);
  cfg.lstm_hidden = 6;
  cfg.noclass_delta = 0.2;
  const AllFramesConfig back = allframes_config_from_json(allframes_config_to_json(cfg));
  CHECK(back.lstm_hidden == 6);
  CHECK(back.noclass_delta == 0.2);
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("all-frames training gradients agree with finite differences") {
  AllFramesConfig cfg;
  cfg.backbone = {nn::BackboneArch::tiny, 0, 7011, false};
  cfg.lstm_hidden = 3;
  cfg.seed = 21;
  AllFramesIdentifier<double> net(cfg);

  Rng rng(506);
  RowMat<double> feats(5, 32);
  for (Index i = 0; i < feats.size(); ++i) feats.data()[i] = rng.uniform(-1.0, 1.0);
  RowMat<double> coords(5, 2 * kNumJoints);
  for (Index i = 0; i < coords.size(); ++i) coords.data()[i] = rng.uniform(0.0, 1.0);

  nn::ParamList<double> list = net.params();
  const double rel = test_helpers::grad_check<double>(list, [&] {
    net.zero_grad();
    typename AllFramesIdentifier<double>::TrainCache cache;
    const ColVec<double> logits = net.train_forward(feats, coords, cache);
    ColVec<double> dlogits;
    const double loss = nn::ce_with_logits(logits, 2, &dlogits);
    net.train_backward(cache, dlogits);
    return loss;
  });
  CHECK(rel < 1e-5);
}
