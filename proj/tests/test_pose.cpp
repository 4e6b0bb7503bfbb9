#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ssbd/pose.hpp"
#include "ssbd/rng.hpp"

using namespace ssbd;

namespace {

// Paints a bright axis-aligned rectangle on a dark frame.
Image frame_with_block(Index h, Index w, Index top, Index left, Index bh, Index bw,
                       float value = 1.f) {
  Image img = make_image(h, w, 0.f);
  for (Index r = top; r < top + bh; ++r)
    for (Index c = left; c < left + bw; ++c)
      for (Index ch = 0; ch < 3; ++ch) img(ch, r, c) = value;
  return img;
}

class ThrowingEstimator final : public PoseEstimator {
 public:
  Skeleton estimate(const Image&) const override { throw std::runtime_error("sensor offline"); }
  std::string name() const override { return "throwing"; }
};

// Emits a fixed skeleton whose confidence per joint is scripted by frame.
class ScriptedEstimator final : public PoseEstimator {
 public:
  Skeleton estimate(const Image& frame) const override {
    const int t = static_cast<int>(std::lround(frame(0, 0, 0) * 255.f));
    Skeleton sk;
    for (std::size_t j = 0; j < sk.size(); ++j) {
      sk[j].x = 0.1f + 0.01f * static_cast<float>(t);
      sk[j].y = 0.2f + 0.01f * static_cast<float>(t);
      sk[j].confidence = 0.9f;
    }
    // Joint 3 flickers below the floor on frames 0, 2 and 3.
    if (t == 0 || t == 2 || t == 3) sk[3].confidence = 0.1f;
    // Joint 5 reports coordinates outside the frame.
    sk[5].x = 1.7f;
    sk[5].y = -0.3f;
    return sk;
  }
  std::string name() const override { return "scripted"; }
};

VideoChunk index_encoded_chunk() {
  VideoChunk chunk;
  chunk.data = Tensor<float>({kChunkFrames, 3, kFrameSize, kFrameSize});
  const Index frame_size = 3 * kFrameSize * kFrameSize;
  for (Index t = 0; t < kChunkFrames; ++t)
    chunk.data.flat().segment(t * frame_size, frame_size).setConstant(static_cast<float>(t) /
                                                                      255.f);
  return chunk;
}

}  // namespace

TEST_CASE("blob estimator centers the skeleton on the bright region") {
  // A 21-wide, 31-tall block centred at (50, 60) on a 100x100 frame.
  const Image img = frame_with_block(100, 100, 35, 50, 31, 21);
  const BlobPoseEstimator est;
  const Skeleton sk = est.estimate(img);

  const float cx = 60.f / 99.f;
  const float cy = 50.f / 99.f;
  const float half_w = (20.f / 99.f) / 2.f;
  const float half_h = (30.f / 99.f) / 2.f;

  // Joint 0 is the nose: offset (0, -0.90) on the unit body.
  CHECK(sk[0].x == doctest::Approx(cx).epsilon(1e-4));
  CHECK(sk[0].y == doctest::Approx(cy - 0.90f * half_h).epsilon(1e-4));
  // Joint 9 is the left wrist: offset (-0.85, 0.10).
  CHECK(sk[9].x == doctest::Approx(cx - 0.85f * half_w).epsilon(1e-4));
  CHECK(sk[9].y == doctest::Approx(cy + 0.10f * half_h).epsilon(1e-4));

  // White block of 651 pixels: sum = 651, conf = min(1, 651 / 500) = 1.
  for (const auto& kp : sk) CHECK(kp.confidence == doctest::Approx(1.f));

  // A tiny blob yields proportionally low confidence.
  const Image small = frame_with_block(100, 100, 10, 10, 10, 10);
  const Skeleton weak = est.estimate(small);
  CHECK(weak[0].confidence == doctest::Approx(100.f / 500.f));
}

TEST_CASE("blob estimator on a dark frame returns centre points with zero confidence") {
  const Image img = make_image(64, 64, 0.1f);
  const Skeleton sk = BlobPoseEstimator().estimate(img);
  for (const auto& kp : sk) {
    CHECK(kp.x == doctest::Approx(0.5f));
    CHECK(kp.y == doctest::Approx(0.5f));
    CHECK(kp.confidence == 0.f);
  }
}

TEST_CASE("keypoint extraction forward fills low confidence joints") {
  const auto chunk = index_encoded_chunk();
  const ScriptedEstimator est;
  const auto seq = extract_keypoints(chunk, est);

  CHECK(seq.coords.shape() == std::vector<Index>{kChunkFrames, kNumJoints, 2});
  CHECK(seq.confidence.shape() == std::vector<Index>{kChunkFrames, kNumJoints});

  // Frame 0, joint 3 is below the floor with nothing to inherit.
  CHECK(seq.coords(0, 3, 0) == doctest::Approx(0.5f));
  CHECK(seq.coords(0, 3, 1) == doctest::Approx(0.5f));
  CHECK(seq.confidence(0, 3) == doctest::Approx(0.1f));

  // Frame 1 is confident again.
  CHECK(seq.coords(1, 3, 0) == doctest::Approx(0.11f));

  // Frames 2 and 3 flicker, so both inherit frame 1's coordinates.
  CHECK(seq.coords(2, 3, 0) == doctest::Approx(0.11f));
  CHECK(seq.coords(3, 3, 0) == doctest::Approx(0.11f));
  CHECK(seq.coords(4, 3, 0) == doctest::Approx(0.14f));

  // Confidence keeps the raw scores, not the filled ones.
  CHECK(seq.confidence(2, 3) == doctest::Approx(0.1f));

  // Out-of-frame coordinates are clamped to the unit square.
  CHECK(seq.coords(7, 5, 0) == doctest::Approx(1.f));
  CHECK(seq.coords(7, 5, 1) == doctest::Approx(0.f));

  // An untouched joint tracks the script exactly.
  CHECK(seq.coords(39, 1, 0) == doctest::Approx(0.1f + 0.39f).epsilon(1e-4));
}

TEST_CASE("estimator exceptions surface as estimator failures") {
  const auto chunk = index_encoded_chunk();
  CHECK_THROWS_AS(extract_keypoints(chunk, ThrowingEstimator()), EstimatorFailure);
  try {
    extract_keypoints(chunk, ThrowingEstimator());
  } catch (const EstimatorFailure& e) {
    CHECK(std::string(e.what()).find("frame 0") != std::string::npos);
    CHECK(std::string(e.what()).find("sensor offline") != std::string::npos);
  }
}

TEST_CASE("keypoint packing round trips and checks shape") {
  Rng rng(88);
  KeypointSequence seq{Tensor<float>({kChunkFrames, kNumJoints, 2}),
                       Tensor<float>({kChunkFrames, kNumJoints})};
  for (Index i = 0; i < seq.coords.size(); ++i)
    seq.coords.flat()(i) = static_cast<float>(rng.uniform());
  for (Index i = 0; i < seq.confidence.size(); ++i)
    seq.confidence.flat()(i) = static_cast<float>(rng.uniform());

  const auto packed = pack_keypoints(seq);
  CHECK(packed.shape() == std::vector<Index>{kChunkFrames, kNumJoints, 3});
  const auto back = unpack_keypoints(packed);
  CHECK((back.coords.flat() - seq.coords.flat()).cwiseAbs().maxCoeff() == 0.f);
  CHECK((back.confidence.flat() - seq.confidence.flat()).cwiseAbs().maxCoeff() == 0.f);

  CHECK_THROWS_AS(unpack_keypoints(Tensor<float>({kChunkFrames, kNumJoints, 2})), ShapeMismatch);
  CHECK_THROWS_AS(unpack_keypoints(Tensor<float>({10, kNumJoints, 3})), ShapeMismatch);
}

TEST_CASE("person box proposal pads the blob and clamps to the frame") {
  // Block rows 40..59, cols 30..49; span 20 pixels, pad = round(0.15 * 20) = 3.
  const Image img = frame_with_block(100, 100, 40, 30, 20, 20);
  const CropBox box = propose_person_box(img);
  CHECK(box.top == 37);
  CHECK(box.left == 27);
  CHECK(box.height == 26);
  CHECK(box.width == 26);

  // A blob flush against the corner cannot pad outside the frame.
  const Image corner = frame_with_block(60, 80, 0, 0, 20, 20);
  const CropBox clamped = propose_person_box(corner);
  CHECK(clamped.top == 0);
  CHECK(clamped.left == 0);
  CHECK(clamped.height == 23);
  CHECK(clamped.width == 23);

  // Uniformly dark frames fall back to the full frame.
  const CropBox full = propose_person_box(make_image(32, 48, 0.f));
  CHECK(full.top == 0);
  CHECK(full.left == 0);
  CHECK(full.height == 32);
  CHECK(full.width == 48);
}
