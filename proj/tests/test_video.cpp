#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <vector>

#include "helpers.hpp"
#include "ssbd/image.hpp"
#include "ssbd/video.hpp"

using namespace ssbd;

namespace {

Image gradient_frame(Index h, Index w, float shade) {
  Image img = make_image(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const float v = shade * static_cast<float>(x + y) / static_cast<float>(h + w);
      img(0, y, x) = v;
      img(1, y, x) = v;
      img(2, y, x) = v;
    }
  return img;
}

}  // namespace

TEST_CASE("ppm round trip is exact after one quantization") {
  const auto dir = test::temp_dir("ppm");
  Image img = make_image(5, 7);
  Rng rng(11);
  for (Index i = 0; i < img.size(); ++i)
    img.data()[i] = static_cast<float>(rng.uniform());
  write_ppm(dir / "a.ppm", img);
  const Image back = read_ppm(dir / "a.ppm");
  REQUIRE(image_height(back) == 5);
  REQUIRE(image_width(back) == 7);
  for (Index i = 0; i < img.size(); ++i)
    CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5f / 255.f + 1e-6f);

  write_ppm(dir / "b.ppm", back);
  const Image again = read_ppm(dir / "b.ppm");
  for (Index i = 0; i < img.size(); ++i) CHECK(again.data()[i] == back.data()[i]);
}

TEST_CASE("y4m round trip preserves smooth frames") {
  const auto dir = test::temp_dir("y4m");
  std::vector<Image> frames;
  for (int t = 0; t < 4; ++t)
    frames.push_back(gradient_frame(24, 32, 0.2f + 0.2f * static_cast<float>(t)));
  write_y4m(dir / "clip.y4m", frames, 10.0);

  Y4mReader reader(dir / "clip.y4m");
  CHECK(reader.fps() == doctest::Approx(10.0));
  CHECK(reader.width() == 32);
  CHECK(reader.height() == 24);

  Image frame;
  int count = 0;
  while (reader.next(frame)) {
    REQUIRE(count < 4);
    float worst = 0;
    for (Index i = 0; i < frame.size(); ++i)
      worst = std::max(worst, std::abs(frame.data()[i] - frames[count].data()[i]));
    CHECK(worst < 0.03f);
    ++count;
  }
  CHECK(count == 4);
}

TEST_CASE("y4m writer needs frames and even dimensions") {
  const auto dir = test::temp_dir("y4m_err");
  CHECK_THROWS_AS(write_y4m(dir / "x.y4m", {}, 10.0), EmptyInput);
  CHECK_THROWS_AS(write_y4m(dir / "x.y4m", {make_image(23, 32)}, 10.0), ShapeMismatch);
}

TEST_CASE("y4m reader rejects garbage") {
  const auto dir = test::temp_dir("y4m_bad");
  {
    std::ofstream out(dir / "bad.y4m", std::ios::binary);
    out << "not a stream\n";
  }
  CHECK_THROWS_AS(Y4mReader(dir / "bad.y4m"), UndecodableVideo);
  CHECK_THROWS_AS(Y4mReader(dir / "missing.y4m"), UndecodableVideo);
}

TEST_CASE("frames directory reader walks ppms in name order") {
  const auto dir = test::temp_dir("framesdir");
  write_ppm(dir / "000002.ppm", gradient_frame(8, 8, 0.9f));
  write_ppm(dir / "000000.ppm", gradient_frame(8, 8, 0.1f));
  write_ppm(dir / "000001.ppm", gradient_frame(8, 8, 0.5f));
  {
    std::ofstream fps(dir / "fps.txt");
    fps << "12.5\n";
  }

  FramesDirReader reader(dir);
  CHECK(reader.fps() == doctest::Approx(12.5));
  Image frame;
  std::vector<float> first_pixels;
  while (reader.next(frame)) first_pixels.push_back(frame(0, 7, 7));
  REQUIRE(first_pixels.size() == 3);
  CHECK(first_pixels[0] < first_pixels[1]);
  CHECK(first_pixels[1] < first_pixels[2]);
}

TEST_CASE("open_video dispatches on the path") {
  const auto dir = test::temp_dir("open");
  write_y4m(dir / "clip.y4m", {gradient_frame(16, 16, 0.5f)}, 10.0);
  std::filesystem::create_directories(dir / "frames");
  write_ppm(dir / "frames" / "0.ppm", gradient_frame(16, 16, 0.5f));

  auto a = open_video(dir / "clip.y4m");
  CHECK(a->fps() == doctest::Approx(10.0));
  auto b = open_video(dir / "frames");
  Image frame;
  CHECK(b->next(frame));
  CHECK_THROWS_AS(open_video(dir / "clip.mp9"), UndecodableVideo);
}
