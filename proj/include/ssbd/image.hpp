#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "ssbd/error.hpp"
#include "ssbd/tensor.hpp"

namespace ssbd {

// Images are float tensors of shape (3, H, W) with values in [0, 1].
using Image = Tensor<float>;

inline Image make_image(Index height, Index width, float fill_value = 0.f) {
  Image img({3, height, width});
  if (fill_value != 0.f) img.fill(fill_value);
  return img;
}

inline Index image_height(const Image& img) { return img.dim(1); }
inline Index image_width(const Image& img) { return img.dim(2); }

// Bilinear resample with half-pixel centers.
inline Image resize_bilinear(const Image& src, Index out_h, Index out_w) {
  if (src.rank() != 3 || src.dim(0) != 3) throw ShapeMismatch("resize expects a (3,H,W) image");
  const Index in_h = src.dim(1), in_w = src.dim(2);
  Image dst({3, out_h, out_w});
  const float sy = static_cast<float>(in_h) / static_cast<float>(out_h);
  const float sx = static_cast<float>(in_w) / static_cast<float>(out_w);
  for (Index y = 0; y < out_h; ++y) {
    float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    fy = std::clamp(fy, 0.f, static_cast<float>(in_h - 1));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min(y0 + 1, in_h - 1);
    const float wy = fy - static_cast<float>(y0);
    for (Index x = 0; x < out_w; ++x) {
      float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      fx = std::clamp(fx, 0.f, static_cast<float>(in_w - 1));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min(x0 + 1, in_w - 1);
      const float wx = fx - static_cast<float>(x0);
      for (Index c = 0; c < 3; ++c) {
        const float top = src(c, y0, x0) * (1.f - wx) + src(c, y0, x1) * wx;
        const float bot = src(c, y1, x0) * (1.f - wx) + src(c, y1, x1) * wx;
        dst(c, y, x) = top * (1.f - wy) + bot * wy;
      }
    }
  }
  return dst;
}

// Integer-rect crop; caller guarantees the rect is inside the image.
inline Image crop_image(const Image& src, Index x, Index y, Index w, Index h) {
  Image dst({3, h, w});
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < h; ++r)
      for (Index cc = 0; cc < w; ++cc) dst(c, r, cc) = src(c, y + r, x + cc);
  return dst;
}

// --- PPM (P6, 8-bit) ---------------------------------------------------

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const Index h = image_height(img), w = image_width(img);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c) {
        const float v = std::clamp(img(c, y, x), 0.f, 1.f);
        row[static_cast<std::size_t>(x * 3 + c)] =
            static_cast<std::uint8_t>(std::lround(v * 255.f));
      }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

namespace detail {
inline int ppm_next_int(std::istream& in) {
  // Skips whitespace and '#' comments per the netpbm grammar.
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = in.get();
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw IoError("truncated PPM header");
  return value;
}
}  // namespace detail

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw IoError("not a P6 PPM file: " + path.string());
  const Index w = detail::ppm_next_int(in);
  const Index h = detail::ppm_next_int(in);
  const int maxval = detail::ppm_next_int(in);
  if (maxval <= 0 || maxval > 255) throw IoError("unsupported PPM maxval");
  Image img({3, h, w});
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
  for (Index y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw IoError("truncated PPM payload: " + path.string());
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c)
        img(c, y, x) = static_cast<float>(row[static_cast<std::size_t>(x * 3 + c)]) /
                       static_cast<float>(maxval);
  }
  return img;
}

}  // namespace ssbd
