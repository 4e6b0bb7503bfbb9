#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ssbd/error.hpp"
#include "ssbd/image.hpp"

// Video ingestion. Two self-contained containers are supported:
//   *.y4m           — uncompressed YUV4MPEG2 (mono/420/422/444), the format
//                      ffmpeg emits with `-f yuv4mpegpipe`; audio-free by
//                      construction.
//   directory/      — numbered *.ppm frames plus an optional fps.txt
//                      (defaults to 10 fps).
// Compressed containers are expected to be transcoded with ffmpeg first; see
// the README.

namespace ssbd {

class VideoReader {
 public:
  virtual ~VideoReader() = default;
  virtual double fps() const = 0;
  virtual Index width() const = 0;
  virtual Index height() const = 0;
  // Reads the next frame into `out`; returns false at end of stream.
  virtual bool next(Image& out) = 0;
};

namespace detail {

struct YuvToRgb {
  // BT.601 limited range.
  static void pixel(float y, float cb, float cr, float* r, float* g, float* b) {
    const float yy = 1.164f * (y - 16.f);
    *r = std::clamp((yy + 1.596f * (cr - 128.f)) / 255.f, 0.f, 1.f);
    *g = std::clamp((yy - 0.392f * (cb - 128.f) - 0.813f * (cr - 128.f)) / 255.f, 0.f, 1.f);
    *b = std::clamp((yy + 2.017f * (cb - 128.f)) / 255.f, 0.f, 1.f);
  }
  static void inverse(float r, float g, float b, float* y, float* cb, float* cr) {
    *y = 16.f + 65.481f * r + 128.553f * g + 24.966f * b;
    *cb = 128.f - 37.797f * r - 74.203f * g + 112.f * b;
    *cr = 128.f + 112.f * r - 93.786f * g - 18.214f * b;
  }
};

}  // namespace detail

class Y4mReader final : public VideoReader {
 public:
  explicit Y4mReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw UndecodableVideo("cannot open video: " + path.string());
    std::string header;
    if (!std::getline(in_, header) || header.rfind("YUV4MPEG2", 0) != 0)
      throw UndecodableVideo("not a YUV4MPEG2 stream: " + path.string());
    std::istringstream hs(header);
    std::string tok;
    hs >> tok;  // magic
    long fps_num = 0, fps_den = 1;
    chroma_ = "420jpeg";
    while (hs >> tok) {
      switch (tok[0]) {
        case 'W': width_ = std::stoll(tok.substr(1)); break;
        case 'H': height_ = std::stoll(tok.substr(1)); break;
        case 'F': {
          const auto colon = tok.find(':');
          fps_num = std::stol(tok.substr(1, colon - 1));
          fps_den = std::stol(tok.substr(colon + 1));
          break;
        }
        case 'C': chroma_ = tok.substr(1); break;
        default: break;  // interlacing/aspect tags are irrelevant here
      }
    }
    if (width_ <= 0 || height_ <= 0 || fps_num <= 0 || fps_den <= 0)
      throw UndecodableVideo("bad YUV4MPEG2 header: " + header);
    fps_ = static_cast<double>(fps_num) / static_cast<double>(fps_den);

    if (chroma_.rfind("420", 0) == 0) {
      cw_ = (width_ + 1) / 2;
      ch_ = (height_ + 1) / 2;
    } else if (chroma_.rfind("422", 0) == 0) {
      cw_ = (width_ + 1) / 2;
      ch_ = height_;
    } else if (chroma_.rfind("444", 0) == 0) {
      cw_ = width_;
      ch_ = height_;
    } else if (chroma_ == "mono") {
      cw_ = ch_ = 0;
    } else {
      throw UndecodableVideo("unsupported chroma subsampling: C" + chroma_);
    }
    y_.resize(static_cast<std::size_t>(width_ * height_));
    u_.resize(static_cast<std::size_t>(cw_ * ch_));
    v_.resize(static_cast<std::size_t>(cw_ * ch_));
  }

  double fps() const override { return fps_; }
  Index width() const override { return width_; }
  Index height() const override { return height_; }

  bool next(Image& out) override {
    std::string marker;
    if (!std::getline(in_, marker)) return false;
    if (marker.rfind("FRAME", 0) != 0)
      throw UndecodableVideo("expected FRAME marker, got '" + marker + "'");
    read_plane(y_);
    if (cw_ > 0) {
      read_plane(u_);
      read_plane(v_);
    }
    out.resize({3, height_, width_});
    for (Index r = 0; r < height_; ++r) {
      for (Index c = 0; c < width_; ++c) {
        const float y = static_cast<float>(y_[static_cast<std::size_t>(r * width_ + c)]);
        float cb = 128.f, cr = 128.f;
        if (cw_ > 0) {
          const Index sr = (ch_ == height_) ? r : r / 2;
          const Index sc = (cw_ == width_) ? c : c / 2;
          cb = static_cast<float>(u_[static_cast<std::size_t>(sr * cw_ + sc)]);
          cr = static_cast<float>(v_[static_cast<std::size_t>(sr * cw_ + sc)]);
        }
        detail::YuvToRgb::pixel(y, cb, cr, &out(0, r, c), &out(1, r, c), &out(2, r, c));
      }
    }
    return true;
  }

 private:
  void read_plane(std::vector<std::uint8_t>& plane) {
    in_.read(reinterpret_cast<char*>(plane.data()), static_cast<std::streamsize>(plane.size()));
    if (!in_) throw UndecodableVideo("truncated frame payload");
  }

  std::ifstream in_;
  Index width_ = 0, height_ = 0, cw_ = 0, ch_ = 0;
  double fps_ = 0;
  std::string chroma_;
  std::vector<std::uint8_t> y_, u_, v_;
};

// 4:2:0 writer used by the tests and the synth tool.
inline void write_y4m(const std::filesystem::path& path, const std::vector<Image>& frames,
                      double fps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  if (frames.empty()) throw EmptyInput("write_y4m needs at least one frame");
  const Index h = image_height(frames[0]), w = image_width(frames[0]);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeMismatch("4:2:0 output needs even dimensions");
  const long num = std::lround(fps * 1000.0);
  out << "YUV4MPEG2 W" << w << " H" << h << " F" << num << ":1000 Ip A1:1 C420jpeg\n";
  std::vector<std::uint8_t> yp(static_cast<std::size_t>(w * h));
  std::vector<std::uint8_t> up(static_cast<std::size_t>(w * h / 4)), vp(up.size());
  for (const auto& img : frames) {
    std::vector<float> cbf(static_cast<std::size_t>(w * h)), crf(cbf.size());
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) {
        float y, cb, cr;
        detail::YuvToRgb::inverse(img(0, r, c), img(1, r, c), img(2, r, c), &y, &cb, &cr);
        yp[static_cast<std::size_t>(r * w + c)] =
            static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
        cbf[static_cast<std::size_t>(r * w + c)] = cb;
        crf[static_cast<std::size_t>(r * w + c)] = cr;
      }
    for (Index r = 0; r < h / 2; ++r)
      for (Index c = 0; c < w / 2; ++c) {
        const auto at = [&](const std::vector<float>& p, Index rr, Index cc) {
          return p[static_cast<std::size_t>(rr * w + cc)];
        };
        const float cb = (at(cbf, 2 * r, 2 * c) + at(cbf, 2 * r, 2 * c + 1) +
                          at(cbf, 2 * r + 1, 2 * c) + at(cbf, 2 * r + 1, 2 * c + 1)) /
                         4.f;
        const float cr = (at(crf, 2 * r, 2 * c) + at(crf, 2 * r, 2 * c + 1) +
                          at(crf, 2 * r + 1, 2 * c) + at(crf, 2 * r + 1, 2 * c + 1)) /
                         4.f;
        up[static_cast<std::size_t>(r * (w / 2) + c)] =
            static_cast<std::uint8_t>(std::clamp(std::lround(cb), 0L, 255L));
        vp[static_cast<std::size_t>(r * (w / 2) + c)] =
            static_cast<std::uint8_t>(std::clamp(std::lround(cr), 0L, 255L));
      }
    out << "FRAME\n";
    out.write(reinterpret_cast<const char*>(yp.data()), static_cast<std::streamsize>(yp.size()));
    out.write(reinterpret_cast<const char*>(up.data()), static_cast<std::streamsize>(up.size()));
    out.write(reinterpret_cast<const char*>(vp.data()), static_cast<std::streamsize>(vp.size()));
  }
}

class FramesDirReader final : public VideoReader {
 public:
  explicit FramesDirReader(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw UndecodableVideo("not a directory: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".ppm") paths_.push_back(entry.path());
    }
    std::sort(paths_.begin(), paths_.end());
    const auto fps_file = dir / "fps.txt";
    if (fs::exists(fps_file)) {
      std::ifstream in(fps_file);
      in >> fps_;
      if (!in || fps_ <= 0) throw UndecodableVideo("bad fps.txt in " + dir.string());
    }
    if (!paths_.empty()) {
      const Image probe = read_ppm(paths_[0]);
      width_ = image_width(probe);
      height_ = image_height(probe);
    }
  }

  double fps() const override { return fps_; }
  Index width() const override { return width_; }
  Index height() const override { return height_; }

  bool next(Image& out) override {
    if (cursor_ >= paths_.size()) return false;
    out = read_ppm(paths_[cursor_++]);
    return true;
  }

 private:
  std::vector<std::filesystem::path> paths_;
  std::size_t cursor_ = 0;
  double fps_ = 10.0;
  Index width_ = 0, height_ = 0;
};

inline std::unique_ptr<VideoReader> open_video(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return std::make_unique<FramesDirReader>(path);
  if (path.extension() == ".y4m") return std::make_unique<Y4mReader>(path);
  throw UndecodableVideo("unsupported video container: " + path.string() +
                         " (expected .y4m or a frames directory)");
}

}  // namespace ssbd
