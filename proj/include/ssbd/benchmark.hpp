#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/preprocess.hpp"

namespace ssbd {

struct FpsReport {
  std::string component;
  double fps = 0;  // frames per second, 40 frames per chunk
  Index chunks = 0;
  Index frames = 0;
  double elapsed_seconds = 0;
  Index warmup_chunks = 0;
  std::string hardware;
  std::string note;
};

inline std::string hardware_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    if (line.rfind("model name", 0) == 0) {
      model = line.substr(colon + 1);
      model.erase(0, model.find_first_not_of(' '));
      break;
    }
  }
  const unsigned threads = std::thread::hardware_concurrency();
  return model + ", " + std::to_string(threads ? threads : 1) + " threads";
}

// Wall-clock throughput of one component's forward pass. The first few
// chunks warm caches and are not timed; timings assume the machine runs
// nothing else, and the report says so.
inline FpsReport benchmark_fps(const std::string& component,
                               const std::function<void(const VideoChunk&)>& forward,
                               const std::vector<VideoChunk>& chunks, Index warmup = 3) {
  if (!forward) throw ComponentNotLoaded(component + " has no forward pass to benchmark");
  if (chunks.empty()) throw EmptyInput("benchmark needs at least one chunk");

  const Index n = static_cast<Index>(chunks.size());
  const Index warm = std::min(warmup, n);
  for (Index i = 0; i < warm; ++i) forward(chunks[static_cast<std::size_t>(i)]);

  const auto t0 = std::chrono::steady_clock::now();
  for (const VideoChunk& chunk : chunks) forward(chunk);
  const auto t1 = std::chrono::steady_clock::now();

  FpsReport report;
  report.component = component;
  report.chunks = n;
  report.frames = n * kChunkFrames;
  report.warmup_chunks = warm;
  report.elapsed_seconds = std::chrono::duration<double>(t1 - t0).count();
  if (report.elapsed_seconds <= 0) report.elapsed_seconds = 1e-9;
  report.fps = static_cast<double>(report.frames) / report.elapsed_seconds;
  report.hardware = hardware_descriptor();
  report.note = "measured with no concurrent load; run exclusively";
  return report;
}

inline nlohmann::json fps_report_to_json(const FpsReport& r) {
  return {{"component", r.component},
          {"fps", r.fps},
          {"chunks", r.chunks},
          {"frames", r.frames},
          {"elapsed_seconds", r.elapsed_seconds},
          {"warmup_chunks", r.warmup_chunks},
          {"hardware", r.hardware},
          {"note", r.note}};
}

}  // namespace ssbd
