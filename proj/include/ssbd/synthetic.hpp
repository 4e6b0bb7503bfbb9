#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "ssbd/annotations.hpp"
#include "ssbd/image.hpp"
#include "ssbd/label.hpp"
#include "ssbd/preprocess.hpp"
#include "ssbd/rng.hpp"
#include "ssbd/video.hpp"

// Deterministic synthetic footage: a bright elliptical actor on a dark
// background whose motion pattern encodes the action class. Good enough to
// drive the blob detector and pose adapter, and cleanly separable so the
// models can overfit it in smoke tests and demos.

namespace ssbd::synth {

struct ActorSpec {
  ChunkLabel action = ChunkLabel::no_class;
  double base_x = 0.5, base_y = 0.5;  // normalized centre
  double width_frac = 0.22, height_frac = 0.34;
  double amplitude = 0.16;
  double period_s = 0.8;
  double luma = 0.9;
};

inline ActorSpec actor_for(ChunkLabel action, Rng& rng) {
  ActorSpec a;
  a.action = action;
  a.base_x = 0.40 + 0.20 * rng.uniform();
  a.base_y = 0.40 + 0.20 * rng.uniform();
  a.luma = 0.82 + 0.14 * rng.uniform();
  return a;
}

inline void actor_centre(const ActorSpec& a, double t_sec, double& cx, double& cy) {
  const double w = 2.0 * M_PI / a.period_s;
  cx = a.base_x;
  cy = a.base_y;
  switch (a.action) {
    case ChunkLabel::arm_flapping: cx += a.amplitude * std::sin(w * t_sec); break;
    case ChunkLabel::headbanging: cy += a.amplitude * std::sin(w * t_sec); break;
    case ChunkLabel::spinning:
      cx += a.amplitude * std::cos(0.5 * w * t_sec);
      cy += a.amplitude * std::sin(0.5 * w * t_sec);
      break;
    case ChunkLabel::no_class: break;
  }
}

inline Image render_actor_frame(Index height, Index width, const ActorSpec& a, double t_sec) {
  Image img = make_image(height, width);
  img.flat().setConstant(0.05f);
  double cxn = 0, cyn = 0;
  actor_centre(a, t_sec, cxn, cyn);
  const double cx = cxn * static_cast<double>(width - 1);
  const double cy = cyn * static_cast<double>(height - 1);
  const double rx = 0.5 * a.width_frac * static_cast<double>(width);
  const double ry = 0.5 * a.height_frac * static_cast<double>(height);
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const double dx = (static_cast<double>(c) - cx) / rx;
      const double dy = (static_cast<double>(r) - cy) / ry;
      const double d2 = dx * dx + dy * dy;
      if (d2 >= 1.0) continue;
      const float v = static_cast<float>(a.luma * (1.0 - 0.25 * d2));
      img(0, r, c) = v;
      img(1, r, c) = 0.95f * v;
      img(2, r, c) = 0.85f * v;
    }
  }
  return img;
}

// Frames at the pipeline's working rate and resolution, ready for chunking.
inline FrameSequence make_action_sequence(const std::string& video_id, ChunkLabel action,
                                          Index n_frames, Rng& rng) {
  const ActorSpec actor = actor_for(action, rng);
  FrameSequence seq;
  seq.video_id = video_id;
  seq.frames.reserve(static_cast<std::size_t>(n_frames));
  for (Index t = 0; t < n_frames; ++t)
    seq.frames.push_back(render_actor_frame(kFrameSize, kFrameSize, actor,
                                            static_cast<double>(t) / kTargetFps));
  return seq;
}

inline VideoChunk make_action_chunk(ChunkLabel action, Rng& rng) {
  const FrameSequence seq = make_action_sequence("synthetic", action, kChunkFrames, rng);
  VideoChunk chunk;
  chunk.data = pack_frames(seq.frames, 0, kChunkFrames);
  chunk.label = action;
  return chunk;
}

// Child actors are small and bright, adults large and dim.
inline Image make_person_image(bool child, Index height, Index width, Rng& rng) {
  ActorSpec a;
  a.base_x = 0.35 + 0.30 * rng.uniform();
  a.base_y = 0.35 + 0.30 * rng.uniform();
  if (child) {
    a.width_frac = 0.16 + 0.06 * rng.uniform();
    a.height_frac = 0.24 + 0.08 * rng.uniform();
    a.luma = 0.88 + 0.10 * rng.uniform();
  } else {
    a.width_frac = 0.45 + 0.12 * rng.uniform();
    a.height_frac = 0.62 + 0.15 * rng.uniform();
    a.luma = 0.55 + 0.10 * rng.uniform();
  }
  return render_actor_frame(height, width, a, 0.0);
}

// Writes a .y4m clip at the given source rate together with its annotation:
// the action (when any) spans the whole clip.
inline AnnotationRecord write_synthetic_video(const std::filesystem::path& path,
                                              const std::string& video_id, ChunkLabel action,
                                              double duration_s, double src_fps, Index height,
                                              Index width, std::uint64_t seed) {
  Rng rng(seed);
  const ActorSpec actor = actor_for(action, rng);
  const Index n = static_cast<Index>(std::llround(duration_s * src_fps));
  std::vector<Image> frames;
  frames.reserve(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t)
    frames.push_back(render_actor_frame(height, width, actor,
                                        static_cast<double>(t) / src_fps));
  write_y4m(path, frames, src_fps);

  AnnotationRecord rec;
  rec.video_id = video_id;
  rec.duration = duration_s;
  if (is_action(action)) {
    BehaviourInterval iv;
    iv.start_time = 0.0;
    iv.end_time = duration_s;
    iv.category = action;
    iv.intensity = "moderate";
    rec.behaviours.push_back(iv);
  }
  return rec;
}

}  // namespace ssbd::synth
