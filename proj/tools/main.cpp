// Command line front end: preprocessing, stage training, distillation,
// inference and the reporting commands, all sharing one JSON config format.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssbd/annotations.hpp"
#include "ssbd/audit.hpp"
#include "ssbd/benchmark.hpp"
#include "ssbd/config.hpp"
#include "ssbd/distill.hpp"
#include "ssbd/error.hpp"
#include "ssbd/image.hpp"
#include "ssbd/label.hpp"
#include "ssbd/m1.hpp"
#include "ssbd/m2.hpp"
#include "ssbd/metrics.hpp"
#include "ssbd/pipeline.hpp"
#include "ssbd/pose.hpp"
#include "ssbd/prefetch.hpp"
#include "ssbd/preprocess.hpp"
#include "ssbd/presets.hpp"
#include "ssbd/rng.hpp"
#include "ssbd/run_dir.hpp"
#include "ssbd/sweep.hpp"
#include "ssbd/tasks.hpp"
#include "ssbd/train.hpp"

namespace fs = std::filesystem;
using namespace ssbd;
using nlohmann::json;

namespace {

struct Ctx {
  std::string config_path;
  std::string manifest_path;
  std::string out_path;
  std::uint64_t seed = 0;
  bool has_seed = false;
  bool json_stdout = false;

  AppConfig cfg;
  bool has_config = false;

  void finalize() {
    if (!config_path.empty()) {
      cfg = load_app_config(config_path);
      has_config = true;
    }
  }

  TrainConfig stage_train(const std::string& preset_name) const {
    TrainConfig tc = has_config ? cfg.train : preset(preset_name).train;
    if (has_seed) tc.seed = seed;
    return tc;
  }

  fs::path require_out(const std::string& what) const {
    if (out_path.empty()) throw SchemaViolation("--out is required for " + what);
    return fs::path(out_path);
  }

  DatasetManifest require_manifest() const {
    if (manifest_path.empty()) throw SchemaViolation("--manifest is required here");
    return load_manifest(manifest_path);
  }
};

void emit_report(const Ctx& ctx, const json& report, const std::string& text) {
  if (ctx.json_stdout)
    std::cout << report.dump(2) << "\n";
  else
    std::cout << text;
  if (!ctx.out_path.empty()) {
    std::ofstream out(ctx.out_path);
    if (!out) throw IoError("cannot write " + ctx.out_path);
    out << report.dump(2) << "\n";
  }
}

struct LoadedStore {
  std::vector<ChunkRecord> records;
  std::vector<VideoChunk> chunks;
  std::vector<Tensor<float>> keypoints;  // empty tensors when not requested
};

LoadedStore load_store(const fs::path& dir, bool with_keypoints) {
  LoadedStore s;
  s.records = list_chunks(dir);
  if (s.records.empty()) throw EmptyInput("no chunks found under " + dir.string());
  s.chunks.reserve(s.records.size());
  for (const ChunkRecord& rec : s.records) {
    VideoChunk chunk;
    chunk.data = load_chunk_data(rec);
    chunk.start_frame = rec.start_frame;
    chunk.label = rec.label;
    s.chunks.push_back(std::move(chunk));
    if (with_keypoints) s.keypoints.push_back(load_chunk_keypoints(rec));
  }
  return s;
}

// Held-out videos, never held-out chunks: chunks from one clip overlap.
std::vector<bool> val_mask_by_video(const std::vector<ChunkRecord>& records, double val_fraction,
                                    std::uint64_t seed) {
  std::set<std::string> ids;
  for (const ChunkRecord& r : records) ids.insert(r.video_id);
  std::vector<std::string> ordered(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ordered);
  const auto n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(ordered.size()));
  const std::set<std::string> val_ids(ordered.begin(), ordered.begin() + n_val);
  std::vector<bool> mask(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    mask[i] = val_ids.count(records[i].video_id) > 0;
  return mask;
}

std::string train_summary(const TrainRunResult& res, const fs::path& dir) {
  std::string text;
  if (!res.history.empty()) {
    const EpochStats& last = res.history.back();
    text += "trained " + std::to_string(res.history.size()) + " epochs, final loss " +
            std::to_string(last.loss) + ", accuracy " + std::to_string(last.accuracy) +
            ", macro-f1 " + std::to_string(last.macro_f1) + "\n";
  }
  if (res.best_epoch >= 0)
    text += "best epoch " + std::to_string(res.best_epoch) + " (selection f1 " +
            std::to_string(res.best_f1) + ") -> " + res.best_checkpoint.string() + "\n";
  text += "run directory: " + dir.string() + "\n";
  return text;
}

json metrics_block(const MetricsReport& r) { return metrics_to_json(r); }

std::string metrics_line(const std::string& name, const MetricsReport& r) {
  std::string s = name + ": accuracy " + std::to_string(r.accuracy) + ", macro-f1 " +
                  std::to_string(r.macro_f1);
  if (r.num_classes == static_cast<Index>(kNumLabels))
    s += ", action macro-f1 " + std::to_string(r.macro_f1_actions);
  s += " (" + std::to_string(r.support.size()) + " classes, " +
       std::to_string(r.confusion.sum()) + " chunks)\n";
  return s;
}

// --- subcommands ---------------------------------------------------------

int cmd_preprocess(const Ctx& ctx, const std::string& prefetch_ckpt, Index stride) {
  const DatasetManifest manifest = ctx.require_manifest();
  const fs::path out_dir = ctx.require_out("preprocess");
  const BlobPoseEstimator pose;
  std::optional<ChildClassifier<float>> child;
  const BlobPersonDetector detector;
  if (!prefetch_ckpt.empty()) child = ChildClassifier<float>::load(prefetch_ckpt);

  Index total = 0;
  Index skipped = 0;
  for (const ManifestEntry& entry : manifest.entries) {
    const FrameSequence seq = sample_and_resize(entry.path, entry.video_id);
    const std::vector<ChunkLabel> labels =
        frame_labels_from_intervals(entry.annotation, kTargetFps);
    const std::vector<VideoChunk> chunks =
        make_chunks(seq, labels, stride, default_warning_sink);
    if (chunks.empty()) ++skipped;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      VideoChunk chunk = chunks[i];
      if (child) chunk = prefetch_chunk(chunk, detector, *child);
      const Tensor<float> kp = pack_keypoints(extract_keypoints(chunk, pose));
      save_chunk(out_dir, entry.video_id, static_cast<Index>(i), chunk, &kp);
      ++total;
    }
  }
  std::cout << "wrote " << total << " chunks from " << manifest.entries.size()
            << " videos to " << out_dir.string();
  if (skipped > 0) std::cout << " (" << skipped << " too short)";
  std::cout << (child ? ", cropped via prefetch" : "") << "\n";
  return 0;
}

int cmd_train_prefetch(const Ctx& ctx, const std::string& data_dir, double val_fraction) {
  const fs::path out_dir = ctx.require_out("train-prefetch");
  const TrainConfig tc = ctx.stage_train("prefetch-paper");

  std::vector<fs::path> files;
  std::vector<Index> labels;
  for (const auto& [sub, label] : {std::pair<const char*, Index>{"child", 1}, {"adult", 0}}) {
    const fs::path folder = fs::path(data_dir) / sub;
    if (!fs::is_directory(folder))
      throw IoError("expected image folder " + folder.string());
    std::vector<fs::path> here;
    for (const auto& e : fs::directory_iterator(folder))
      if (e.path().extension() == ".ppm") here.push_back(e.path());
    std::sort(here.begin(), here.end());
    for (const fs::path& p : here) {
      files.push_back(p);
      labels.push_back(label);
    }
  }
  if (files.empty()) throw EmptyInput("no .ppm images under " + data_dir);

  ChildClassifier<float> clf(ctx.cfg.prefetch);
  const Index embed = clf.backbone().embed_dim();
  RowMat<float> feats(static_cast<Index>(files.size()), embed);
  for (std::size_t i = 0; i < files.size(); ++i)
    feats.row(static_cast<Index>(i)) = clf.features(read_ppm(files[i])).transpose();

  std::vector<Index> order(files.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  Rng rng(tc.seed);
  rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(order.size()));

  auto take = [&](std::size_t lo, std::size_t hi) {
    RowMat<float> f(static_cast<Index>(hi - lo), embed);
    std::vector<Index> l;
    for (std::size_t i = lo; i < hi; ++i) {
      f.row(static_cast<Index>(i - lo)) = feats.row(order[i]);
      l.push_back(labels[static_cast<std::size_t>(order[i])]);
    }
    return std::pair{f, l};
  };
  auto [val_f, val_l] = take(0, n_val);
  auto [train_f, train_l] = take(n_val, order.size());

  PrefetchTask<float> task(clf, train_f, train_l);
  std::optional<PrefetchTask<float>> val;
  if (n_val > 0) val.emplace(clf, val_f, val_l);
  const TrainRunResult res = run_training<float>(task, val ? &*val : nullptr, tc, out_dir,
                                                 [&](const fs::path& p) { clf.save(p); });
  std::cout << train_summary(res, out_dir);
  return 0;
}

int cmd_train_m1(const Ctx& ctx, const std::string& chunks_dir, double val_fraction) {
  const fs::path out_dir = ctx.require_out("train-m1");
  const TrainConfig tc = ctx.stage_train("m1-paper");
  LoadedStore store = load_store(chunks_dir, false);
  const std::vector<bool> mask = val_mask_by_video(store.records, val_fraction, tc.seed);

  std::vector<VideoChunk> train_chunks, val_chunks;
  std::vector<Index> train_labels, val_labels;
  for (std::size_t i = 0; i < store.chunks.size(); ++i) {
    auto& dst_chunks = mask[i] ? val_chunks : train_chunks;
    auto& dst_labels = mask[i] ? val_labels : train_labels;
    dst_chunks.push_back(std::move(store.chunks[i]));
    dst_labels.push_back(is_action(store.records[i].label) ? 1 : 0);
  }

  BinaryNet<float> net(ctx.cfg.m1);
  M1Task<float> task(net, &train_chunks, train_labels);
  std::optional<M1Task<float>> val;
  if (!val_chunks.empty()) val.emplace(net, &val_chunks, val_labels);
  const TrainRunResult res = run_training<float>(task, val ? &*val : nullptr, tc, out_dir,
                                                 [&](const fs::path& p) { net.save(p); });
  std::cout << train_summary(res, out_dir);
  return 0;
}

int cmd_train_m2(const Ctx& ctx, const std::string& chunks_dir, double val_fraction,
                 bool all_frames) {
  const fs::path out_dir = ctx.require_out("train-m2");
  const TrainConfig tc = ctx.stage_train("m2-paper");
  LoadedStore store = load_store(chunks_dir, true);
  const std::vector<bool> mask = val_mask_by_video(store.records, val_fraction, tc.seed);

  std::vector<VideoChunk> train_chunks, val_chunks;
  std::vector<Tensor<float>> train_kp, val_kp;
  for (std::size_t i = 0; i < store.chunks.size(); ++i) {
    if (!is_action(store.records[i].label)) continue;
    auto& dst_chunks = mask[i] ? val_chunks : train_chunks;
    auto& dst_kp = mask[i] ? val_kp : train_kp;
    dst_chunks.push_back(std::move(store.chunks[i]));
    dst_kp.push_back(std::move(store.keypoints[i]));
  }
  if (train_chunks.empty()) throw EmptySplit("no action-labelled chunks to train on");

  TrainRunResult res;
  if (all_frames) {
    AllFramesConfig acfg;
    acfg.backbone = ctx.cfg.m2.backbone;
    acfg.noclass_delta = ctx.cfg.m2.noclass_delta;
    AllFramesIdentifier<float> net(acfg);
    AllFramesTask<float> task = AllFramesTask<float>::from_chunks(net, train_chunks, train_kp);
    std::optional<AllFramesTask<float>> val;
    if (!val_chunks.empty())
      val.emplace(AllFramesTask<float>::from_chunks(net, val_chunks, val_kp));
    res = run_training<float>(task, val ? &*val : nullptr, tc, out_dir,
                              [&](const fs::path& p) { net.save(p); });
  } else {
    ActionIdentifier<float> net(ctx.cfg.m2);
    M2Task<float> task = M2Task<float>::from_chunks(net, train_chunks, train_kp);
    std::optional<M2Task<float>> val;
    if (!val_chunks.empty()) val.emplace(M2Task<float>::from_chunks(net, val_chunks, val_kp));
    res = run_training<float>(task, val ? &*val : nullptr, tc, out_dir,
                              [&](const fs::path& p) { net.save(p); });
  }
  std::cout << train_summary(res, out_dir);
  return 0;
}

int cmd_distill(const Ctx& ctx, const std::string& chunks_dir, const std::string& teacher_ckpt,
                double val_fraction) {
  const fs::path out_dir = ctx.require_out("distill");
  const TrainConfig tc = ctx.stage_train("distill-paper");
  const DistillConfig dc = ctx.cfg.distill;
  LoadedStore store = load_store(chunks_dir, false);
  const std::vector<bool> mask = val_mask_by_video(store.records, val_fraction, tc.seed);

  TeacherModel<float> teacher =
      teacher_ckpt.empty() ? TeacherModel<float>(ctx.cfg.teacher)
                           : TeacherModel<float>::load(teacher_ckpt);

  std::vector<Tensor<float>> train_maps, val_maps;
  std::vector<Index> train_labels, val_labels;
  std::vector<std::size_t> train_rows, val_rows;
  for (std::size_t i = 0; i < store.chunks.size(); ++i) {
    if (!is_action(store.records[i].label)) continue;
    const Index label = static_cast<Index>(store.records[i].label) - 1;
    (mask[i] ? val_maps : train_maps).push_back(teacher.extract_maps(store.chunks[i].data));
    (mask[i] ? val_labels : train_labels).push_back(label);
    (mask[i] ? val_rows : train_rows).push_back(i);
  }
  if (train_labels.empty()) throw EmptySplit("no action-labelled chunks to distill from");

  if (teacher_ckpt.empty()) {
    TeacherTask<float> task(teacher, train_maps, train_labels);
    std::optional<TeacherTask<float>> val;
    if (!val_labels.empty()) val.emplace(teacher, val_maps, val_labels);
    const TrainRunResult tres =
        run_training<float>(task, val ? &*val : nullptr, tc, out_dir / "teacher",
                            [&](const fs::path& p) { teacher.save(p); });
    std::cout << "teacher:\n" << train_summary(tres, out_dir / "teacher");
  } else {
    std::cout << "teacher: loaded from " << teacher_ckpt << "\n";
  }

  auto logits_of = [&](const std::vector<Tensor<float>>& maps) {
    RowMat<float> logits(static_cast<Index>(maps.size()), kNumActionLabels);
    for (std::size_t i = 0; i < maps.size(); ++i)
      logits.row(static_cast<Index>(i)) = teacher.forward_from_maps(maps[i]).transpose();
    return logits;
  };
  const RowMat<float> train_logits = logits_of(train_maps);
  const RowMat<float> val_logits = logits_of(val_maps);

  StudentModel<float> student(ctx.cfg.student);
  auto features_of = [&](const std::vector<std::size_t>& rows) {
    std::vector<RowMat<float>> feats;
    feats.reserve(rows.size());
    for (const std::size_t i : rows)
      feats.push_back(student.extract_features(store.chunks[i].data));
    return feats;
  };
  DistillTask<float> task(student, features_of(train_rows), train_logits, train_labels, dc);
  std::optional<DistillTask<float>> val;
  if (!val_labels.empty())
    val.emplace(student, features_of(val_rows), val_logits, val_labels, dc);
  const TrainRunResult sres =
      run_training<float>(task, val ? &*val : nullptr, tc, out_dir / "student",
                          [&](const fs::path& p) { student.save(p); });
  std::cout << "student:\n" << train_summary(sres, out_dir / "student");

  const Footprint tf = teacher.footprint();
  const Footprint sf = student.footprint();
  std::cout << "learnable weights: teacher " << tf.learnable << ", student " << sf.learnable
            << " (" << 100.0 * static_cast<double>(sf.learnable) / static_cast<double>(tf.learnable)
            << "% of the teacher)\n";
  return 0;
}

int cmd_infer(const Ctx& ctx, const std::string& video, const std::string& m1_ckpt,
              const std::string& m2_ckpt, const std::string& prefetch_ckpt) {
  const fs::path out = ctx.require_out("infer");
  BinaryNet<float> m1 = BinaryNet<float>::load(m1_ckpt);
  ActionIdentifier<float> m2 = ActionIdentifier<float>::load(m2_ckpt);

  PipelineConfig pcfg = ctx.cfg.pipeline;
  std::optional<ChildClassifier<float>> child;
  std::shared_ptr<const PersonDetector> detector;
  pcfg.use_prefetch = !prefetch_ckpt.empty();
  if (pcfg.use_prefetch) {
    child = ChildClassifier<float>::load(prefetch_ckpt);
    detector = std::make_shared<BlobPersonDetector>();
  }

  Pipeline<float> pipeline(pcfg, std::move(m1), std::move(m2),
                           std::make_shared<BlobPoseEstimator>(), std::move(child), detector);
  const std::string video_id = fs::path(video).stem().string();
  const std::vector<SegmentResult> results = pipeline.run(fs::path(video));
  write_predictions_jsonl(out, video_id, results);

  for (const SegmentResult& r : results) {
    std::cout << video_id << " chunk " << r.chunk_index << " @" << r.start_time << "s: "
              << label_name(r.label);
    if (r.intensity) std::cout << " (p=" << *r.intensity << ")";
    std::cout << "\n";
  }
  std::cout << results.size() << " chunks, " << pipeline.last_m2_invocations()
            << " m2 invocations -> " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const Ctx& ctx, const std::string& chunks_dir, const std::string& m1_ckpt,
                 const std::string& m2_ckpt, const std::string& allframes_ckpt,
                 const std::string& split, const std::string& dump_probs) {
  LoadedStore store = load_store(chunks_dir, true);

  if (split != "all") {
    const DatasetManifest manifest = ctx.require_manifest();
    std::map<std::string, Split> split_of;
    for (const ManifestEntry& e : manifest.entries) split_of[e.video_id] = e.split;
    const Split want = split == "test" ? Split::test : Split::train;
    LoadedStore kept;
    for (std::size_t i = 0; i < store.records.size(); ++i) {
      const auto it = split_of.find(store.records[i].video_id);
      if (it == split_of.end() || it->second != want) continue;
      kept.records.push_back(store.records[i]);
      kept.chunks.push_back(std::move(store.chunks[i]));
      kept.keypoints.push_back(std::move(store.keypoints[i]));
    }
    store = std::move(kept);
    if (store.records.empty()) throw EmptySplit("no chunks in the " + split + " split");
  }
  const std::size_t n = store.records.size();

  json report{{"split", split}, {"chunks", n}};
  std::string text;
  const double delta = ctx.cfg.pipeline.noclass_delta;

  std::vector<Index> truth4(n), truth_bin(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth4[i] = static_cast<Index>(store.records[i].label);
    truth_bin[i] = is_action(store.records[i].label) ? 1 : 0;
  }

  std::optional<std::vector<bool>> m1_positive;
  if (!m1_ckpt.empty()) {
    const BinaryNet<float> m1 = BinaryNet<float>::load(m1_ckpt);
    std::vector<bool> pos(n);
    std::vector<Index> pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = m1_is_action(m1.forward(store.chunks[i].data));
      pred[i] = pos[i] ? 1 : 0;
    }
    const MetricsReport r = compute_metrics(truth_bin, pred, 2);
    report["m1"] = metrics_block(r);
    report["m1"]["action_f1"] = r.f1[1];
    text += metrics_line("m1 (binary)", r) + "  action-chunk f1 " + std::to_string(r.f1[1]) +
            "\n";
    m1_positive = std::move(pos);
  }

  if (!m2_ckpt.empty()) {
    const ActionIdentifier<float> m2 = ActionIdentifier<float>::load(m2_ckpt);
    std::vector<Eigen::Vector3f> probs(n);
    for (std::size_t i = 0; i < n; ++i)
      probs[i] = m2.forward(store.chunks[i].data, store.keypoints[i]);

    auto scored = [&](const std::vector<bool>& pick) {
      std::vector<Index> t, p;
      for (std::size_t i = 0; i < n; ++i) {
        if (!pick[i]) continue;
        t.push_back(truth4[i]);
        p.push_back(static_cast<Index>(apply_noclass_threshold(probs[i], delta)));
      }
      return compute_metrics(t, p, kNumLabels);
    };

    std::vector<bool> action_only(n);
    for (std::size_t i = 0; i < n; ++i) action_only[i] = is_action(store.records[i].label);
    if (std::count(action_only.begin(), action_only.end(), true) > 0) {
      const MetricsReport r = scored(action_only);
      report["m2_action_chunks"] = metrics_block(r);
      text += metrics_line("m2 on every action chunk", r);
    }
    if (m1_positive && std::count(m1_positive->begin(), m1_positive->end(), true) > 0) {
      const MetricsReport r = scored(*m1_positive);
      report["m2_m1_positive"] = metrics_block(r);
      text += metrics_line("m2 on m1-positive chunks", r);
    }

    if (m1_positive) {
      // Chunk order inside a video matters for windowing; the store listing
      // is sorted by stem so chunk indices already ascend per video.
      std::vector<Index> pred(n, static_cast<Index>(ChunkLabel::no_class));
      Index emitted = 0;
      std::size_t lo = 0;
      while (lo < n) {
        std::size_t hi = lo;
        while (hi < n && store.records[hi].video_id == store.records[lo].video_id) ++hi;
        std::vector<bool> decisions;
        for (std::size_t i = lo; i < hi; ++i) decisions.push_back((*m1_positive)[i]);
        const Index count = static_cast<Index>(decisions.size());
        const Index window =
            std::min<Index>(ctx.cfg.pipeline.window_size, std::max<Index>(1, count));
        for (const Index local : window_chunks(decisions, window)) {
          const std::size_t i = lo + static_cast<std::size_t>(local);
          pred[i] = static_cast<Index>(apply_noclass_threshold(probs[i], delta));
          ++emitted;
        }
        lo = hi;
      }
      const MetricsReport r = compute_metrics(truth4, pred, kNumLabels);
      report["pipeline"] = metrics_block(r);
      report["pipeline"]["m2_invocations"] = emitted;
      text += metrics_line("pipeline (m1 + windowing + m2)", r);
    }

    if (!allframes_ckpt.empty()) {
      const AllFramesIdentifier<float> af = AllFramesIdentifier<float>::load(allframes_ckpt);
      std::vector<Index> t, p_af, p_rep;
      for (std::size_t i = 0; i < n; ++i) {
        if (!action_only[i]) continue;
        t.push_back(truth4[i]);
        p_af.push_back(static_cast<Index>(apply_noclass_threshold(
            af.forward(store.chunks[i].data, store.keypoints[i]), delta)));
        p_rep.push_back(static_cast<Index>(apply_noclass_threshold(probs[i], delta)));
      }
      const MetricsReport r_af = compute_metrics(t, p_af, kNumLabels);
      const MetricsReport r_rep = compute_metrics(t, p_rep, kNumLabels);
      report["ablation"] = {{"all_frames", metrics_block(r_af)},
                            {"representative_frame", metrics_block(r_rep)}};
      text += metrics_line("ablation, all frames", r_af);
      text += metrics_line("ablation, representative frame", r_rep);
    }

    if (!dump_probs.empty()) {
      std::ofstream out(dump_probs);
      if (!out) throw IoError("cannot write " + dump_probs);
      for (std::size_t i = 0; i < n; ++i) {
        out << json{{"video_id", store.records[i].video_id},
                    {"chunk_index", store.records[i].chunk_index},
                    {"label", label_name(store.records[i].label)},
                    {"probs", {probs[i](0), probs[i](1), probs[i](2)}}}
                   .dump()
            << "\n";
      }
      text += "wrote per-chunk probabilities to " + dump_probs + "\n";
    }
  }

  emit_report(ctx, report, text);
  return 0;
}

int cmd_sweep_delta(const Ctx& ctx, const std::string& chunks_dir, const std::string& m2_ckpt,
                    const std::string& probs_file, double max_delta, double step) {
  std::vector<Eigen::Vector3f> probs;
  std::vector<ChunkLabel> truth;

  if (!probs_file.empty()) {
    std::ifstream in(probs_file);
    if (!in) throw IoError("cannot open " + probs_file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      truth.push_back(require_label(j.at("label").get<std::string>()));
      const auto& p = j.at("probs");
      probs.emplace_back(p.at(0).get<float>(), p.at(1).get<float>(), p.at(2).get<float>());
    }
  } else {
    if (chunks_dir.empty() || m2_ckpt.empty())
      throw SchemaViolation("sweep-delta needs --probs, or --chunks with --m2");
    const LoadedStore store = load_store(chunks_dir, true);
    const ActionIdentifier<float> m2 = ActionIdentifier<float>::load(m2_ckpt);
    for (std::size_t i = 0; i < store.records.size(); ++i) {
      truth.push_back(store.records[i].label);
      probs.push_back(m2.forward(store.chunks[i].data, store.keypoints[i]));
    }
  }

  std::vector<double> grid;
  for (double d = 0.0; d <= max_delta + 1e-12; d += step) grid.push_back(d);
  const DeltaSweep sweep = sweep_delta(probs, truth, grid);

  std::string text;
  for (const DeltaRow& row : sweep.rows)
    text += "delta " + std::to_string(row.delta) + ": action macro-f1 " +
            std::to_string(row.macro_f1) + ", accuracy " + std::to_string(row.accuracy) +
            ", no-class " + std::to_string(row.noclass_count) + "\n";
  text += "best delta " + std::to_string(sweep.best_delta) + " over " +
          std::to_string(probs.size()) + " chunks\n";
  emit_report(ctx, sweep_to_json(sweep), text);
  return 0;
}

int cmd_benchmark(const Ctx& ctx, const std::string& chunks_dir, const std::string& component,
                  const std::string& m1_ckpt, const std::string& m2_ckpt,
                  const std::string& prefetch_ckpt, Index max_chunks, Index warmup) {
  LoadedStore store = load_store(chunks_dir, false);
  if (static_cast<Index>(store.chunks.size()) > max_chunks) {
    store.chunks.resize(static_cast<std::size_t>(max_chunks));
    store.records.resize(static_cast<std::size_t>(max_chunks));
  }

  std::optional<BinaryNet<float>> m1;
  std::optional<ActionIdentifier<float>> m2;
  std::optional<ChildClassifier<float>> child;
  const BlobPersonDetector detector;
  const BlobPoseEstimator pose;
  if (!m1_ckpt.empty()) m1 = BinaryNet<float>::load(m1_ckpt);
  if (!m2_ckpt.empty()) m2 = ActionIdentifier<float>::load(m2_ckpt);
  if (!prefetch_ckpt.empty()) child = ChildClassifier<float>::load(prefetch_ckpt);

  float sink = 0;
  std::function<void(const VideoChunk&)> forward;
  if (component == "m1") {
    if (m1) forward = [&](const VideoChunk& c) { sink += m1->forward(c.data); };
  } else if (component == "m2") {
    if (m2)
      forward = [&](const VideoChunk& c) {
        sink += m2->forward(c.data, pack_keypoints(extract_keypoints(c, pose))).sum();
      };
  } else if (component == "prefetch") {
    if (child)
      forward = [&](const VideoChunk& c) {
        sink += prefetch_chunk(c, detector, *child).data.flat()(0);
      };
  } else if (component == "pipeline") {
    if (m1 && m2)
      forward = [&](const VideoChunk& c) {
        VideoChunk cropped = child ? prefetch_chunk(c, detector, *child) : c;
        const float p = m1->forward(cropped.data);
        sink += p;
        if (m1_is_action(p))
          sink += m2->forward(c.data, pack_keypoints(extract_keypoints(c, pose))).sum();
      };
  } else {
    throw SchemaViolation("unknown component '" + component + "'");
  }

  const FpsReport rep = benchmark_fps(component, forward, store.chunks, warmup);
  volatile float guard = sink;  // keeps the measured work observable
  (void)guard;
  std::string text = component + ": " + std::to_string(rep.fps) + " fps over " +
                     std::to_string(rep.chunks) + " chunks (" +
                     std::to_string(rep.elapsed_seconds) + "s on " + rep.hardware + ")\n" +
                     rep.note + "\n";
  emit_report(ctx, fps_report_to_json(rep), text);
  return 0;
}

int cmd_footprint(const Ctx& ctx) {
  const FootprintReport rep = footprint_report(ctx.cfg.m1, ctx.cfg.m2, ctx.cfg.prefetch,
                                               ctx.cfg.teacher, ctx.cfg.student);
  std::string text;
  for (const FootprintRow& row : rep.rows)
    text += row.component + ": " + std::to_string(row.footprint.learnable) + " learnable, " +
            std::to_string(row.footprint.frozen) + " frozen, " +
            std::to_string(row.footprint.total()) + " total\n";
  text += "student/teacher learnable ratio: " +
          std::to_string(100.0 * rep.student_teacher_ratio) + "%\n";
  emit_report(ctx, footprint_report_to_json(rep), text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-stimulatory behaviour detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  Ctx ctx;
  app.add_option("--config", ctx.config_path, "JSON config file");
  app.add_option("--manifest", ctx.manifest_path, "dataset manifest");
  app.add_option("--out", ctx.out_path, "output file or directory");
  auto* seed_opt = app.add_option("--seed", ctx.seed, "seed override");
  app.add_flag("--json", ctx.json_stdout, "print the JSON report to stdout");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "decode videos into a chunk store");
  std::string pre_prefetch;
  Index pre_stride = kDefaultStride;
  pre->add_option("--prefetch", pre_prefetch, "crop chunks through this prefetch checkpoint");
  pre->add_option("--stride", pre_stride, "chunk stride in frames")->check(CLI::PositiveNumber);

  // train-prefetch
  auto* tpf = app.add_subcommand("train-prefetch", "train the child/adult head");
  std::string tpf_data;
  double tpf_val = 0.2;
  tpf->add_option("--data", tpf_data, "folder with child/ and adult/ .ppm images")->required();
  tpf->add_option("--val-fraction", tpf_val, "held-out image share");

  // train-m1
  auto* tm1 = app.add_subcommand("train-m1", "train the binary action detector");
  std::string tm1_chunks;
  double tm1_val = 0.2;
  tm1->add_option("--chunks", tm1_chunks, "chunk store directory")->required();
  tm1->add_option("--val-fraction", tm1_val, "held-out video share");

  // train-m2
  auto* tm2 = app.add_subcommand("train-m2", "train the action identifier");
  std::string tm2_chunks;
  double tm2_val = 0.2;
  bool tm2_allframes = false;
  tm2->add_option("--chunks", tm2_chunks, "chunk store directory")->required();
  tm2->add_option("--val-fraction", tm2_val, "held-out video share");
  tm2->add_flag("--all-frames", tm2_allframes, "train the all-frames ablation variant");

  // distill
  auto* dst = app.add_subcommand("distill", "train the teacher, then distill the student");
  std::string dst_chunks, dst_teacher;
  double dst_val = 0.2;
  dst->add_option("--chunks", dst_chunks, "chunk store directory")->required();
  dst->add_option("--teacher", dst_teacher, "reuse this teacher checkpoint");
  dst->add_option("--val-fraction", dst_val, "held-out video share");

  // infer
  auto* inf = app.add_subcommand("infer", "run the cascade over one video");
  std::string inf_video, inf_m1, inf_m2, inf_prefetch;
  inf->add_option("--video", inf_video, "input video")->required();
  inf->add_option("--m1", inf_m1, "m1 checkpoint")->required();
  inf->add_option("--m2", inf_m2, "m2 checkpoint")->required();
  inf->add_option("--prefetch", inf_prefetch, "prefetch checkpoint (enables cropping)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score checkpoints against a chunk store");
  std::string ev_chunks, ev_m1, ev_m2, ev_allframes, ev_dump;
  std::string ev_split = "all";
  ev->add_option("--chunks", ev_chunks, "chunk store directory")->required();
  ev->add_option("--m1", ev_m1, "m1 checkpoint");
  ev->add_option("--m2", ev_m2, "m2 checkpoint");
  ev->add_option("--all-frames", ev_allframes, "all-frames checkpoint for the ablation");
  ev->add_option("--split", ev_split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}));
  ev->add_option("--dump-probs", ev_dump, "write per-chunk m2 probabilities (jsonl)");

  // sweep-delta
  auto* swp = app.add_subcommand("sweep-delta", "tune the no-class margin");
  std::string swp_chunks, swp_m2, swp_probs;
  double swp_max = 0.67, swp_step = 0.01;
  swp->add_option("--chunks", swp_chunks, "chunk store directory");
  swp->add_option("--m2", swp_m2, "m2 checkpoint");
  swp->add_option("--probs", swp_probs, "cached probabilities from evaluate --dump-probs");
  swp->add_option("--max", swp_max, "largest margin to try");
  swp->add_option("--step", swp_step, "grid step")->check(CLI::PositiveNumber);

  // benchmark
  auto* bch = app.add_subcommand("benchmark", "measure single-stream throughput");
  std::string bch_chunks, bch_component = "m1", bch_m1, bch_m2, bch_prefetch;
  Index bch_max = 8, bch_warmup = 3;
  bch->add_option("--chunks", bch_chunks, "chunk store directory")->required();
  bch->add_option("--component", bch_component, "m1, m2, prefetch or pipeline")
      ->check(CLI::IsMember({"m1", "m2", "prefetch", "pipeline"}));
  bch->add_option("--m1", bch_m1, "m1 checkpoint");
  bch->add_option("--m2", bch_m2, "m2 checkpoint");
  bch->add_option("--prefetch", bch_prefetch, "prefetch checkpoint");
  bch->add_option("--max-chunks", bch_max, "cap on timed chunks")->check(CLI::PositiveNumber);
  bch->add_option("--warmup", bch_warmup, "untimed warmup chunks");

  // footprint
  app.add_subcommand("footprint", "parameter counts for every model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    ctx.has_seed = seed_opt->count() > 0;
    ctx.finalize();
    if (pre->parsed()) return cmd_preprocess(ctx, pre_prefetch, pre_stride);
    if (tpf->parsed()) return cmd_train_prefetch(ctx, tpf_data, tpf_val);
    if (tm1->parsed()) return cmd_train_m1(ctx, tm1_chunks, tm1_val);
    if (tm2->parsed()) return cmd_train_m2(ctx, tm2_chunks, tm2_val, tm2_allframes);
    if (dst->parsed()) return cmd_distill(ctx, dst_chunks, dst_teacher, dst_val);
    if (inf->parsed()) return cmd_infer(ctx, inf_video, inf_m1, inf_m2, inf_prefetch);
    if (ev->parsed())
      return cmd_evaluate(ctx, ev_chunks, ev_m1, ev_m2, ev_allframes, ev_split, ev_dump);
    if (swp->parsed()) return cmd_sweep_delta(ctx, swp_chunks, swp_m2, swp_probs, swp_max, swp_step);
    if (bch->parsed())
      return cmd_benchmark(ctx, bch_chunks, bch_component, bch_m1, bch_m2, bch_prefetch, bch_max,
                           bch_warmup);
    return cmd_footprint(ctx);
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"kind", "Internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
}
