// Generates a small synthetic dataset: clips for each action plus no-class
// footage, SSBD-style XML annotations, a train/test manifest, and labelled
// person images for the child classifier.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssbd/annotations.hpp"
#include "ssbd/image.hpp"
#include "ssbd/label.hpp"
#include "ssbd/rng.hpp"
#include "ssbd/synthetic.hpp"

namespace fs = std::filesystem;
using namespace ssbd;

namespace {

std::string slug(ChunkLabel l) {
  switch (l) {
    case ChunkLabel::arm_flapping: return "armflap";
    case ChunkLabel::headbanging: return "headbang";
    case ChunkLabel::spinning: return "spin";
    default: return "noclass";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"write a synthetic ssbd-style dataset"};
  std::string out_dir;
  int per_class = 2;
  int people_per_class = 24;
  double duration = 8.0;
  double src_fps = 25.0;
  double test_fraction = 0.25;
  std::uint64_t seed = 1;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--videos-per-class", per_class, "clips per label")->check(CLI::PositiveNumber);
  app.add_option("--people-per-class", people_per_class, "child and adult image count")
      ->check(CLI::PositiveNumber);
  app.add_option("--duration", duration, "clip length in seconds");
  app.add_option("--src-fps", src_fps, "source frame rate");
  app.add_option("--test-fraction", test_fraction, "share of videos held out");
  app.add_option("--seed", seed, "rng seed");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path root(out_dir);
    fs::create_directories(root / "videos");
    fs::create_directories(root / "annotations");
    fs::create_directories(root / "people" / "child");
    fs::create_directories(root / "people" / "adult");

    const ChunkLabel labels[] = {ChunkLabel::arm_flapping, ChunkLabel::headbanging,
                                 ChunkLabel::spinning, ChunkLabel::no_class};
    std::vector<AnnotationRecord> records;
    std::map<std::string, std::string> paths;
    std::uint64_t clip_seed = seed;
    for (ChunkLabel label : labels) {
      for (int i = 0; i < per_class; ++i) {
        const std::string video_id = slug(label) + "_" + std::to_string(i + 1);
        const fs::path video_path = root / "videos" / (video_id + ".y4m");
        AnnotationRecord rec = synth::write_synthetic_video(
            video_path, video_id, label, duration, src_fps, 120, 160, ++clip_seed);
        std::ofstream xml(root / "annotations" / (video_id + ".xml"));
        if (!xml) throw IoError("cannot write annotation for " + video_id);
        xml << serialize_annotation(rec);
        paths[video_id] = video_path.string();
        records.push_back(std::move(rec));
      }
    }

    const DatasetManifest manifest = build_manifest(records, paths, test_fraction, seed);
    save_manifest(root / "manifest.json", manifest);

    Rng rng(seed + 9000);
    for (int i = 0; i < people_per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "person_%03d.ppm", i);
      write_ppm(root / "people" / "child" / name, synth::make_person_image(true, 96, 96, rng));
      write_ppm(root / "people" / "adult" / name, synth::make_person_image(false, 96, 96, rng));
    }

    int test_count = 0;
    for (const ManifestEntry& e : manifest.entries)
      if (e.split == Split::test) ++test_count;
    std::cout << "wrote " << manifest.entries.size() << " videos ("
              << test_count << " test) and " << 2 * people_per_class
              << " person images under " << root.string() << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", "Internal"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }
}
