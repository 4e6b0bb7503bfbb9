#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ssbd/annotations.hpp"
#include "ssbd/rng.hpp"

#include "helpers.hpp"

using namespace ssbd;

namespace {

const std::filesystem::path kGoldenDir =
    std::filesystem::path(SSBD_SOURCE_DIR) / "data" / "annotations";

AnnotationRecord random_record(Rng& rng, int idx) {
  AnnotationRecord rec;
  rec.video_id = "vid_" + std::to_string(idx);
  if (rng.uniform() < 0.5) rec.url = "https://example.org/" + rec.video_id;
  rec.duration = rng.uniform(30.0, 300.0);
  const auto n = rng.uniform_int(0, 4);
  static const char* tags[] = {"low", "medium", "high"};
  for (std::int64_t b = 0; b < n; ++b) {
    BehaviourInterval iv;
    iv.start_time = rng.uniform(0.0, rec.duration - 2.0);
    iv.end_time = iv.start_time + rng.uniform(0.5, rec.duration - iv.start_time);
    iv.category = static_cast<ChunkLabel>(rng.uniform_int(1, 3));
    if (rng.uniform() < 0.7) iv.intensity = tags[rng.uniform_int(0, 2)];
    if (rng.uniform() < 0.4) iv.modality = "video";
    if (rng.uniform() < 0.4) iv.bodypart = "hands";
    rec.behaviours.push_back(std::move(iv));
  }
  return rec;
}

}  // namespace

TEST_CASE("golden armflapping annotation parses field for field") {
  const auto rec = parse_annotation_file(kGoldenDir / "v_armflapping_01.xml");
  CHECK(rec.video_id == "v_armflapping_01");
  CHECK(rec.url == "https://video.example.org/v_armflapping_01");
  CHECK(rec.duration == doctest::Approx(92.0));
  REQUIRE(rec.behaviours.size() == 2);

  const auto& b0 = rec.behaviours[0];
  CHECK(b0.start_time == doctest::Approx(3.0));
  CHECK(b0.end_time == doctest::Approx(12.5));
  CHECK(b0.category == ChunkLabel::arm_flapping);
  CHECK(b0.intensity == "high");
  CHECK(b0.modality == "video");
  CHECK(b0.bodypart == "hands");

  const auto& b1 = rec.behaviours[1];
  CHECK(b1.start_time == doctest::Approx(47.0));
  CHECK(b1.end_time == doctest::Approx(63.0));
  CHECK(b1.category == ChunkLabel::arm_flapping);
  CHECK(b1.intensity == "low");
}

TEST_CASE("golden headbanging annotation tolerates category variants and absent tags") {
  const auto rec = parse_annotation_file(kGoldenDir / "v_headbanging_02.xml");
  CHECK(rec.video_id == "v_headbanging_02");
  CHECK(rec.url.empty());
  CHECK(rec.duration == doctest::Approx(41.8));
  REQUIRE(rec.behaviours.size() == 2);
  CHECK(rec.behaviours[0].category == ChunkLabel::headbanging);
  CHECK(rec.behaviours[0].modality.empty());
  CHECK(rec.behaviours[1].category == ChunkLabel::spinning);
  CHECK(rec.behaviours[1].start_time == doctest::Approx(8.5));
  CHECK(rec.behaviours[1].intensity.empty());
  CHECK(rec.behaviours[1].bodypart.empty());
}

TEST_CASE("golden spinning annotation with empty behaviour list") {
  const auto rec = parse_annotation_file(kGoldenDir / "v_spinning_03.xml");
  CHECK(rec.video_id == "v_spinning_03");
  CHECK(rec.duration == doctest::Approx(25.0));
  CHECK(rec.behaviours.empty());
}

TEST_CASE("serialize then parse is the identity on random records") {
  Rng rng(20260814);
  for (int i = 0; i < 200; ++i) {
    const auto rec = random_record(rng, i);
    const auto back = parse_annotation(serialize_annotation(rec));
    CHECK(back == rec);
  }
}

TEST_CASE("category spellings with separators and case are accepted") {
  CHECK(action_category_from_string("armflapping") == ChunkLabel::arm_flapping);
  CHECK(action_category_from_string("Arm_Flapping") == ChunkLabel::arm_flapping);
  CHECK(action_category_from_string("head-banging") == ChunkLabel::headbanging);
  CHECK(action_category_from_string("HeadBanging") == ChunkLabel::headbanging);
  CHECK(action_category_from_string("spinning") == ChunkLabel::spinning);
  CHECK_THROWS_AS(action_category_from_string("rocking"), SchemaViolation);
}

TEST_CASE("parse errors carry the right kinds") {
  CHECK_THROWS_AS(parse_annotation("<video id=\"x\"><duration>5"), MalformedXml);
  CHECK_THROWS_AS(parse_annotation("<clip id=\"x\"/>"), SchemaViolation);
  CHECK_THROWS_AS(parse_annotation("<video><duration>5</duration></video>"), SchemaViolation);
  CHECK_THROWS_AS(parse_annotation("<video id=\"x\"></video>"), SchemaViolation);
  CHECK_THROWS_AS(parse_annotation("<video id=\"x\"><duration>zero</duration></video>"),
                  SchemaViolation);
  CHECK_THROWS_AS(parse_annotation("<video id=\"x\"><duration>0</duration></video>"),
                  SchemaViolation);
  CHECK_THROWS_AS(parse_annotation_file(kGoldenDir / "does_not_exist.xml"), IoError);

  const std::string head = "<video id=\"x\"><duration>10</duration><behaviours>";
  const std::string tail = "</behaviours></video>";
  CHECK_THROWS_AS(
      parse_annotation(head + "<behaviour><category>spinning</category></behaviour>" + tail),
      SchemaViolation);
  CHECK_THROWS_AS(
      parse_annotation(head + "<behaviour><time>1-2</time><category>spinning</category></behaviour>" + tail),
      SchemaViolation);
  CHECK_THROWS_AS(
      parse_annotation(head + "<behaviour><time>-1:2</time><category>spinning</category></behaviour>" + tail),
      SchemaViolation);
  CHECK_THROWS_AS(
      parse_annotation(head + "<behaviour><time>3:3</time><category>spinning</category></behaviour>" + tail),
      SchemaViolation);
  CHECK_THROWS_AS(
      parse_annotation(head + "<behaviour><time>1:2</time></behaviour>" + tail),
      SchemaViolation);
  CHECK_THROWS_AS(
      parse_annotation(head + "<behaviour><time>1:2</time><category>jumping</category></behaviour>" + tail),
      SchemaViolation);
  CHECK_THROWS_AS(
      parse_annotation(head + "<behaviour><time>4:11</time><category>spinning</category></behaviour>" + tail),
      IntervalOutOfRange);
}

TEST_CASE("frame labels follow half open intervals with earliest start winning") {
  AnnotationRecord rec;
  rec.video_id = "v";
  rec.duration = 3.0;
  rec.behaviours.push_back({0.5, 1.25, ChunkLabel::arm_flapping, "", "", ""});
  rec.behaviours.push_back({1.0, 2.0, ChunkLabel::headbanging, "", "", ""});

  const auto labels = frame_labels_from_intervals(rec, 10.0);
  REQUIRE(labels.size() == 30);
  for (int f = 0; f < 5; ++f) CHECK(labels[f] == ChunkLabel::no_class);
  // t in [0.5, 1.25) covers frames 5..12; the overlap 10..12 keeps the
  // earlier-starting armflapping interval.
  for (int f = 5; f <= 12; ++f) CHECK(labels[f] == ChunkLabel::arm_flapping);
  for (int f = 13; f <= 19; ++f) CHECK(labels[f] == ChunkLabel::headbanging);
  for (int f = 20; f < 30; ++f) CHECK(labels[f] == ChunkLabel::no_class);
}

TEST_CASE("frame label boundaries are inclusive at start and exclusive at end") {
  AnnotationRecord rec;
  rec.video_id = "v";
  rec.duration = 4.0;
  rec.behaviours.push_back({1.0, 2.0, ChunkLabel::spinning, "", "", ""});
  const auto labels = frame_labels_from_intervals(rec, 10.0);
  REQUIRE(labels.size() == 40);
  CHECK(labels[9] == ChunkLabel::no_class);
  CHECK(labels[10] == ChunkLabel::spinning);
  CHECK(labels[19] == ChunkLabel::spinning);
  CHECK(labels[20] == ChunkLabel::no_class);
}

TEST_CASE("equal start times resolve by document order") {
  AnnotationRecord rec;
  rec.video_id = "v";
  rec.duration = 2.0;
  rec.behaviours.push_back({0.0, 1.0, ChunkLabel::headbanging, "", "", ""});
  rec.behaviours.push_back({0.0, 2.0, ChunkLabel::spinning, "", "", ""});
  const auto labels = frame_labels_from_intervals(rec, 10.0);
  REQUIRE(labels.size() == 20);
  for (int f = 0; f < 10; ++f) CHECK(labels[f] == ChunkLabel::headbanging);
  for (int f = 10; f < 20; ++f) CHECK(labels[f] == ChunkLabel::spinning);
  CHECK_THROWS_AS(frame_labels_from_intervals(rec, 0.0), std::invalid_argument);
}

TEST_CASE("manifest splits whole videos deterministically") {
  std::vector<AnnotationRecord> records;
  std::map<std::string, std::string> paths;
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    records.push_back(random_record(rng, i));
    paths[records.back().video_id] = "videos/" + records.back().video_id + ".y4m";
  }

  auto quiet = [](const std::string&) {};
  const auto m1 = build_manifest(records, paths, 0.25, 42, quiet);
  const auto m2 = build_manifest(records, paths, 0.25, 42, quiet);
  REQUIRE(m1.entries.size() == 20);

  std::size_t n_test = 0;
  for (std::size_t i = 0; i < m1.entries.size(); ++i) {
    CHECK(m1.entries[i].split == m2.entries[i].split);
    CHECK(m1.entries[i].video_id == records[i].video_id);
    CHECK(m1.entries[i].path == paths.at(records[i].video_id));
    if (m1.entries[i].split == Split::test) ++n_test;
  }
  CHECK(n_test == 5);

  // Split membership is per video id, so no id may appear in both splits.
  std::map<std::string, std::set<Split>> seen;
  for (const auto& e : m1.entries) seen[e.video_id].insert(e.split);
  for (const auto& [id, splits] : seen) CHECK(splits.size() == 1);

  const auto m3 = build_manifest(records, paths, 0.25, 43, quiet);
  bool any_difference = false;
  for (std::size_t i = 0; i < m1.entries.size(); ++i)
    if (m1.entries[i].split != m3.entries[i].split) any_difference = true;
  CHECK(any_difference);
}

TEST_CASE("manifest input validation") {
  Rng rng(9);
  std::vector<AnnotationRecord> records = {random_record(rng, 0), random_record(rng, 1)};
  std::map<std::string, std::string> paths = {{"vid_0", "a.y4m"}, {"vid_1", "b.y4m"}};
  auto quiet = [](const std::string&) {};

  CHECK_THROWS_AS(build_manifest(records, paths, 0.0, 1, quiet), std::invalid_argument);
  CHECK_THROWS_AS(build_manifest(records, paths, 1.0, 1, quiet), std::invalid_argument);

  std::string warning;
  build_manifest(records, paths, 0.5, 1, [&](const std::string& msg) { warning = msg; });
  CHECK(warning.find("2 videos") != std::string::npos);

  auto dup = records;
  dup.push_back(records[0]);
  CHECK_THROWS_AS(build_manifest(dup, paths, 0.5, 1, quiet), SchemaViolation);

  paths.erase("vid_1");
  CHECK_THROWS_AS(build_manifest(records, paths, 0.5, 1, quiet), MissingVideoFile);
}

TEST_CASE("manifest json and file round trip") {
  Rng rng(11);
  std::vector<AnnotationRecord> records;
  std::map<std::string, std::string> paths;
  for (int i = 0; i < 8; ++i) {
    records.push_back(random_record(rng, i));
    paths[records.back().video_id] = "videos/" + records.back().video_id + ".y4m";
  }
  auto quiet = [](const std::string&) {};
  const auto m = build_manifest(records, paths, 0.25, 5, quiet);

  const auto back = manifest_from_json(manifest_to_json(m));
  REQUIRE(back.entries.size() == m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(back.entries[i].video_id == m.entries[i].video_id);
    CHECK(back.entries[i].path == m.entries[i].path);
    CHECK(back.entries[i].split == m.entries[i].split);
    CHECK(back.entries[i].annotation == m.entries[i].annotation);
  }

  const auto dir = ssbd::test::temp_dir("manifest");
  save_manifest(dir / "manifest.json", m);
  const auto loaded = load_manifest(dir / "manifest.json");
  REQUIRE(loaded.entries.size() == m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    CHECK(loaded.entries[i].annotation == m.entries[i].annotation);
  CHECK_THROWS_AS(load_manifest(dir / "nope.json"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("annotation json rejects non action categories") {
  nlohmann::json j = {{"video_id", "v"},
                      {"duration", 10.0},
                      {"behaviours",
                       {{{"start_time", 1.0}, {"end_time", 2.0}, {"category", "no-class"}}}}};
  CHECK_THROWS_AS(annotation_from_json(j), SchemaViolation);
  j["behaviours"][0]["category"] = "arm-flapping";
  const auto rec = annotation_from_json(j);
  CHECK(rec.behaviours[0].category == ChunkLabel::arm_flapping);
}
