#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/label.hpp"
#include "ssbd/rng.hpp"

namespace ssbd {

using WarningSink = std::function<void(const std::string&)>;

inline void default_warning_sink(const std::string& msg) {
  std::cerr << "warning: " << msg << "\n";
}

// One annotated behaviour interval, times in seconds from video start.
// The interval is half-open: [start_time, end_time).
struct BehaviourInterval {
  double start_time = 0.0;
  double end_time = 0.0;
  ChunkLabel category = ChunkLabel::no_class;  // always an action category
  std::string intensity;                       // free-text tags, may be empty
  std::string modality;
  std::string bodypart;

  friend bool operator==(const BehaviourInterval&, const BehaviourInterval&) = default;
};

struct AnnotationRecord {
  std::string video_id;
  std::string url;  // optional, empty when absent
  double duration = 0.0;
  std::vector<BehaviourInterval> behaviours;  // document order

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

enum class Split { train, test };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

struct ManifestEntry {
  std::string video_id;
  std::string path;
  AnnotationRecord annotation;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

// --- XML parsing --------------------------------------------------------
//
// The annotation schema follows the SSBD public release: a <video> root with
// id attribute, <url> and <duration> children, and a <behaviours> list whose
// <behaviour> children carry <time>start:end</time>, <category>, and the
// optional <intensity>, <modality>, <bodypart> tags. See
// docs/annotation_schema.xsd for the formal schema and data/annotations for
// golden examples.

namespace detail {

inline double parse_seconds(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw SchemaViolation(what + " is not a number: '" + s + "'");
    return v;
  } catch (const SchemaViolation&) {
    throw;
  } catch (const std::exception&) {
    throw SchemaViolation(what + " is not a number: '" + s + "'");
  }
}

inline std::string trimmed(std::string s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

}  // namespace detail

inline AnnotationRecord parse_annotation(const std::string& xml_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(xml_text);
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw MalformedXml(e.what());
  }

  const auto video = tree.get_child_optional("video");
  if (!video) throw SchemaViolation("missing <video> root element");

  AnnotationRecord rec;
  rec.video_id = detail::trimmed(video->get<std::string>("<xmlattr>.id", ""));
  if (rec.video_id.empty()) throw SchemaViolation("<video> is missing the id attribute");
  rec.url = detail::trimmed(video->get<std::string>("url", ""));

  const auto duration_str = video->get_optional<std::string>("duration");
  if (!duration_str) throw SchemaViolation("missing <duration>");
  rec.duration = detail::parse_seconds(detail::trimmed(*duration_str), "duration");
  if (rec.duration <= 0.0) throw SchemaViolation("duration must be > 0");

  const auto behaviours = video->get_child_optional("behaviours");
  if (behaviours) {
    for (const auto& [name, node] : *behaviours) {
      if (name != "behaviour") continue;
      BehaviourInterval iv;
      const auto time_str = node.get_optional<std::string>("time");
      if (!time_str) throw SchemaViolation("behaviour is missing <time>");
      const std::string t = detail::trimmed(*time_str);
      const auto colon = t.find(':');
      if (colon == std::string::npos)
        throw SchemaViolation("behaviour <time> must be 'start:end', got '" + t + "'");
      iv.start_time = detail::parse_seconds(t.substr(0, colon), "time start");
      iv.end_time = detail::parse_seconds(t.substr(colon + 1), "time end");
      if (iv.start_time < 0.0) throw SchemaViolation("negative start time");
      if (iv.end_time <= iv.start_time) throw SchemaViolation("end time must exceed start time");

      const auto category = node.get_optional<std::string>("category");
      if (!category) throw SchemaViolation("behaviour is missing <category>");
      iv.category = action_category_from_string(detail::trimmed(*category));

      iv.intensity = detail::trimmed(node.get<std::string>("intensity", ""));
      iv.modality = detail::trimmed(node.get<std::string>("modality", ""));
      iv.bodypart = detail::trimmed(node.get<std::string>("bodypart", ""));

      if (iv.end_time > rec.duration)
        throw IntervalOutOfRange("behaviour [" + std::to_string(iv.start_time) + ", " +
                                 std::to_string(iv.end_time) + ") exceeds duration " +
                                 std::to_string(rec.duration));
      rec.behaviours.push_back(std::move(iv));
    }
  }
  return rec;
}

inline AnnotationRecord parse_annotation_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_annotation(buf.str());
}

namespace detail {
inline std::string format_seconds(double v) {
  std::ostringstream os;
  os.precision(17);
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    os << static_cast<long long>(v);
  } else {
    os << v;
  }
  return os.str();
}

// SSBD category spelling (no separators).
inline std::string category_xml_name(ChunkLabel l) {
  switch (l) {
    case ChunkLabel::arm_flapping: return "armflapping";
    case ChunkLabel::headbanging: return "headbanging";
    case ChunkLabel::spinning: return "spinning";
    default: throw SchemaViolation("no-class is not an annotatable category");
  }
}
}  // namespace detail

inline std::string serialize_annotation(const AnnotationRecord& rec) {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
  os << "<video id=\"" << rec.video_id << "\">\n";
  if (!rec.url.empty()) os << "  <url>" << rec.url << "</url>\n";
  os << "  <duration>" << detail::format_seconds(rec.duration) << "</duration>\n";
  os << "  <behaviours count=\"" << rec.behaviours.size() << "\">\n";
  int id = 1;
  for (const auto& b : rec.behaviours) {
    os << "    <behaviour id=\"" << id++ << "\">\n";
    os << "      <time>" << detail::format_seconds(b.start_time) << ":"
       << detail::format_seconds(b.end_time) << "</time>\n";
    os << "      <category>" << detail::category_xml_name(b.category) << "</category>\n";
    if (!b.intensity.empty()) os << "      <intensity>" << b.intensity << "</intensity>\n";
    if (!b.modality.empty()) os << "      <modality>" << b.modality << "</modality>\n";
    if (!b.bodypart.empty()) os << "      <bodypart>" << b.bodypart << "</bodypart>\n";
    os << "    </behaviour>\n";
  }
  os << "  </behaviours>\n";
  os << "</video>\n";
  return os.str();
}

// --- Per-frame labels ----------------------------------------------------

// Frame i covers time i/fps. A frame takes the category of the interval that
// contains its timestamp; when intervals overlap, the one with the earliest
// start wins (ties resolved by document order).
inline std::vector<ChunkLabel> frame_labels_from_intervals(const AnnotationRecord& rec,
                                                           double fps) {
  if (fps <= 0.0) throw std::invalid_argument("fps must be > 0");
  const auto n = static_cast<long long>(std::floor(rec.duration * fps));
  std::vector<ChunkLabel> labels(static_cast<std::size_t>(n), ChunkLabel::no_class);

  std::vector<std::size_t> order(rec.behaviours.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rec.behaviours[a].start_time < rec.behaviours[b].start_time;
  });

  for (std::size_t oi : order) {
    const auto& iv = rec.behaviours[oi];
    const auto first = static_cast<long long>(std::ceil(iv.start_time * fps));
    for (long long f = std::max(0LL, first); f < n; ++f) {
      const double t = static_cast<double>(f) / fps;
      if (t >= iv.end_time) break;
      auto& slot = labels[static_cast<std::size_t>(f)];
      if (slot == ChunkLabel::no_class) slot = iv.category;
    }
  }
  return labels;
}

// --- Manifest ------------------------------------------------------------

// Whole-video split: no chunk of one video may land in both splits, so test
// membership is decided per video id. floor(test_fraction * N) ids go to
// test; the selection and ordering are fixed by `seed`.
inline DatasetManifest build_manifest(const std::vector<AnnotationRecord>& records,
                                      const std::map<std::string, std::string>& paths,
                                      double test_fraction, std::uint64_t seed,
                                      const WarningSink& warn = default_warning_sink) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must be in (0, 1)");

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  {
    std::map<std::string, int> seen;
    for (const auto& r : records) {
      if (++seen[r.video_id] > 1)
        throw SchemaViolation("duplicate video_id in manifest input: " + r.video_id);
      if (paths.find(r.video_id) == paths.end())
        throw MissingVideoFile("no path supplied for video_id '" + r.video_id + "'");
    }
  }

  Rng rng(seed);
  rng.shuffle(order);
  const auto n_test =
      static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(records.size())));
  if (records.size() < 4)
    warn("manifest has only " + std::to_string(records.size()) +
         " videos; the test split holds " + std::to_string(n_test));

  std::vector<bool> is_test(records.size(), false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;

  DatasetManifest m;
  m.entries.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    ManifestEntry e;
    e.video_id = records[i].video_id;
    e.path = paths.at(e.video_id);
    e.annotation = records[i];
    e.split = is_test[i] ? Split::test : Split::train;
    m.entries.push_back(std::move(e));
  }
  return m;
}

// --- JSON serialization ----------------------------------------------------

inline nlohmann::json annotation_to_json(const AnnotationRecord& rec) {
  nlohmann::json j;
  j["video_id"] = rec.video_id;
  if (!rec.url.empty()) j["url"] = rec.url;
  j["duration"] = rec.duration;
  auto arr = nlohmann::json::array();
  for (const auto& b : rec.behaviours) {
    nlohmann::json jb;
    jb["start_time"] = b.start_time;
    jb["end_time"] = b.end_time;
    jb["category"] = label_name(b.category);
    if (!b.intensity.empty()) jb["intensity"] = b.intensity;
    if (!b.modality.empty()) jb["modality"] = b.modality;
    if (!b.bodypart.empty()) jb["bodypart"] = b.bodypart;
    arr.push_back(std::move(jb));
  }
  j["behaviours"] = std::move(arr);
  return j;
}

inline AnnotationRecord annotation_from_json(const nlohmann::json& j) {
  AnnotationRecord rec;
  rec.video_id = j.at("video_id").get<std::string>();
  rec.url = j.value("url", std::string());
  rec.duration = j.at("duration").get<double>();
  for (const auto& jb : j.at("behaviours")) {
    BehaviourInterval b;
    b.start_time = jb.at("start_time").get<double>();
    b.end_time = jb.at("end_time").get<double>();
    const auto lbl = label_from_name(jb.at("category").get<std::string>());
    if (!lbl || !is_action(*lbl)) throw SchemaViolation("bad category in manifest JSON");
    b.category = *lbl;
    b.intensity = jb.value("intensity", std::string());
    b.modality = jb.value("modality", std::string());
    b.bodypart = jb.value("bodypart", std::string());
    rec.behaviours.push_back(std::move(b));
  }
  return rec;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  auto arr = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je;
    je["video_id"] = e.video_id;
    je["path"] = e.path;
    je["split"] = split_name(e.split);
    je["annotation"] = annotation_to_json(e.annotation);
    arr.push_back(std::move(je));
  }
  return arr;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  for (const auto& je : j) {
    ManifestEntry e;
    e.video_id = je.at("video_id").get<std::string>();
    e.path = je.at("path").get<std::string>();
    e.split = je.at("split").get<std::string>() == "test" ? Split::test : Split::train;
    e.annotation = annotation_from_json(je.at("annotation"));
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << manifest_to_json(m).dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  in >> j;
  return manifest_from_json(j);
}

}  // namespace ssbd
