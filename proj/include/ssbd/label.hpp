#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "ssbd/error.hpp"

namespace ssbd {

// Closed 4-way output vocabulary. `no_class` means "no stimming action".
enum class ChunkLabel : std::uint8_t {
  no_class = 0,
  arm_flapping = 1,
  headbanging = 2,
  spinning = 3,
};

inline constexpr int kNumLabels = 4;
inline constexpr int kNumActionLabels = 3;

inline const std::string& label_name(ChunkLabel l) {
  static const std::array<std::string, 4> names = {
      "no-class", "arm-flapping", "headbanging", "spinning"};
  return names[static_cast<std::size_t>(l)];
}

inline std::optional<ChunkLabel> label_from_name(const std::string& s) {
  for (int i = 0; i < kNumLabels; ++i) {
    if (s == label_name(static_cast<ChunkLabel>(i))) return static_cast<ChunkLabel>(i);
  }
  return std::nullopt;
}

inline ChunkLabel require_label(const std::string& s) {
  const auto l = label_from_name(s);
  if (!l.has_value()) throw SchemaViolation("unknown label '" + s + "'");
  return *l;
}

// Annotation categories as seen in SSBD-style XML. The public release spells
// them without separators; hyphen/underscore variants are tolerated.
inline ChunkLabel action_category_from_string(const std::string& raw) {
  std::string s;
  for (char c : raw) {
    if (c == '-' || c == '_' || c == ' ') continue;
    s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (s == "armflapping") return ChunkLabel::arm_flapping;
  if (s == "headbanging") return ChunkLabel::headbanging;
  if (s == "spinning") return ChunkLabel::spinning;
  throw SchemaViolation("unknown behaviour category '" + raw + "'");
}

inline bool is_action(ChunkLabel l) { return l != ChunkLabel::no_class; }

}  // namespace ssbd
