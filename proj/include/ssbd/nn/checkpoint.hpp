#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssbd/error.hpp"
#include "ssbd/nn/layers.hpp"

// Checkpoint container: a JSON header (kind, free-form metadata, array
// directory) followed by float32 payloads in directory order.

namespace ssbd::nn {

inline constexpr char kCheckpointMagic[8] = {'S', 'S', 'B', 'D', 'C', 'K', 'P', 'T'};

template <typename S>
inline void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                            const nlohmann::json& meta, const ParamList<S>& params) {
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& p : params) dir.push_back({{"name", p.name}, {"size", p.size}});
  const nlohmann::json header{{"kind", kind}, {"meta", meta}, {"arrays", dir}};
  const std::string head = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = 1;
  const auto head_len = static_cast<std::uint32_t>(head.size());
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&head_len), sizeof head_len);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  std::vector<float> buf;
  for (const auto& p : params) {
    buf.resize(static_cast<std::size_t>(p.size));
    for (Index i = 0; i < p.size; ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(p.value[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on checkpoint: " + path.string());
}

struct Checkpoint {
  std::string kind;
  nlohmann::json meta;
  std::map<std::string, std::vector<float>> arrays;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw SchemaViolation("not a checkpoint file: " + path.string());
  std::uint32_t version = 0, head_len = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&head_len), sizeof head_len);
  if (!in || version != 1) throw SchemaViolation("unsupported checkpoint version");
  std::string head(head_len, '\0');
  in.read(head.data(), head_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.kind = header.at("kind").get<std::string>();
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("arrays")) {
    const auto name = entry.at("name").get<std::string>();
    const auto size = entry.at("size").get<Index>();
    std::vector<float> data(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw SchemaViolation("truncated checkpoint payload: " + path.string());
    ckpt.arrays.emplace(name, std::move(data));
  }
  return ckpt;
}

template <typename S>
inline void apply_checkpoint(const Checkpoint& ckpt, const ParamList<S>& params) {
  for (const auto& p : params) {
    const auto it = ckpt.arrays.find(p.name);
    if (it == ckpt.arrays.end())
      throw SchemaViolation("checkpoint is missing array '" + p.name + "'");
    if (static_cast<Index>(it->second.size()) != p.size)
      throw ShapeMismatch("checkpoint array '" + p.name + "' has size " +
                          std::to_string(it->second.size()) + ", expected " +
                          std::to_string(p.size));
    for (Index i = 0; i < p.size; ++i) p.value[i] = static_cast<S>(it->second[static_cast<std::size_t>(i)]);
  }
}

}  // namespace ssbd::nn
