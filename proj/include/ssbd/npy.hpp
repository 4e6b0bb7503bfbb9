#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ssbd/error.hpp"
#include "ssbd/tensor.hpp"

// Minimal NPY v1.0 reader/writer for little-endian float32/float64 arrays in
// C order. This is the on-disk container for chunks and keypoint tracks.

namespace ssbd::npy {

namespace detail {

template <typename T>
const char* dtype_descr();
template <>
inline const char* dtype_descr<float>() { return "<f4"; }
template <>
inline const char* dtype_descr<double>() { return "<f8"; }

inline std::string shape_tuple(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << shape[i] << ", ";
  if (shape.size() > 1) {
    std::string s = os.str();
    s.resize(s.size() - 2);  // drop trailing ", " but keep single-elem comma
    return s + ")";
  }
  return os.str() + ")";
}

}  // namespace detail

template <typename Scalar>
void save(const std::filesystem::path& path, const Tensor<Scalar>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  std::string header = std::string("{'descr': '") + detail::dtype_descr<Scalar>() +
                       "', 'fortran_order': False, 'shape': " +
                       detail::shape_tuple(t.shape()) + ", }";
  const std::size_t unpadded = 10 + header.size() + 1;
  const std::size_t pad = (64 - unpadded % 64) % 64;
  header += std::string(pad, ' ');
  header += '\n';
  const std::uint16_t hlen = static_cast<std::uint16_t>(header.size());
  out.write("\x93NUMPY\x01\x00", 8);
  out.write(reinterpret_cast<const char*>(&hlen), 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(t.size())));
  if (!out) throw IoError("short write: " + path.string());
}

template <typename Scalar>
Tensor<Scalar> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::string(magic, 6) != "\x93NUMPY") throw IoError("not an NPY file: " + path.string());
  std::uint16_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 2);
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw IoError("truncated NPY header: " + path.string());

  if (header.find(std::string("'") + detail::dtype_descr<Scalar>() + "'") == std::string::npos)
    throw IoError("NPY dtype mismatch in " + path.string());
  if (header.find("'fortran_order': False") == std::string::npos)
    throw IoError("fortran-order NPY not supported: " + path.string());

  const auto lparen = header.find('(');
  const auto rparen = header.find(')', lparen);
  if (lparen == std::string::npos || rparen == std::string::npos)
    throw IoError("bad NPY shape in " + path.string());
  std::vector<Index> shape;
  std::string inside = header.substr(lparen + 1, rparen - lparen - 1);
  std::istringstream ss(inside);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(" \t") == std::string::npos) continue;
    shape.push_back(static_cast<Index>(std::stoll(tok)));
  }
  Tensor<Scalar> t(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(t.size())));
  if (!in) throw IoError("truncated NPY payload: " + path.string());
  return t;
}

}  // namespace ssbd::npy
