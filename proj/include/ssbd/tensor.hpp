#pragma once

#include <Eigen/Core>

#include <cstring>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "ssbd/error.hpp"

namespace ssbd {

using Index = Eigen::Index;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Dense N-d array in row-major (C) order backed by a flat buffer.
// All heavy math happens through the Eigen map views.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> dims) { resize(std::move(dims)); }
  Tensor(std::initializer_list<Index> dims) { resize(std::vector<Index>(dims)); }

  void resize(std::vector<Index> dims) {
    shape_ = std::move(dims);
    Index n = 1;
    for (Index d : shape_) n *= d;
    data_.assign(static_cast<std::size_t>(n), Scalar(0));
  }

  const std::vector<Index>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const Scalar& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  template <typename... Ix>
  Scalar& operator()(Ix... ix) {
    return data_[offset(ix...)];
  }
  template <typename... Ix>
  const Scalar& operator()(Ix... ix) const {
    return data_[offset(ix...)];
  }

  void set_zero() { std::memset(data_.data(), 0, data_.size() * sizeof(Scalar)); }
  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  // Whole-buffer views.
  Eigen::Map<ColVec<Scalar>> flat() { return {data(), size()}; }
  Eigen::Map<const ColVec<Scalar>> flat() const { return {data(), size()}; }

  // 2-d view with explicit extent; must tile the buffer exactly.
  Eigen::Map<RowMat<Scalar>> mat(Index rows, Index cols) {
    check_extent(rows * cols);
    return {data(), rows, cols};
  }
  Eigen::Map<const RowMat<Scalar>> mat(Index rows, Index cols) const {
    check_extent(rows * cols);
    return {data(), rows, cols};
  }

  // 2-d view of a contiguous sub-block starting at flat offset `at`.
  Eigen::Map<RowMat<Scalar>> block_mat(Index at, Index rows, Index cols) {
    return {data() + at, rows, cols};
  }
  Eigen::Map<const RowMat<Scalar>> block_mat(Index at, Index rows, Index cols) const {
    return {data() + at, rows, cols};
  }

  Tensor reshaped(std::vector<Index> dims) const {
    Tensor out;
    out.shape_ = std::move(dims);
    out.data_ = data_;
    Index n = 1;
    for (Index d : out.shape_) n *= d;
    if (n != size()) throw ShapeMismatch("reshape changes element count");
    return out;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  template <typename... Ix>
  std::size_t offset(Ix... ix) const {
    const Index idx[] = {static_cast<Index>(ix)...};
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizeof...(Ix); ++k) {
      off = off * static_cast<std::size_t>(shape_[k]) + static_cast<std::size_t>(idx[k]);
    }
    return off;
  }

  void check_extent(Index n) const {
    if (n != size()) throw ShapeMismatch("matrix view does not cover tensor buffer");
  }

  std::vector<Index> shape_;
  std::vector<Scalar> data_;
};

template <typename To, typename From>
Tensor<To> cast_tensor(const Tensor<From>& in) {
  Tensor<To> out(in.shape());
  for (Index i = 0; i < in.size(); ++i) out[i] = static_cast<To>(in[i]);
  return out;
}

}  // namespace ssbd
