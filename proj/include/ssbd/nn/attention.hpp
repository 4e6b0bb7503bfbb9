#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ssbd/nn/layers.hpp"

namespace ssbd::nn {

template <typename S>
inline void softmax_rows_inplace(RowMat<S>& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    const S mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// Multi-head self-attention over a (T, D) sequence, with the combined
// query/key/value projection torch uses.
template <typename S>
class MultiheadSelfAttention {
 public:
  MultiheadSelfAttention() = default;
  MultiheadSelfAttention(Index dim, Index heads, Rng& rng)
      : dim_(dim), heads_(heads), w_in(3 * dim, dim), b_in(3 * dim), w_out(dim, dim), b_out(dim),
        gw_in(3 * dim, dim), gb_in(3 * dim), gw_out(dim, dim), gb_out(dim) {
    if (dim % heads != 0) throw std::invalid_argument("attention dim must divide into heads");
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    init_uniform(w_in, bound, rng);
    init_uniform(w_out, bound, rng);
    b_in.setZero();
    b_out.setZero();
    zero_grad();
  }

  Index dim() const { return dim_; }
  Index heads() const { return heads_; }

  struct Cache {
    RowMat<S> x, q, k, v;
    std::vector<RowMat<S>> attn;  // per head, (T, T)
    RowMat<S> merged;             // (T, D) pre output projection
  };

  RowMat<S> forward(const RowMat<S>& x, Cache* cache = nullptr) const {
    if (x.cols() != dim_) throw ShapeMismatch("attention input width mismatch");
    const Index t_len = x.rows(), dk = dim_ / heads_;
    const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dk)));
    RowMat<S> qkv = (x * w_in.transpose()).rowwise() + b_in.transpose();
    const RowMat<S> q = qkv.leftCols(dim_);
    const RowMat<S> k = qkv.middleCols(dim_, dim_);
    const RowMat<S> v = qkv.rightCols(dim_);
    RowMat<S> merged(t_len, dim_);
    std::vector<RowMat<S>> attn(static_cast<std::size_t>(heads_));
    for (Index h = 0; h < heads_; ++h) {
      RowMat<S> scores = q.middleCols(h * dk, dk) * k.middleCols(h * dk, dk).transpose() * scale;
      softmax_rows_inplace(scores);
      merged.middleCols(h * dk, dk).noalias() = scores * v.middleCols(h * dk, dk);
      attn[static_cast<std::size_t>(h)] = std::move(scores);
    }
    RowMat<S> y = (merged * w_out.transpose()).rowwise() + b_out.transpose();
    if (cache != nullptr) {
      cache->x = x;
      cache->q = q;
      cache->k = k;
      cache->v = v;
      cache->attn = std::move(attn);
      cache->merged = std::move(merged);
    }
    return y;
  }

  RowMat<S> backward(const Cache& cache, const RowMat<S>& dy) {
    const Index t_len = cache.x.rows(), dk = dim_ / heads_;
    const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dk)));
    gw_out.noalias() += dy.transpose() * cache.merged;
    gb_out.noalias() += dy.colwise().sum().transpose();
    const RowMat<S> dmerged = dy * w_out;
    RowMat<S> dqkv = RowMat<S>::Zero(t_len, 3 * dim_);
    for (Index h = 0; h < heads_; ++h) {
      const auto& a = cache.attn[static_cast<std::size_t>(h)];
      const auto dm = dmerged.middleCols(h * dk, dk);
      const auto qh = cache.q.middleCols(h * dk, dk);
      const auto kh = cache.k.middleCols(h * dk, dk);
      const auto vh = cache.v.middleCols(h * dk, dk);
      dqkv.middleCols(2 * dim_ + h * dk, dk).noalias() = a.transpose() * dm;
      RowMat<S> da = dm * vh.transpose();  // (T, T)
      // Row-wise softmax jacobian.
      const ColVec<S> row_dot = (da.array() * a.array()).rowwise().sum();
      RowMat<S> ds = (a.array() * (da.colwise() - row_dot).array()).matrix() * scale;
      dqkv.middleCols(h * dk, dk).noalias() = ds * kh;
      dqkv.middleCols(dim_ + h * dk, dk).noalias() = ds.transpose() * qh;
    }
    gw_in.noalias() += dqkv.transpose() * cache.x;
    gb_in.noalias() += dqkv.colwise().sum().transpose();
    return dqkv * w_in;
  }

  void zero_grad() {
    gw_in.setZero();
    gb_in.setZero();
    gw_out.setZero();
    gb_out.setZero();
  }

  void params(const std::string& prefix, ParamList<S>& list) {
    add_param(list, prefix + ".w_in", w_in, gw_in);
    add_param(list, prefix + ".b_in", b_in, gb_in);
    add_param(list, prefix + ".w_out", w_out, gw_out);
    add_param(list, prefix + ".b_out", b_out, gb_out);
  }

  Index param_count() const {
    return static_cast<Index>(w_in.size() + b_in.size() + w_out.size() + b_out.size());
  }

  Index dim_ = 0, heads_ = 0;
  RowMat<S> w_in;
  ColVec<S> b_in;
  RowMat<S> w_out;
  ColVec<S> b_out;
  RowMat<S> gw_in;
  ColVec<S> gb_in;
  RowMat<S> gw_out;
  ColVec<S> gb_out;
};

}  // namespace ssbd::nn
