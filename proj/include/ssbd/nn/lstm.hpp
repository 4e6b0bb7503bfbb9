#pragma once

#include <cmath>
#include <string>

#include "ssbd/nn/layers.hpp"

namespace ssbd::nn {

template <typename S>
inline S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

// Single-direction LSTM with the torch parameter layout: two weight matrices
// (input-hidden, hidden-hidden), two bias vectors, gates ordered i, f, g, o.
template <typename S>
class Lstm {
 public:
  Lstm() = default;
  Lstm(Index input, Index hidden, Rng& rng)
      : input_(input), hidden_(hidden), w_ih(4 * hidden, input), w_hh(4 * hidden, hidden),
        b_ih(4 * hidden), b_hh(4 * hidden), gw_ih(4 * hidden, input), gw_hh(4 * hidden, hidden),
        gb_ih(4 * hidden), gb_hh(4 * hidden) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    init_uniform(w_ih, bound, rng);
    init_uniform(w_hh, bound, rng);
    init_uniform(b_ih, bound, rng);
    init_uniform(b_hh, bound, rng);
    zero_grad();
  }

  Index input_size() const { return input_; }
  Index hidden_size() const { return hidden_; }

  struct Cache {
    RowMat<S> x;       // (T, I)
    RowMat<S> gates;   // (T, 4H) post-activation
    RowMat<S> h;       // (T + 1, H), row 0 is the initial state
    RowMat<S> c;       // (T + 1, H)
    RowMat<S> tanh_c;  // (T, H)
  };

  // x: (T, I) -> outputs (T, H). Initial state is zero.
  RowMat<S> forward(const RowMat<S>& x, Cache* cache = nullptr) const {
    if (x.cols() != input_) throw ShapeMismatch("lstm input width mismatch");
    const Index t_len = x.rows(), h = hidden_;
    RowMat<S> out(t_len, h);
    ColVec<S> hv = ColVec<S>::Zero(h), cv = ColVec<S>::Zero(h);
    if (cache != nullptr) {
      cache->x = x;
      cache->gates.resize(t_len, 4 * h);
      cache->h.resize(t_len + 1, h);
      cache->c.resize(t_len + 1, h);
      cache->tanh_c.resize(t_len, h);
      cache->h.row(0).setZero();
      cache->c.row(0).setZero();
    }
    ColVec<S> a(4 * h);
    for (Index t = 0; t < t_len; ++t) {
      a.noalias() = w_ih * x.row(t).transpose() + w_hh * hv;
      a += b_ih + b_hh;
      for (Index j = 0; j < h; ++j) {
        const S i_g = sigmoid(a(j));
        const S f_g = sigmoid(a(h + j));
        const S g_g = std::tanh(a(2 * h + j));
        const S o_g = sigmoid(a(3 * h + j));
        cv(j) = f_g * cv(j) + i_g * g_g;
        const S tc = std::tanh(cv(j));
        hv(j) = o_g * tc;
        if (cache != nullptr) {
          cache->gates(t, j) = i_g;
          cache->gates(t, h + j) = f_g;
          cache->gates(t, 2 * h + j) = g_g;
          cache->gates(t, 3 * h + j) = o_g;
          cache->tanh_c(t, j) = tc;
        }
      }
      out.row(t) = hv.transpose();
      if (cache != nullptr) {
        cache->h.row(t + 1) = hv.transpose();
        cache->c.row(t + 1) = cv.transpose();
      }
    }
    return out;
  }

  // dy: (T, H) per-step output gradients; dh_final/dc_final add to the last
  // step. Returns dx (T, I).
  RowMat<S> backward(const Cache& cache, const RowMat<S>& dy, const ColVec<S>* dh_final = nullptr,
                     const ColVec<S>* dc_final = nullptr) {
    const Index t_len = cache.x.rows(), h = hidden_;
    RowMat<S> da_all(t_len, 4 * h);
    ColVec<S> dh_next = dh_final != nullptr ? *dh_final : ColVec<S>::Zero(h);
    ColVec<S> dc_next = dc_final != nullptr ? *dc_final : ColVec<S>::Zero(h);
    ColVec<S> da(4 * h);
    for (Index t = t_len - 1; t >= 0; --t) {
      for (Index j = 0; j < h; ++j) {
        const S i_g = cache.gates(t, j);
        const S f_g = cache.gates(t, h + j);
        const S g_g = cache.gates(t, 2 * h + j);
        const S o_g = cache.gates(t, 3 * h + j);
        const S tc = cache.tanh_c(t, j);
        const S dh = dy(t, j) + dh_next(j);
        const S dc = dh * o_g * (S(1) - tc * tc) + dc_next(j);
        da(j) = dc * g_g * i_g * (S(1) - i_g);
        da(h + j) = dc * cache.c(t, j) * f_g * (S(1) - f_g);
        da(2 * h + j) = dc * i_g * (S(1) - g_g * g_g);
        da(3 * h + j) = dh * tc * o_g * (S(1) - o_g);
        dc_next(j) = dc * f_g;
      }
      da_all.row(t) = da.transpose();
      dh_next.noalias() = w_hh.transpose() * da;
    }
    gw_ih.noalias() += da_all.transpose() * cache.x;
    gw_hh.noalias() += da_all.transpose() * cache.h.topRows(t_len);
    const ColVec<S> db = da_all.colwise().sum().transpose();
    gb_ih += db;
    gb_hh += db;
    return da_all * w_ih;
  }

  void zero_grad() {
    gw_ih.setZero();
    gw_hh.setZero();
    gb_ih.setZero();
    gb_hh.setZero();
  }

  void params(const std::string& prefix, ParamList<S>& list) {
    add_param(list, prefix + ".w_ih", w_ih, gw_ih);
    add_param(list, prefix + ".w_hh", w_hh, gw_hh);
    add_param(list, prefix + ".b_ih", b_ih, gb_ih);
    add_param(list, prefix + ".b_hh", b_hh, gb_hh);
  }

  Index param_count() const {
    return static_cast<Index>(w_ih.size() + w_hh.size() + b_ih.size() + b_hh.size());
  }

  Index input_ = 0, hidden_ = 0;
  RowMat<S> w_ih, w_hh;
  ColVec<S> b_ih, b_hh;
  RowMat<S> gw_ih, gw_hh;
  ColVec<S> gb_ih, gb_hh;
};

// Bidirectional wrapper: runs one cell forward and one over the reversed
// sequence, concatenating per-step outputs time-aligned to the input.
template <typename S>
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(Index input, Index hidden, Rng& rng) : fwd(input, hidden, rng), bwd(input, hidden, rng) {}

  Index hidden_size() const { return fwd.hidden_size(); }
  Index output_size() const { return 2 * fwd.hidden_size(); }

  struct Cache {
    typename Lstm<S>::Cache fwd;
    typename Lstm<S>::Cache bwd;
    Index t_len = 0;
  };

  // x: (T, I) -> (T, 2H). Columns [0, H) are the forward stream.
  RowMat<S> forward(const RowMat<S>& x, Cache* cache = nullptr) const {
    const Index t_len = x.rows(), h = fwd.hidden_size();
    if (cache != nullptr) cache->t_len = t_len;
    const RowMat<S> out_f = fwd.forward(x, cache != nullptr ? &cache->fwd : nullptr);
    const RowMat<S> x_rev = x.colwise().reverse();
    const RowMat<S> out_b = bwd.forward(x_rev, cache != nullptr ? &cache->bwd : nullptr);
    RowMat<S> out(t_len, 2 * h);
    out.leftCols(h) = out_f;
    out.rightCols(h) = out_b.colwise().reverse();
    return out;
  }

  // Final states in torch order: forward direction's last step, then the
  // backward direction's (which corresponds to input position 0).
  ColVec<S> final_state(const RowMat<S>& outputs) const {
    const Index h = fwd.hidden_size();
    ColVec<S> s(2 * h);
    s.head(h) = outputs.row(outputs.rows() - 1).head(h).transpose();
    s.tail(h) = outputs.row(0).tail(h).transpose();
    return s;
  }

  RowMat<S> backward(const Cache& cache, const RowMat<S>& dy) {
    const Index h = fwd.hidden_size();
    const RowMat<S> dy_f = dy.leftCols(h);
    const RowMat<S> dy_b = dy.rightCols(h).colwise().reverse();
    RowMat<S> dx = fwd.backward(cache.fwd, dy_f);
    dx += bwd.backward(cache.bwd, dy_b).colwise().reverse();
    return dx;
  }

  void zero_grad() {
    fwd.zero_grad();
    bwd.zero_grad();
  }

  void params(const std::string& prefix, ParamList<S>& list) {
    fwd.params(prefix + ".fwd", list);
    bwd.params(prefix + ".bwd", list);
  }

  Index param_count() const { return fwd.param_count() + bwd.param_count(); }

  Lstm<S> fwd, bwd;
};

}  // namespace ssbd::nn
