#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ssbd/error.hpp"
#include "ssbd/rng.hpp"
#include "ssbd/tensor.hpp"

// Minimal layer zoo with explicit forward caches. Inference-style forward
// overloads are const and allocate nothing shared; training overloads fill a
// per-call Cache that backward consumes. Gradients accumulate into the
// layer-owned g* buffers until zero_grad().

namespace ssbd::nn {

template <typename S>
struct ParamRef {
  std::string name;
  S* value = nullptr;
  S* grad = nullptr;
  Index size = 0;
};

template <typename S>
using ParamList = std::vector<ParamRef<S>>;

template <typename S>
inline Index param_count(const ParamList<S>& params) {
  Index n = 0;
  for (const auto& p : params) n += p.size;
  return n;
}

template <typename S, typename Mat>
inline void add_param(ParamList<S>& list, const std::string& name, Mat& value, Mat& grad) {
  list.push_back({name, value.data(), grad.data(), static_cast<Index>(value.size())});
}

// Kaiming-style fan-in init for layers feeding ReLUs; also reasonable for the
// recurrent blocks here.
template <typename Mat>
inline void init_he(Mat& w, Index fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (Index i = 0; i < static_cast<Index>(w.size()); ++i)
    w.data()[i] = static_cast<typename Mat::Scalar>(rng.normal() * std_dev);
}

template <typename Mat>
inline void init_uniform(Mat& w, double bound, Rng& rng) {
  for (Index i = 0; i < static_cast<Index>(w.size()); ++i)
    w.data()[i] = static_cast<typename Mat::Scalar>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------

template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out, Rng& rng) : w(out, in), b(out), gw(out, in), gb(out) {
    init_he(w, in, rng);
    b.setZero();
    zero_grad();
  }

  Index in_features() const { return w.cols(); }
  Index out_features() const { return w.rows(); }

  struct Cache {
    RowMat<S> x;
  };

  // x: (n, in) -> (n, out)
  RowMat<S> forward(const RowMat<S>& x) const {
    if (x.cols() != w.cols()) throw ShapeMismatch("linear input width mismatch");
    return (x * w.transpose()).rowwise() + b.transpose();
  }

  RowMat<S> forward(const RowMat<S>& x, Cache& cache) const {
    cache.x = x;
    return forward(x);
  }

  RowMat<S> backward(const Cache& cache, const RowMat<S>& dy) {
    gw.noalias() += dy.transpose() * cache.x;
    gb.noalias() += dy.colwise().sum().transpose();
    return dy * w;
  }

  void zero_grad() {
    gw.setZero();
    gb.setZero();
  }

  void params(const std::string& prefix, ParamList<S>& list) {
    add_param(list, prefix + ".w", w, gw);
    add_param(list, prefix + ".b", b, gb);
  }

  Index param_count() const { return static_cast<Index>(w.size() + b.size()); }

  RowMat<S> w;
  ColVec<S> b;
  RowMat<S> gw;
  ColVec<S> gb;
};

// ---------------------------------------------------------------------------
// im2col helpers for square-kernel 2D convolution over (C, H, W) images.

inline Index conv_out_extent(Index in, Index kernel, Index stride, Index pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename S>
inline void im2col(const S* img, Index channels, Index h, Index w, Index kernel, Index stride,
                   Index pad, RowMat<S>& col) {
  const Index oh = conv_out_extent(h, kernel, stride, pad);
  const Index ow = conv_out_extent(w, kernel, stride, pad);
  col.resize(channels * kernel * kernel, oh * ow);
  for (Index c = 0; c < channels; ++c) {
    const S* plane = img + c * h * w;
    for (Index kr = 0; kr < kernel; ++kr) {
      for (Index kc = 0; kc < kernel; ++kc) {
        const Index row = (c * kernel + kr) * kernel + kc;
        for (Index orr = 0; orr < oh; ++orr) {
          const Index ir = orr * stride - pad + kr;
          S* dst = col.data() + row * col.cols() + orr * ow;
          if (ir < 0 || ir >= h) {
            std::fill(dst, dst + ow, S(0));
            continue;
          }
          for (Index oc = 0; oc < ow; ++oc) {
            const Index ic = oc * stride - pad + kc;
            dst[oc] = (ic < 0 || ic >= w) ? S(0) : plane[ir * w + ic];
          }
        }
      }
    }
  }
}

template <typename S>
inline void col2im_add(const RowMat<S>& col, Index channels, Index h, Index w, Index kernel,
                       Index stride, Index pad, S* img) {
  const Index oh = conv_out_extent(h, kernel, stride, pad);
  const Index ow = conv_out_extent(w, kernel, stride, pad);
  for (Index c = 0; c < channels; ++c) {
    S* plane = img + c * h * w;
    for (Index kr = 0; kr < kernel; ++kr) {
      for (Index kc = 0; kc < kernel; ++kc) {
        const Index row = (c * kernel + kr) * kernel + kc;
        for (Index orr = 0; orr < oh; ++orr) {
          const Index ir = orr * stride - pad + kr;
          if (ir < 0 || ir >= h) continue;
          const S* src = col.data() + row * col.cols() + orr * ow;
          for (Index oc = 0; oc < ow; ++oc) {
            const Index ic = oc * stride - pad + kc;
            if (ic >= 0 && ic < w) plane[ir * w + ic] += src[oc];
          }
        }
      }
    }
  }
}

// Spatial convolution applied independently to every (C, H, W) block of the
// input, so a (B, T, C, H, W) batch is just B*T frames.
template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in_c, Index out_c, Index kernel, Index stride, Index pad, Rng& rng)
      : in_c_(in_c), kernel_(kernel), stride_(stride), pad_(pad),
        w(out_c, in_c * kernel * kernel), b(out_c), gw(out_c, in_c * kernel * kernel), gb(out_c) {
    init_he(w, in_c * kernel * kernel, rng);
    b.setZero();
    zero_grad();
  }

  Index in_channels() const { return in_c_; }
  Index out_channels() const { return w.rows(); }
  Index kernel() const { return kernel_; }
  Index stride() const { return stride_; }
  Index pad() const { return pad_; }

  std::vector<Index> out_shape(const std::vector<Index>& in_shape) const {
    std::vector<Index> s = in_shape;
    const auto d = s.size();
    s[d - 3] = out_channels();
    s[d - 2] = conv_out_extent(in_shape[d - 2], kernel_, stride_, pad_);
    s[d - 1] = conv_out_extent(in_shape[d - 1], kernel_, stride_, pad_);
    return s;
  }

  struct Cache {
    Tensor<S> x;
  };

  Tensor<S> forward(const Tensor<S>& x) const {
    const auto& sh = x.shape();
    if (sh.size() < 3 || sh[sh.size() - 3] != in_c_)
      throw ShapeMismatch("conv2d input channel mismatch");
    const Index h = sh[sh.size() - 2], w_in = sh[sh.size() - 1];
    const Index oh = conv_out_extent(h, kernel_, stride_, pad_);
    const Index ow = conv_out_extent(w_in, kernel_, stride_, pad_);
    std::vector<Index> osh = sh;
    osh[sh.size() - 3] = out_channels();
    osh[sh.size() - 2] = oh;
    osh[sh.size() - 1] = ow;
    Tensor<S> y(osh);
    const Index frame_in = in_c_ * h * w_in;
    const Index frame_out = out_channels() * oh * ow;
    const Index n_frames = x.size() / frame_in;
    RowMat<S> col;
    for (Index f = 0; f < n_frames; ++f) {
      im2col(x.data() + f * frame_in, in_c_, h, w_in, kernel_, stride_, pad_, col);
      Eigen::Map<RowMat<S>> out(y.data() + f * frame_out, out_channels(), oh * ow);
      out.noalias() = w * col;
      out.colwise() += b;
    }
    return y;
  }

  Tensor<S> forward(const Tensor<S>& x, Cache& cache) const {
    cache.x = x;
    return forward(x);
  }

  Tensor<S> backward(const Cache& cache, const Tensor<S>& dy) {
    const auto& sh = cache.x.shape();
    const Index h = sh[sh.size() - 2], w_in = sh[sh.size() - 1];
    const Index oh = conv_out_extent(h, kernel_, stride_, pad_);
    const Index ow = conv_out_extent(w_in, kernel_, stride_, pad_);
    const Index frame_in = in_c_ * h * w_in;
    const Index frame_out = out_channels() * oh * ow;
    const Index n_frames = cache.x.size() / frame_in;
    Tensor<S> dx(sh);
    dx.set_zero();
    RowMat<S> col, dcol;
    for (Index f = 0; f < n_frames; ++f) {
      im2col(cache.x.data() + f * frame_in, in_c_, h, w_in, kernel_, stride_, pad_, col);
      Eigen::Map<const RowMat<S>> g(dy.data() + f * frame_out, out_channels(), oh * ow);
      gw.noalias() += g * col.transpose();
      gb.noalias() += g.rowwise().sum();
      dcol.noalias() = w.transpose() * g;
      col2im_add(dcol, in_c_, h, w_in, kernel_, stride_, pad_, dx.data() + f * frame_in);
    }
    return dx;
  }

  void zero_grad() {
    gw.setZero();
    gb.setZero();
  }

  void params(const std::string& prefix, ParamList<S>& list) {
    add_param(list, prefix + ".w", w, gw);
    add_param(list, prefix + ".b", b, gb);
  }

  Index param_count() const { return static_cast<Index>(w.size() + b.size()); }

  Index in_c_ = 0, kernel_ = 0, stride_ = 1, pad_ = 0;
  RowMat<S> w;  // (out_c, in_c * k * k)
  ColVec<S> b;
  RowMat<S> gw;
  ColVec<S> gb;
};

// Convolution along the frame axis of a (B, T, C, H, W) tensor; every channel
// of every pixel is filtered across time. This is the "+1D" half of a
// factorized (2+1)D block.
template <typename S>
class TemporalConv {
 public:
  TemporalConv() = default;
  TemporalConv(Index in_c, Index out_c, Index kernel, Index stride, Index pad, Rng& rng)
      : in_c_(in_c), kernel_(kernel), stride_(stride), pad_(pad), w(out_c, in_c * kernel),
        b(out_c), gw(out_c, in_c * kernel), gb(out_c) {
    init_he(w, in_c * kernel, rng);
    b.setZero();
    zero_grad();
  }

  Index out_channels() const { return w.rows(); }
  Index out_frames(Index t) const { return (t + 2 * pad_ - kernel_) / stride_ + 1; }

  struct Cache {
    Tensor<S> x;
  };

  // x: (B, T, C, H, W) -> (B, T', C', H, W)
  Tensor<S> forward(const Tensor<S>& x) const {
    const auto& sh = x.shape();
    if (sh.size() != 5 || sh[2] != in_c_) throw ShapeMismatch("temporal conv input mismatch");
    const Index batch = sh[0], t_in = sh[1], hw = sh[3] * sh[4];
    const Index t_out = out_frames(t_in);
    Tensor<S> y({batch, t_out, out_channels(), sh[3], sh[4]});
    RowMat<S> scratch(in_c_ * kernel_, hw);
    const Index in_seq = t_in * in_c_ * hw;
    const Index out_seq = t_out * out_channels() * hw;
    for (Index bi = 0; bi < batch; ++bi) {
      const S* seq = x.data() + bi * in_seq;
      for (Index to = 0; to < t_out; ++to) {
        // scratch rows follow the weight layout: row (c * kt + j).
        for (Index j = 0; j < kernel_; ++j) {
          const Index ti = to * stride_ - pad_ + j;
          for (Index c = 0; c < in_c_; ++c) {
            S* dst = scratch.data() + (c * kernel_ + j) * hw;
            if (ti < 0 || ti >= t_in) {
              std::fill(dst, dst + hw, S(0));
            } else {
              const S* src = seq + (ti * in_c_ + c) * hw;
              std::copy(src, src + hw, dst);
            }
          }
        }
        Eigen::Map<RowMat<S>> out(y.data() + bi * out_seq + to * out_channels() * hw,
                                  out_channels(), hw);
        out.noalias() = w * scratch;
        out.colwise() += b;
      }
    }
    return y;
  }

  Tensor<S> forward(const Tensor<S>& x, Cache& cache) const {
    cache.x = x;
    return forward(x);
  }

  Tensor<S> backward(const Cache& cache, const Tensor<S>& dy) {
    const auto& sh = cache.x.shape();
    const Index batch = sh[0], t_in = sh[1], hw = sh[3] * sh[4];
    const Index t_out = out_frames(t_in);
    Tensor<S> dx(sh);
    dx.set_zero();
    const Index in_seq = t_in * in_c_ * hw;
    const Index out_seq = t_out * out_channels() * hw;
    RowMat<S> scratch(in_c_ * kernel_, hw), dscratch(in_c_ * kernel_, hw);
    for (Index bi = 0; bi < batch; ++bi) {
      const S* seq = cache.x.data() + bi * in_seq;
      S* dseq = dx.data() + bi * in_seq;
      for (Index to = 0; to < t_out; ++to) {
        for (Index j = 0; j < kernel_; ++j) {
          const Index ti = to * stride_ - pad_ + j;
          for (Index c = 0; c < in_c_; ++c) {
            S* dst = scratch.data() + (c * kernel_ + j) * hw;
            if (ti < 0 || ti >= t_in) {
              std::fill(dst, dst + hw, S(0));
            } else {
              const S* src = seq + (ti * in_c_ + c) * hw;
              std::copy(src, src + hw, dst);
            }
          }
        }
        Eigen::Map<const RowMat<S>> g(dy.data() + bi * out_seq + to * out_channels() * hw,
                                      out_channels(), hw);
        gb.noalias() += g.rowwise().sum();
        gw.noalias() += g * scratch.transpose();
        dscratch.noalias() = w.transpose() * g;
        for (Index j = 0; j < kernel_; ++j) {
          const Index ti = to * stride_ - pad_ + j;
          if (ti < 0 || ti >= t_in) continue;
          for (Index c = 0; c < in_c_; ++c) {
            const S* src = dscratch.data() + (c * kernel_ + j) * hw;
            S* dst = dseq + (ti * in_c_ + c) * hw;
            for (Index i = 0; i < hw; ++i) dst[i] += src[i];
          }
        }
      }
    }
    return dx;
  }

  void zero_grad() {
    gw.setZero();
    gb.setZero();
  }

  void params(const std::string& prefix, ParamList<S>& list) {
    add_param(list, prefix + ".w", w, gw);
    add_param(list, prefix + ".b", b, gb);
  }

  Index param_count() const { return static_cast<Index>(w.size() + b.size()); }

  Index in_c_ = 0, kernel_ = 0, stride_ = 1, pad_ = 0;
  RowMat<S> w;  // (out_c, in_c * kt)
  ColVec<S> b;
  RowMat<S> gw;
  ColVec<S> gb;
};

// Per-channel batch norm over every (C, H, W) block; for video tensors the
// statistics pool batch, time and space, matching volumetric batch norm.
template <typename S>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(Index channels, double momentum = 0.1, double eps = 1e-5)
      : momentum_(momentum), eps_(eps), gamma(channels), beta(channels), running_mean(channels),
        running_var(channels), ggamma(channels), gbeta(channels) {
    gamma.setOnes();
    beta.setZero();
    running_mean.setZero();
    running_var.setOnes();
    zero_grad();
  }

  Index channels() const { return gamma.size(); }

  struct Cache {
    Tensor<S> xhat;
    ColVec<S> inv_std;
    Index reduce_n = 0;
  };

  Tensor<S> forward(const Tensor<S>& x) const {  // inference: running stats
    Tensor<S> y(x.shape());
    apply(x, y, running_mean,
          (running_var.array() + static_cast<S>(eps_)).rsqrt().matrix());
    return y;
  }

  Tensor<S> forward_train(const Tensor<S>& x, Cache& cache) {
    const Index c = channels();
    const auto& sh = x.shape();
    if (sh[sh.size() - 3] != c) throw ShapeMismatch("batch norm channel mismatch");
    const Index hw = sh[sh.size() - 2] * sh[sh.size() - 1];
    const Index n_frames = x.size() / (c * hw);
    const Index n = n_frames * hw;
    ColVec<S> mean = ColVec<S>::Zero(c), var = ColVec<S>::Zero(c);
    for (Index f = 0; f < n_frames; ++f) {
      Eigen::Map<const RowMat<S>> frame(x.data() + f * c * hw, c, hw);
      mean += frame.rowwise().sum();
    }
    mean /= static_cast<S>(n);
    for (Index f = 0; f < n_frames; ++f) {
      Eigen::Map<const RowMat<S>> frame(x.data() + f * c * hw, c, hw);
      var += (frame.colwise() - mean).array().square().matrix().rowwise().sum();
    }
    var /= static_cast<S>(n);
    cache.inv_std = (var.array() + static_cast<S>(eps_)).rsqrt();
    cache.reduce_n = n;
    cache.xhat.resize(x.shape());
    for (Index f = 0; f < n_frames; ++f) {
      Eigen::Map<const RowMat<S>> frame(x.data() + f * c * hw, c, hw);
      Eigen::Map<RowMat<S>> xh(cache.xhat.data() + f * c * hw, c, hw);
      xh = ((frame.colwise() - mean).array().colwise() * cache.inv_std.array()).matrix();
    }
    running_mean = static_cast<S>(1 - momentum_) * running_mean + static_cast<S>(momentum_) * mean;
    // Running variance uses the unbiased estimate, as torch does.
    const S bessel = n > 1 ? static_cast<S>(n) / static_cast<S>(n - 1) : S(1);
    running_var =
        static_cast<S>(1 - momentum_) * running_var + static_cast<S>(momentum_) * bessel * var;
    Tensor<S> y(x.shape());
    for (Index f = 0; f < n_frames; ++f) {
      Eigen::Map<const RowMat<S>> xh(cache.xhat.data() + f * c * hw, c, hw);
      Eigen::Map<RowMat<S>> out(y.data() + f * c * hw, c, hw);
      out = ((xh.array().colwise() * gamma.array()).colwise() + beta.array()).matrix();
    }
    return y;
  }

  Tensor<S> backward(const Cache& cache, const Tensor<S>& dy) {
    const Index c = channels();
    const auto& sh = dy.shape();
    const Index hw = sh[sh.size() - 2] * sh[sh.size() - 1];
    const Index n_frames = dy.size() / (c * hw);
    const S n = static_cast<S>(cache.reduce_n);
    ColVec<S> sum_dy = ColVec<S>::Zero(c), sum_dy_xhat = ColVec<S>::Zero(c);
    for (Index f = 0; f < n_frames; ++f) {
      Eigen::Map<const RowMat<S>> g(dy.data() + f * c * hw, c, hw);
      Eigen::Map<const RowMat<S>> xh(cache.xhat.data() + f * c * hw, c, hw);
      sum_dy += g.rowwise().sum();
      sum_dy_xhat += (g.array() * xh.array()).matrix().rowwise().sum();
    }
    gbeta += sum_dy;
    ggamma += sum_dy_xhat;
    Tensor<S> dx(dy.shape());
    for (Index f = 0; f < n_frames; ++f) {
      Eigen::Map<const RowMat<S>> g(dy.data() + f * c * hw, c, hw);
      Eigen::Map<const RowMat<S>> xh(cache.xhat.data() + f * c * hw, c, hw);
      Eigen::Map<RowMat<S>> out(dx.data() + f * c * hw, c, hw);
      out = ((g * n).colwise() - sum_dy -
             (xh.array().colwise() * sum_dy_xhat.array()).matrix())
                .array()
                .colwise() *
            (gamma.array() * cache.inv_std.array() / n);
    }
    return dx;
  }

  void zero_grad() {
    ggamma.setZero();
    gbeta.setZero();
  }

  void params(const std::string& prefix, ParamList<S>& list) {
    add_param(list, prefix + ".gamma", gamma, ggamma);
    add_param(list, prefix + ".beta", beta, gbeta);
  }

  // Running statistics, registered for checkpointing but never optimized.
  void buffers(const std::string& prefix, ParamList<S>& list) {
    list.push_back({prefix + ".running_mean", running_mean.data(), nullptr,
                    static_cast<Index>(running_mean.size())});
    list.push_back({prefix + ".running_var", running_var.data(), nullptr,
                    static_cast<Index>(running_var.size())});
  }

  Index param_count() const { return static_cast<Index>(gamma.size() + beta.size()); }

  double momentum_ = 0.1, eps_ = 1e-5;
  ColVec<S> gamma, beta, running_mean, running_var;
  ColVec<S> ggamma, gbeta;

 private:
  void apply(const Tensor<S>& x, Tensor<S>& y, const ColVec<S>& mean,
             const ColVec<S>& inv_std) const {
    const Index c = channels();
    const auto& sh = x.shape();
    if (sh[sh.size() - 3] != c) throw ShapeMismatch("batch norm channel mismatch");
    const Index hw = sh[sh.size() - 2] * sh[sh.size() - 1];
    const Index n_frames = x.size() / (c * hw);
    for (Index f = 0; f < n_frames; ++f) {
      Eigen::Map<const RowMat<S>> frame(x.data() + f * c * hw, c, hw);
      Eigen::Map<RowMat<S>> out(y.data() + f * c * hw, c, hw);
      out = (((frame.colwise() - mean).array().colwise() * (gamma.array() * inv_std.array()))
                 .colwise() +
             beta.array())
                .matrix();
    }
  }
};

// ---------------------------------------------------------------------------

template <typename S>
struct ReluCache {
  Tensor<S> x;
};

template <typename S>
inline Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  for (Index i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
  return y;
}

template <typename S>
inline Tensor<S> relu(const Tensor<S>& x, ReluCache<S>& cache) {
  cache.x = x;
  return relu(x);
}

template <typename S>
inline Tensor<S> relu_backward(const ReluCache<S>& cache, const Tensor<S>& dy) {
  Tensor<S> dx(dy.shape());
  for (Index i = 0; i < dy.size(); ++i)
    dx.data()[i] = cache.x.data()[i] > S(0) ? dy.data()[i] : S(0);
  return dx;
}

template <typename S>
inline RowMat<S> relu_mat(const RowMat<S>& x) {
  return x.cwiseMax(S(0));
}

// Non-overlapping average pooling on the trailing (H, W) axes.
template <typename S>
inline Tensor<S> avg_pool2d(const Tensor<S>& x, Index k) {
  const auto& sh = x.shape();
  const Index h = sh[sh.size() - 2], w = sh[sh.size() - 1];
  const Index oh = h / k, ow = w / k;
  std::vector<Index> osh = sh;
  osh[sh.size() - 2] = oh;
  osh[sh.size() - 1] = ow;
  Tensor<S> y(osh);
  const Index planes = x.size() / (h * w);
  for (Index p = 0; p < planes; ++p) {
    const S* src = x.data() + p * h * w;
    S* dst = y.data() + p * oh * ow;
    for (Index r = 0; r < oh; ++r)
      for (Index c = 0; c < ow; ++c) {
        S acc = 0;
        for (Index i = 0; i < k; ++i)
          for (Index j = 0; j < k; ++j) acc += src[(r * k + i) * w + c * k + j];
        dst[r * ow + c] = acc / static_cast<S>(k * k);
      }
  }
  return y;
}

template <typename S>
inline Tensor<S> avg_pool2d_backward(const std::vector<Index>& in_shape, Index k,
                                     const Tensor<S>& dy) {
  const Index h = in_shape[in_shape.size() - 2], w = in_shape[in_shape.size() - 1];
  const Index oh = h / k, ow = w / k;
  Tensor<S> dx(in_shape);
  dx.set_zero();
  const Index planes = dy.size() / (oh * ow);
  for (Index p = 0; p < planes; ++p) {
    const S* g = dy.data() + p * oh * ow;
    S* dst = dx.data() + p * h * w;
    for (Index r = 0; r < oh; ++r)
      for (Index c = 0; c < ow; ++c) {
        const S v = g[r * ow + c] / static_cast<S>(k * k);
        for (Index i = 0; i < k; ++i)
          for (Index j = 0; j < k; ++j) dst[(r * k + i) * w + c * k + j] += v;
      }
  }
  return dx;
}

// Forward-only max pooling, used inside frozen feature extractors.
template <typename S>
inline Tensor<S> max_pool2d(const Tensor<S>& x, Index k, Index stride, Index pad = 0) {
  const auto& sh = x.shape();
  const Index h = sh[sh.size() - 2], w = sh[sh.size() - 1];
  const Index oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  std::vector<Index> osh = sh;
  osh[sh.size() - 2] = oh;
  osh[sh.size() - 1] = ow;
  Tensor<S> y(osh);
  const Index planes = x.size() / (h * w);
  for (Index p = 0; p < planes; ++p) {
    const S* src = x.data() + p * h * w;
    S* dst = y.data() + p * oh * ow;
    for (Index r = 0; r < oh; ++r)
      for (Index c = 0; c < ow; ++c) {
        S best = std::numeric_limits<S>::lowest();
        for (Index i = 0; i < k; ++i)
          for (Index j = 0; j < k; ++j) {
            const Index ir = r * stride - pad + i, ic = c * stride - pad + j;
            if (ir < 0 || ir >= h || ic < 0 || ic >= w) continue;
            best = std::max(best, src[ir * w + ic]);
          }
        dst[r * ow + c] = best;
      }
  }
  return y;
}

// (T, C, H, W) -> (T, C): per-frame spatial mean.
template <typename S>
inline RowMat<S> spatial_mean_frames(const Tensor<S>& x) {
  const auto& sh = x.shape();
  if (sh.size() != 4) throw ShapeMismatch("expected a (T, C, H, W) tensor");
  const Index t = sh[0], c = sh[1], hw = sh[2] * sh[3];
  RowMat<S> y(t, c);
  for (Index ti = 0; ti < t; ++ti) {
    Eigen::Map<const RowMat<S>> frame(x.data() + ti * c * hw, c, hw);
    y.row(ti) = frame.rowwise().mean().transpose();
  }
  return y;
}

template <typename S>
inline Tensor<S> spatial_mean_frames_backward(const std::vector<Index>& in_shape,
                                              const RowMat<S>& dy) {
  const Index t = in_shape[0], c = in_shape[1], hw = in_shape[2] * in_shape[3];
  Tensor<S> dx(in_shape);
  const S scale = S(1) / static_cast<S>(hw);
  for (Index ti = 0; ti < t; ++ti) {
    Eigen::Map<RowMat<S>> frame(dx.data() + ti * c * hw, c, hw);
    frame = (dy.row(ti).transpose() * scale).replicate(1, hw);
  }
  return dx;
}

// (B, T, C, H, W) -> (B, C): mean over time and space.
template <typename S>
inline RowMat<S> global_avg_pool_video(const Tensor<S>& x) {
  const auto& sh = x.shape();
  if (sh.size() != 5) throw ShapeMismatch("expected a (B, T, C, H, W) tensor");
  const Index batch = sh[0], t = sh[1], c = sh[2], hw = sh[3] * sh[4];
  RowMat<S> y = RowMat<S>::Zero(batch, c);
  for (Index bi = 0; bi < batch; ++bi)
    for (Index ti = 0; ti < t; ++ti) {
      Eigen::Map<const RowMat<S>> frame(x.data() + (bi * t + ti) * c * hw, c, hw);
      y.row(bi) += frame.rowwise().sum().transpose();
    }
  return y / static_cast<S>(t * hw);
}

template <typename S>
inline Tensor<S> global_avg_pool_video_backward(const std::vector<Index>& in_shape,
                                                const RowMat<S>& dy) {
  const Index batch = in_shape[0], t = in_shape[1], c = in_shape[2],
              hw = in_shape[3] * in_shape[4];
  Tensor<S> dx(in_shape);
  const S scale = S(1) / static_cast<S>(t * hw);
  for (Index bi = 0; bi < batch; ++bi)
    for (Index ti = 0; ti < t; ++ti) {
      Eigen::Map<RowMat<S>> frame(dx.data() + (bi * t + ti) * c * hw, c, hw);
      frame = (dy.row(bi).transpose() * scale).replicate(1, hw);
    }
  return dx;
}

// (C, H, W) -> (C,) mean over space; used by the frozen extractors.
template <typename S>
inline ColVec<S> global_avg_pool_image(const Tensor<S>& x) {
  const auto& sh = x.shape();
  const Index c = sh[sh.size() - 3], hw = sh[sh.size() - 2] * sh[sh.size() - 1];
  Eigen::Map<const RowMat<S>> m(x.data(), c, hw);
  return m.rowwise().mean();
}

}  // namespace ssbd::nn
