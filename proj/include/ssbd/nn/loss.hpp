#pragma once

#include <cmath>

#include "ssbd/error.hpp"
#include "ssbd/tensor.hpp"

namespace ssbd::nn {

template <typename S>
inline ColVec<S> softmax(const ColVec<S>& logits) {
  const S mx = logits.maxCoeff();
  ColVec<S> e = (logits.array() - mx).exp();
  return e / e.sum();
}

template <typename S>
inline ColVec<S> log_softmax(const ColVec<S>& logits) {
  const S mx = logits.maxCoeff();
  const ColVec<S> shifted = logits.array() - mx;
  const S lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

// Binary cross entropy on a raw logit, in the overflow-safe form.
template <typename S>
inline S bce_with_logits(S logit, S target, S* dlogit = nullptr) {
  const S loss = std::max(logit, S(0)) - logit * target + std::log1p(std::exp(-std::abs(logit)));
  if (dlogit != nullptr) {
    const S p = logit >= S(0) ? S(1) / (S(1) + std::exp(-logit))
                              : std::exp(logit) / (S(1) + std::exp(logit));
    *dlogit = p - target;
  }
  return loss;
}

// Categorical cross entropy on raw logits.
template <typename S>
inline S ce_with_logits(const ColVec<S>& logits, Index target, ColVec<S>* dlogits = nullptr) {
  if (target < 0 || target >= logits.size()) throw ShapeMismatch("class index out of range");
  const ColVec<S> logp = log_softmax(logits);
  if (dlogits != nullptr) {
    *dlogits = logp.array().exp();
    (*dlogits)(target) -= S(1);
  }
  return -logp(target);
}

// KL(p || q) over two distributions given as probabilities.
template <typename S>
inline S kl_divergence(const ColVec<S>& p, const ColVec<S>& q) {
  S acc = 0;
  for (Index i = 0; i < p.size(); ++i) {
    if (p(i) <= S(0)) continue;
    acc += p(i) * (std::log(p(i)) - std::log(q(i)));
  }
  return acc;
}

}  // namespace ssbd::nn
