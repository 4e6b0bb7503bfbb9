#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ssbd/nn/layers.hpp"
#include "ssbd/rng.hpp"

namespace ssbd::test {

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst;
};

// Central finite differences against the analytic gradients. `loss` must
// zero the grads, run forward and backward, and return the scalar loss.
template <typename S>
GradCheckResult grad_check(nn::ParamList<S>& params, const std::function<S()>& loss,
                           Index samples_per_tensor = 4, double eps = 1e-5,
                           std::uint64_t seed = 99) {
  Rng rng(seed);
  loss();
  std::vector<std::vector<S>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad, p.grad + p.size);

  GradCheckResult res;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    for (Index k = 0; k < std::min(samples_per_tensor, p.size); ++k) {
      const Index i = p.size <= samples_per_tensor
                          ? k
                          : static_cast<Index>(rng.uniform_int(0, p.size - 1));
      const S orig = p.value[i];
      p.value[i] = orig + static_cast<S>(eps);
      const double up = static_cast<double>(loss());
      p.value[i] = orig - static_cast<S>(eps);
      const double down = static_cast<double>(loss());
      p.value[i] = orig;
      const double fd = (up - down) / (2 * eps);
      const double an = static_cast<double>(analytic[t][static_cast<std::size_t>(i)]);
      const double rel = std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1e-6);
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto p = std::filesystem::temp_directory_path() /
                 ("ssbd_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace ssbd::test
