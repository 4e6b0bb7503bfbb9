#pragma once

namespace ssbd {

struct Footprint {
  long long learnable = 0;
  long long frozen = 0;
  long long total() const { return learnable + frozen; }
};

inline Footprint operator+(Footprint a, Footprint b) {
  return {a.learnable + b.learnable, a.frozen + b.frozen};
}

}  // namespace ssbd
