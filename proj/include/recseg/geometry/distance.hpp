#pragma once

#include <cstdint>
#include <vector>

#include "recseg/core/types.hpp"

namespace recseg {

// Distances are Euclidean between pixel centers, in pixel units.
// Values are exact: the squared distance is computed in integer arithmetic
// and the real-valued field is sqrt of that integer, so equality tests
// against a brute-force oracle hold bit for bit.
struct DistanceField {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // +inf where the source set is empty

  double at(int y, int x) const {
    return values[static_cast<size_t>(y) * width + x];
  }
};

inline constexpr std::int64_t kUnreachable = -1;  // squared-distance sentinel

// Exact squared Euclidean distance to the nearest true pixel of `source`,
// kUnreachable where no source pixel exists. Two-pass lower-envelope scan,
// O(n) per row and column, all in 64-bit integers.
std::vector<std::int64_t> squared_distance_transform(const InstanceMask& source);

DistanceField distance_transform(const InstanceMask& source);

}  // namespace recseg
