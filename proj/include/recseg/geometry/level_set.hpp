#pragma once

#include <vector>

#include "recseg/core/types.hpp"
#include "recseg/geometry/distance.hpp"

namespace recseg {

// Signed per-pixel field whose nonpositive sublevel set is the grown region.
struct LevelSetField {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const {
    return values[static_cast<size_t>(y) * width + x];
  }
};

// phi(i) = dist(i, seed) - beta * dist(i, complement of prediction).
// beta = 0 returns dist(i, seed) exactly, so a prediction covering the whole
// grid (empty complement, infinite second distance) stays well defined:
// beta * inf is taken as 0 for beta = 0 and +inf otherwise.
LevelSetField level_set(const InstanceMask& seed, const InstanceMask& prediction,
                        double beta);

// The grown region { i : phi(i) <= 0 }. Always contains the seed.
InstanceMask grow_region(const InstanceMask& seed, const InstanceMask& prediction,
                         double beta);

}  // namespace recseg
