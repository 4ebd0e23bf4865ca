#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "recseg/core/types.hpp"

namespace recseg {

enum class Connectivity { Four = 4, Eight = 8 };

// Component ids are contiguous 1..count in raster order of each component's
// first pixel; 0 is background.
struct ComponentLabeling {
  int height = 0;
  int width = 0;
  Connectivity connectivity = Connectivity::Eight;
  std::vector<std::int32_t> ids;
  int count = 0;

  std::int32_t at(int y, int x) const {
    return ids[static_cast<size_t>(y) * width + x];
  }
};

ComponentLabeling connected_components(const InstanceMask& mask,
                                       Connectivity connectivity);

InstanceMask component_mask(const ComponentLabeling& labeling, int id);

std::vector<size_t> component_sizes(const ComponentLabeling& labeling);

// Splits every component that overlaps more than one seed: each pixel of
// such a component is assigned to its nearest overlapped seed (Euclidean),
// and pixels whose two smallest seed distances tie become background. The
// result is relabeled so components stay connected and contiguously
// numbered; each output component intersects at most one seed.
ComponentLabeling split_components(const ComponentLabeling& components,
                                   const std::vector<InstanceMask>& seeds);

struct PairingResult {
  // (seed index, component id), one entry per paired seed.
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unpaired_seeds;
};

// A seed pairs with the component covering at least half of its pixels
// (boundary inclusive). If several qualify, the largest overlap wins and
// ties go to the lower component id.
PairingResult pair_seeds(const std::vector<InstanceMask>& seeds,
                         const ComponentLabeling& components);

}  // namespace recseg
