#pragma once

#include <vector>

#include "recseg/core/types.hpp"
#include "recseg/geometry/components.hpp"

namespace recseg {

struct SeedInstance {
  InstanceMask mask;
  int cls = 0;           // original object class, kept by the grown region
  size_t first_pixel = 0;  // raster index defining the deterministic seed id
};

// Seeds are the connected components of each object class of the label,
// ordered by the raster position of their first pixel.
std::vector<SeedInstance> extract_seeds(const ClassMask& seed_label,
                                        Connectivity connectivity);

struct UpdateResult {
  ClassMask labels;
  int seed_count = 0;
  int grown_count = 0;  // equals seed_count: one grown region per seed
  std::vector<int> unpaired_seeds;
};

// One step of the label evolution:
//   1. extract seed instances from the current label;
//   2. binarize the prediction (any object class is foreground) and take its
//      connected components;
//   3. split components overlapping several seeds, then pair each seed with
//      the component covering at least half of it;
//   4. grow each paired seed inside its component; unpaired seeds keep their
//      previous mask this round.
// Grown pixels take the seed's class. A pixel claimed by two regions goes to
// the one with the smaller level-set value, ties to the lower seed id. To
// keep instances recoverable from the single class grid, a non-seed grown
// pixel adjacent to a different region is cleared, and each region keeps
// only the connected part containing its seed. The object pixels of the
// output are always a superset of the input's, and no two seeds ever merge.
UpdateResult update_labels(const ClassMask& seed_label,
                           const ClassMask& prediction, double beta,
                           Connectivity connectivity = Connectivity::Eight);

}  // namespace recseg
