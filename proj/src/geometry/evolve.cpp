#include "recseg/geometry/evolve.hpp"

#include <algorithm>
#include <limits>

#include "recseg/core/error.hpp"
#include "recseg/geometry/level_set.hpp"

namespace recseg {

std::vector<SeedInstance> extract_seeds(const ClassMask& seed_label,
                                        Connectivity connectivity) {
  std::vector<SeedInstance> seeds;
  for (int cls = 0; cls < seed_label.background_class(); ++cls) {
    InstanceMask plane = InstanceMask::zeros(seed_label.height, seed_label.width);
    bool any = false;
    for (size_t i = 0; i < seed_label.labels.size(); ++i)
      if (seed_label.labels[i] == cls) {
        plane.bits[i] = 1;
        any = true;
      }
    if (!any) continue;
    const ComponentLabeling comps = connected_components(plane, connectivity);
    std::vector<size_t> first(static_cast<size_t>(comps.count) + 1,
                              std::numeric_limits<size_t>::max());
    for (size_t i = 0; i < comps.ids.size(); ++i)
      if (comps.ids[i] != 0 && first[comps.ids[i]] == std::numeric_limits<size_t>::max())
        first[comps.ids[i]] = i;
    for (int id = 1; id <= comps.count; ++id)
      seeds.push_back({component_mask(comps, id), cls, first[id]});
  }
  std::sort(seeds.begin(), seeds.end(),
            [](const SeedInstance& a, const SeedInstance& b) {
              return a.first_pixel < b.first_pixel;
            });
  return seeds;
}

UpdateResult update_labels(const ClassMask& seed_label,
                           const ClassMask& prediction, double beta,
                           Connectivity connectivity) {
  if (seed_label.height != prediction.height ||
      seed_label.width != prediction.width)
    throw DataError("update_labels: label and prediction dimensions differ");

  const int h = seed_label.height, w = seed_label.width;
  const size_t n = seed_label.pixel_count();

  const std::vector<SeedInstance> seeds = extract_seeds(seed_label, connectivity);

  UpdateResult result;
  result.seed_count = static_cast<int>(seeds.size());
  result.labels = ClassMask::filled(
      h, w, seed_label.classes,
      static_cast<std::uint8_t>(seed_label.background_class()));
  if (seeds.empty()) return result;

  const ComponentLabeling raw =
      connected_components(foreground(prediction), connectivity);
  std::vector<InstanceMask> seed_masks;
  seed_masks.reserve(seeds.size());
  for (const auto& s : seeds) seed_masks.push_back(s.mask);
  const ComponentLabeling comps = split_components(raw, seed_masks);
  const PairingResult pairing = pair_seeds(seed_masks, comps);
  result.unpaired_seeds = pairing.unpaired_seeds;

  // Per-pixel owner and its level-set value. Frozen (unpaired) seeds carry
  // phi = 0 on their own pixels.
  std::vector<std::int32_t> owner(n, -1);
  std::vector<double> owner_phi(n, 0.0);
  std::vector<std::uint8_t> is_seed_pixel(n, 0);
  for (const auto& s : seeds)
    for (size_t i = 0; i < n; ++i)
      if (s.mask.bits[i]) is_seed_pixel[i] = 1;

  auto claim = [&](size_t i, int seed_idx, double phi) {
    if (owner[i] < 0 || phi < owner_phi[i]) {
      owner[i] = seed_idx;
      owner_phi[i] = phi;
    }
    // equal phi keeps the earlier (lower id) seed
  };

  std::vector<std::uint8_t> paired(seeds.size(), 0);
  for (const auto& [seed_idx, comp_id] : pairing.pairs) {
    paired[seed_idx] = 1;
    const InstanceMask comp = component_mask(comps, comp_id);
    const LevelSetField phi = level_set(seeds[seed_idx].mask, comp, beta);
    for (size_t i = 0; i < n; ++i)
      if (phi.values[i] <= 0.0) claim(i, seed_idx, phi.values[i]);
  }
  for (size_t s = 0; s < seeds.size(); ++s)
    if (!paired[s])
      for (size_t i = 0; i < n; ++i)
        if (seeds[s].mask.bits[i]) claim(i, static_cast<int>(s), 0.0);

  // Seed pixels always belong to their own instance.
  for (size_t s = 0; s < seeds.size(); ++s)
    for (size_t i = 0; i < n; ++i)
      if (seeds[s].mask.bits[i]) {
        owner[i] = static_cast<std::int32_t>(s);
        owner_phi[i] = 0.0;
      }

  // Clear non-seed pixels that touch a different region, symmetrically, so
  // distinct instances never fuse in the class grid.
  const int reach = connectivity == Connectivity::Four ? 4 : 8;
  static const int dy[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
  static const int dx[8] = {0, 0, -1, 1, -1, 1, -1, 1};
  std::vector<std::uint8_t> drop(n, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (owner[i] < 0 || is_seed_pixel[i]) continue;
      for (int k = 0; k < reach; ++k) {
        const int qy = y + dy[k], qx = x + dx[k];
        if (qy < 0 || qy >= h || qx < 0 || qx >= w) continue;
        const size_t q = static_cast<size_t>(qy) * w + qx;
        if (owner[q] >= 0 && owner[q] != owner[i]) {
          drop[i] = 1;
          break;
        }
      }
    }
  for (size_t i = 0; i < n; ++i)
    if (drop[i]) owner[i] = -1;

  // Keep, per region, only the connected part that contains the seed.
  std::vector<std::uint8_t> keep(n, 0);
  std::vector<std::int32_t> stack;
  for (size_t i = 0; i < n; ++i)
    if (owner[i] >= 0 && is_seed_pixel[i]) {
      keep[i] = 1;
      stack.push_back(static_cast<std::int32_t>(i));
    }
  while (!stack.empty()) {
    const std::int32_t p = stack.back();
    stack.pop_back();
    const int py = p / w, px = p % w;
    for (int k = 0; k < reach; ++k) {
      const int qy = py + dy[k], qx = px + dx[k];
      if (qy < 0 || qy >= h || qx < 0 || qx >= w) continue;
      const size_t q = static_cast<size_t>(qy) * w + qx;
      if (!keep[q] && owner[q] == owner[static_cast<size_t>(p)]) {
        keep[q] = 1;
        stack.push_back(static_cast<std::int32_t>(q));
      }
    }
  }

  for (size_t i = 0; i < n; ++i)
    if (owner[i] >= 0 && keep[i])
      result.labels.labels[i] = static_cast<std::uint8_t>(seeds[owner[i]].cls);

  result.grown_count = result.seed_count;
  return result;
}

}  // namespace recseg
