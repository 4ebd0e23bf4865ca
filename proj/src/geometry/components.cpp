#include "recseg/geometry/components.hpp"

#include <array>
#include <limits>

#include "recseg/core/error.hpp"
#include "recseg/geometry/distance.hpp"

namespace recseg {

namespace {

struct Neighborhood {
  std::array<std::pair<int, int>, 8> offsets;
  int count;
};

Neighborhood neighbors_of(Connectivity conn) {
  Neighborhood n;
  n.offsets = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1},
                {-1, -1}, {-1, 1}, {1, -1}, {1, 1}}};
  n.count = conn == Connectivity::Four ? 4 : 8;
  return n;
}

}  // namespace

ComponentLabeling connected_components(const InstanceMask& mask,
                                       Connectivity connectivity) {
  ComponentLabeling out;
  out.height = mask.height;
  out.width = mask.width;
  out.connectivity = connectivity;
  out.ids.assign(mask.pixel_count(), 0);
  const Neighborhood nb = neighbors_of(connectivity);

  std::vector<std::int32_t> stack;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const size_t i = static_cast<size_t>(y) * mask.width + x;
      if (!mask.bits[i] || out.ids[i] != 0) continue;
      const std::int32_t id = ++out.count;
      out.ids[i] = id;
      stack.assign(1, static_cast<std::int32_t>(i));
      while (!stack.empty()) {
        const std::int32_t p = stack.back();
        stack.pop_back();
        const int py = p / mask.width, px = p % mask.width;
        for (int k = 0; k < nb.count; ++k) {
          const int qy = py + nb.offsets[k].first;
          const int qx = px + nb.offsets[k].second;
          if (qy < 0 || qy >= mask.height || qx < 0 || qx >= mask.width)
            continue;
          const size_t q = static_cast<size_t>(qy) * mask.width + qx;
          if (mask.bits[q] && out.ids[q] == 0) {
            out.ids[q] = id;
            stack.push_back(static_cast<std::int32_t>(q));
          }
        }
      }
    }
  }
  return out;
}

InstanceMask component_mask(const ComponentLabeling& labeling, int id) {
  InstanceMask m = InstanceMask::zeros(labeling.height, labeling.width);
  for (size_t i = 0; i < labeling.ids.size(); ++i)
    m.bits[i] = labeling.ids[i] == id ? 1 : 0;
  return m;
}

std::vector<size_t> component_sizes(const ComponentLabeling& labeling) {
  std::vector<size_t> sizes(static_cast<size_t>(labeling.count) + 1, 0);
  for (auto id : labeling.ids) ++sizes[id];
  return sizes;
}

ComponentLabeling split_components(const ComponentLabeling& components,
                                   const std::vector<InstanceMask>& seeds) {
  const int h = components.height, w = components.width;
  const size_t n = components.ids.size();

  // Seeds must be pairwise disjoint.
  std::vector<std::int32_t> seed_at(n, -1);
  for (size_t s = 0; s < seeds.size(); ++s) {
    if (seeds[s].height != h || seeds[s].width != w)
      throw DataError("split_components: seed dimensions differ");
    for (size_t i = 0; i < n; ++i)
      if (seeds[s].bits[i]) {
        if (seed_at[i] >= 0)
          throw DataError("split_components: seeds overlap");
        seed_at[i] = static_cast<std::int32_t>(s);
      }
  }

  // Which seeds intersect each component.
  std::vector<std::vector<int>> comp_seeds(
      static_cast<size_t>(components.count) + 1);
  for (size_t i = 0; i < n; ++i) {
    const std::int32_t c = components.ids[i];
    if (c == 0 || seed_at[i] < 0) continue;
    auto& list = comp_seeds[c];
    if (list.empty() || list.back() != seed_at[i]) {
      bool seen = false;
      for (int s : list) seen = seen || s == seed_at[i];
      if (!seen) list.push_back(seed_at[i]);
    }
  }

  // Squared distance field per seed that participates in a split.
  std::vector<std::vector<std::int64_t>> seed_sq(seeds.size());
  for (size_t c = 1; c < comp_seeds.size(); ++c)
    if (comp_seeds[c].size() > 1)
      for (int s : comp_seeds[c])
        if (seed_sq[s].empty()) seed_sq[s] = squared_distance_transform(seeds[s]);

  // Partition key per pixel: component id for untouched components, a
  // (component, seed) pair for split ones, 0 for removed or background.
  // Keys only need to distinguish neighbors, so pack as c * (S+1) + s.
  const std::int64_t stride = static_cast<std::int64_t>(seeds.size()) + 1;
  std::vector<std::int64_t> key(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const std::int32_t c = components.ids[i];
    if (c == 0) continue;
    const auto& owners = comp_seeds[c];
    if (owners.size() <= 1) {
      key[i] = static_cast<std::int64_t>(c) * stride;
      continue;
    }
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    std::int64_t second = best;
    int best_seed = -1;
    for (int s : owners) {
      const std::int64_t d = seed_sq[s][i];
      if (d < best) {
        second = best;
        best = d;
        best_seed = s;
      } else if (d < second) {
        second = d;
      }
    }
    if (best == second) continue;  // middle pixel: removed
    key[i] = static_cast<std::int64_t>(c) * stride + best_seed + 1;
  }

  // Relabel connected runs of equal keys so ids stay contiguous and every
  // component stays connected.
  ComponentLabeling out;
  out.height = h;
  out.width = w;
  out.connectivity = components.connectivity;
  out.ids.assign(n, 0);
  const Neighborhood nb = neighbors_of(components.connectivity);
  std::vector<std::int32_t> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (key[i] == 0 || out.ids[i] != 0) continue;
      const std::int32_t id = ++out.count;
      out.ids[i] = id;
      stack.assign(1, static_cast<std::int32_t>(i));
      while (!stack.empty()) {
        const std::int32_t p = stack.back();
        stack.pop_back();
        const int py = p / w, px = p % w;
        for (int k = 0; k < nb.count; ++k) {
          const int qy = py + nb.offsets[k].first;
          const int qx = px + nb.offsets[k].second;
          if (qy < 0 || qy >= h || qx < 0 || qx >= w) continue;
          const size_t q = static_cast<size_t>(qy) * w + qx;
          if (key[q] == key[i] && out.ids[q] == 0) {
            out.ids[q] = id;
            stack.push_back(static_cast<std::int32_t>(q));
          }
        }
      }
    }
  }
  return out;
}

PairingResult pair_seeds(const std::vector<InstanceMask>& seeds,
                         const ComponentLabeling& components) {
  PairingResult result;
  for (size_t s = 0; s < seeds.size(); ++s) {
    if (seeds[s].height != components.height ||
        seeds[s].width != components.width)
      throw DataError("pair_seeds: seed dimensions differ");
    std::vector<size_t> overlap(static_cast<size_t>(components.count) + 1, 0);
    size_t seed_size = 0;
    for (size_t i = 0; i < seeds[s].bits.size(); ++i)
      if (seeds[s].bits[i]) {
        ++seed_size;
        ++overlap[components.ids[i]];
      }
    int best = 0;
    size_t best_overlap = 0;
    for (int c = 1; c <= components.count; ++c)
      if (overlap[c] > best_overlap) {
        best_overlap = overlap[c];
        best = c;
      }
    if (best != 0 && 2 * best_overlap >= seed_size)
      result.pairs.emplace_back(static_cast<int>(s), best);
    else
      result.unpaired_seeds.push_back(static_cast<int>(s));
  }
  return result;
}

}  // namespace recseg
