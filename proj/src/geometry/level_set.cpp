#include "recseg/geometry/level_set.hpp"

#include "recseg/core/error.hpp"

namespace recseg {

namespace {

void check_inputs(const InstanceMask& seed, const InstanceMask& prediction) {
  if (seed.height != prediction.height || seed.width != prediction.width)
    throw DataError("level_set: seed and prediction dimensions differ");
  if (seed.empty()) throw DataError("level_set: seed is empty");
}

InstanceMask complement(const InstanceMask& mask) {
  InstanceMask out = mask;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

}  // namespace

LevelSetField level_set(const InstanceMask& seed, const InstanceMask& prediction,
                        double beta) {
  if (beta < 0) throw DataError("level_set: beta must be nonnegative");
  check_inputs(seed, prediction);

  const DistanceField seed_dist = distance_transform(seed);
  LevelSetField phi;
  phi.height = seed.height;
  phi.width = seed.width;
  if (beta == 0.0) {
    phi.values = seed_dist.values;
    return phi;
  }
  const DistanceField outside_dist = distance_transform(complement(prediction));
  phi.values.resize(seed.pixel_count());
  for (size_t i = 0; i < phi.values.size(); ++i)
    phi.values[i] = seed_dist.values[i] - beta * outside_dist.values[i];
  return phi;
}

InstanceMask grow_region(const InstanceMask& seed, const InstanceMask& prediction,
                         double beta) {
  const LevelSetField phi = level_set(seed, prediction, beta);
  InstanceMask out = InstanceMask::zeros(seed.height, seed.width);
  for (size_t i = 0; i < out.bits.size(); ++i)
    out.bits[i] = phi.values[i] <= 0.0 ? 1 : 0;
  return out;
}

}  // namespace recseg
