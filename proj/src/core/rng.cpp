#include "recseg/core/rng.hpp"

#include <cmath>

namespace recseg {

double Rng::normal() {
  // Box-Muller on two fresh uniforms; the cosine branch only, so that a
  // single call always advances the stream by exactly two draws.
  const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  const double u2 = uniform();
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace recseg
