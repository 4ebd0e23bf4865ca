#pragma once

#include <Eigen/Core>

#include "recseg/core/types.hpp"

namespace recseg {

// Activations live in a channels-by-pixels matrix: row = channel, column =
// (sample, y, x) in sample-major raster order. Column-major storage keeps a
// pixel's channel vector contiguous, which im2col and the per-pixel softmax
// both rely on.
template <typename T>
struct FeatureMap {
  int n = 0, c = 0, h = 0, w = 0;
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> m;

  static FeatureMap zeros(int n, int c, int h, int w) {
    FeatureMap f;
    f.n = n;
    f.c = c;
    f.h = h;
    f.w = w;
    f.m.setZero(c, static_cast<Eigen::Index>(n) * h * w);
    return f;
  }

  Eigen::Index cols() const { return m.cols(); }
  Eigen::Index col_index(int sample, int y, int x) const {
    return (static_cast<Eigen::Index>(sample) * h + y) * w + x;
  }
};

template <typename T>
FeatureMap<T> image_to_features(const Image& image) {
  FeatureMap<T> f = FeatureMap<T>::zeros(1, image.channels, image.height,
                                         image.width);
  const size_t plane = image.pixel_count();
  for (int c = 0; c < image.channels; ++c)
    for (size_t p = 0; p < plane; ++p)
      f.m(c, static_cast<Eigen::Index>(p)) =
          static_cast<T>(image.data[c * plane + p]);
  return f;
}

}  // namespace recseg
