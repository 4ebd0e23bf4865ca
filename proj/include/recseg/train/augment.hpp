#pragma once

#include <optional>
#include <vector>

#include "recseg/core/rng.hpp"
#include "recseg/core/types.hpp"

namespace recseg {

// Window resample: reads the side x side window at (y0, x0) and produces an
// out_side x out_side result. Images interpolate bilinearly with samples
// clamped to the window; masks take the nearest source pixel. The window
// must lie inside the input.
Image resize_window(const Image& image, int y0, int x0, int side,
                    int out_side);
ClassMask resize_window(const ClassMask& mask, int y0, int x0, int side,
                        int out_side);

Image flip_horizontal(const Image& image);
ClassMask flip_horizontal(const ClassMask& mask);

// Quarter-turn rotations of a square grid, `quarters` times clockwise.
Image rotate90(const Image& image, int quarters);
ClassMask rotate90(const ClassMask& mask, int quarters);

struct AugmentConfig {
  int crop = 64;
  double p_flip = 0.5;
  double p_rotate = 0.5;
  double p_rescale = 0.5;
  double scale_min = 0.8;
  double scale_max = 1.25;
};

struct CropSample {
  Image image;
  std::vector<std::optional<ClassMask>> labels;
};

// One augmented training crop. Draw order: rescale gate (plus factor),
// window position, flip gate, rotation gate (plus quarter count). The same
// geometry applies to the image and every present label.
CropSample make_crop(const Image& image,
                     const std::vector<std::optional<ClassMask>>& labels,
                     const AugmentConfig& cfg, Rng& rng);

}  // namespace recseg
