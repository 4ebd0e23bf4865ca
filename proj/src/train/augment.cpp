#include "recseg/train/augment.hpp"

#include <algorithm>
#include <cmath>

#include "recseg/core/error.hpp"

namespace recseg {

namespace {

void check_window(int h, int w, int y0, int x0, int side, int out_side) {
  if (side < 1 || out_side < 1 || y0 < 0 || x0 < 0 || y0 + side > h ||
      x0 + side > w)
    throw DataError("resample window out of bounds");
}

}  // namespace

Image resize_window(const Image& image, int y0, int x0, int side,
                    int out_side) {
  check_window(image.height, image.width, y0, x0, side, out_side);
  Image out = Image::zeros(out_side, out_side, image.channels);
  const double scale = static_cast<double>(side) / out_side;
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < out_side; ++y) {
      const double sy =
          std::clamp((y + 0.5) * scale - 0.5, 0.0, side - 1.0);
      const int iy = static_cast<int>(sy);
      const int iy1 = std::min(iy + 1, side - 1);
      const double fy = sy - iy;
      for (int x = 0; x < out_side; ++x) {
        const double sx =
            std::clamp((x + 0.5) * scale - 0.5, 0.0, side - 1.0);
        const int ix = static_cast<int>(sx);
        const int ix1 = std::min(ix + 1, side - 1);
        const double fx = sx - ix;
        const double v =
            (1.0 - fy) * ((1.0 - fx) * image.at(c, y0 + iy, x0 + ix) +
                          fx * image.at(c, y0 + iy, x0 + ix1)) +
            fy * ((1.0 - fx) * image.at(c, y0 + iy1, x0 + ix) +
                  fx * image.at(c, y0 + iy1, x0 + ix1));
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  return out;
}

ClassMask resize_window(const ClassMask& mask, int y0, int x0, int side,
                        int out_side) {
  check_window(mask.height, mask.width, y0, x0, side, out_side);
  ClassMask out = ClassMask::filled(out_side, out_side, mask.classes, 0);
  const double scale = static_cast<double>(side) / out_side;
  for (int y = 0; y < out_side; ++y) {
    const int sy = std::min(
        side - 1, static_cast<int>(std::floor((y + 0.5) * scale)));
    for (int x = 0; x < out_side; ++x) {
      const int sx = std::min(
          side - 1, static_cast<int>(std::floor((x + 0.5) * scale)));
      out.at(y, x) = mask.at(y0 + sy, x0 + sx);
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  return out;
}

ClassMask flip_horizontal(const ClassMask& mask) {
  ClassMask out = mask;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      out.at(y, x) = mask.at(y, mask.width - 1 - x);
  return out;
}

Image rotate90(const Image& image, int quarters) {
  if (image.height != image.width)
    throw DataError("rotate90 needs a square grid");
  Image out = image;
  const int s = image.height;
  for (int q = ((quarters % 4) + 4) % 4; q > 0; --q) {
    Image next = out;
    for (int c = 0; c < out.channels; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) next.at(c, y, x) = out.at(c, s - 1 - x, y);
    out = std::move(next);
  }
  return out;
}

ClassMask rotate90(const ClassMask& mask, int quarters) {
  if (mask.height != mask.width)
    throw DataError("rotate90 needs a square grid");
  ClassMask out = mask;
  const int s = mask.height;
  for (int q = ((quarters % 4) + 4) % 4; q > 0; --q) {
    ClassMask next = out;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) next.at(y, x) = out.at(s - 1 - x, y);
    out = std::move(next);
  }
  return out;
}

CropSample make_crop(const Image& image,
                     const std::vector<std::optional<ClassMask>>& labels,
                     const AugmentConfig& cfg, Rng& rng) {
  if (cfg.crop < 2 || cfg.crop > std::min(image.height, image.width))
    throw ConfigError("crop must fit inside the image");
  if (!(cfg.scale_min > 0.0 && cfg.scale_max >= cfg.scale_min))
    throw ConfigError("scale range is invalid");

  int window = cfg.crop;
  if (rng.uniform() < cfg.p_rescale) {
    const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
    window = static_cast<int>(std::lround(cfg.crop / s));
    window = std::clamp(window, 2, std::min(image.height, image.width));
  }
  const int y0 = static_cast<int>(
      rng.below(static_cast<std::uint64_t>(image.height - window + 1)));
  const int x0 = static_cast<int>(
      rng.below(static_cast<std::uint64_t>(image.width - window + 1)));
  const bool flip = rng.uniform() < cfg.p_flip;
  int quarters = 0;
  if (rng.uniform() < cfg.p_rotate)
    quarters = 1 + static_cast<int>(rng.below(3));

  CropSample out;
  out.image = resize_window(image, y0, x0, window, cfg.crop);
  if (flip) out.image = flip_horizontal(out.image);
  if (quarters) out.image = rotate90(out.image, quarters);
  out.labels.resize(labels.size());
  for (size_t t = 0; t < labels.size(); ++t) {
    if (!labels[t]) continue;
    ClassMask m = resize_window(*labels[t], y0, x0, window, cfg.crop);
    if (flip) m = flip_horizontal(m);
    if (quarters) m = rotate90(m, quarters);
    out.labels[t] = std::move(m);
  }
  return out;
}

}  // namespace recseg
