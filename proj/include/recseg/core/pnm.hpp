#pragma once

#include <string>

#include "recseg/core/types.hpp"

namespace recseg {

// Binary portable graymap / pixmap I/O. Masks are written as P5 with one
// byte per pixel holding the class index (or 0/1 for instance masks).
// Images are written as P5 (1 channel) or P6 (3 channels), values in [0, 1]
// quantized to maxval 255 with round-to-nearest.

void write_mask_pgm(const std::string& path, const ClassMask& mask);
ClassMask read_mask_pgm(const std::string& path, int classes);

void write_instance_pgm(const std::string& path, const InstanceMask& mask);
InstanceMask read_instance_pgm(const std::string& path);

void write_image_pnm(const std::string& path, const Image& image);
Image read_image_pnm(const std::string& path);

// Quantize to the on-disk 8-bit grid, so an in-memory image equals its
// saved-then-loaded copy bit for bit.
float quantize255(float v);

}  // namespace recseg
