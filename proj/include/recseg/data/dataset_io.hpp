#pragma once

#include <cstdint>
#include <string>

#include "recseg/core/types.hpp"

namespace recseg {

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t file_checksum(const std::string& path);

// On-disk layout under `dir`:
//   manifest.txt
//   images/<id>.pgm           8-bit grayscale
//   gt/<id>.pgm               class indices
//   labels/task<t>/<id>.pgm   class indices, only for labeled items
// The manifest records task shapes and an FNV-1a 64 checksum per file;
// loading verifies every checksum and rejects unknown task directories.
void save_dataset(const Dataset& dataset, const std::string& dir);

Dataset load_dataset(const std::string& dir);

}  // namespace recseg
