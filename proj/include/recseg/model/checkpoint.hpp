#pragma once

#include <string>

#include "recseg/model/network.hpp"

namespace recseg {

// Binary checkpoint: network configuration followed by every registry
// tensor (weights, biases, norm parameters and running statistics) as named
// float32 arrays, little endian. Adam moments are per-run state and are not
// stored.
template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& params);

// Rebuilds the registry from the stored configuration and fills it. Throws
// DataError on a malformed file, unknown tensor, or shape mismatch.
template <typename T>
ModelParams<T> load_checkpoint(const std::string& path);

}  // namespace recseg
