#pragma once

#include <filesystem>

#include "pat/tensor.hpp"

namespace pat {

// Binary tensor container used throughout the toolkit:
//   magic "PATN", version byte 0x01, dtype byte (0 = single, 1 = double),
//   ndim byte, ndim little-endian uint64 extents, then the row-major payload
//   in the dtype's width, little endian.
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). The image is
// linearly mapped from [min, max] to the full sample range; constant images
// map to zero. 2D tensors only.
void export_pgm(const Tensor& image, const std::filesystem::path& path);
// Returns values scaled back to [0, 1].
Tensor import_pgm(const std::filesystem::path& path);

}  // namespace pat
