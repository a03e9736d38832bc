#pragma once

#include <string>

#include "atdt/tensor/tensor.hpp"

namespace atdt::scenegen {

// Binary PPM (P6, 8-bit), image [3,H,W] in [0,1].
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// Binary PGM (P5, 16-bit big-endian per Netpbm), depth [1,H,W] in world
// units scaled by 655.35 per unit (100 units -> 65535).
void write_depth_pgm16(const std::string& path, const Tensor& depth);
Tensor read_depth_pgm16(const std::string& path);

// Binary PGM (P5, 8-bit) for label / mask maps with small integer values.
void write_pgm8(const std::string& path, const Tensor& map, double scale = 1.0);
Tensor read_pgm8(const std::string& path, double scale = 1.0);

}  // namespace atdt::scenegen
