#pragma once

#include <string>

#include "casgnn/tensor.hpp"

namespace casgnn {

// Binary PPM (P6) and PGM (P5) with maxval 255 and a single
// whitespace-delimited header. Values quantize as round(v * 255) on write
// and dequantize as byte / 255 on read, so a round trip is exact to within
// half a quantization step. Malformed input raises FormatError naming the
// file and byte offset.

void write_ppm(const std::string& path, const TensorF& rgb);   // (1,3,H,W) in [0,1]
void write_pgm(const std::string& path, const TensorF& gray);  // (1,1,H,W) in [0,1]

TensorF read_ppm(const std::string& path);
TensorF read_pgm(const std::string& path);

}  // namespace casgnn
