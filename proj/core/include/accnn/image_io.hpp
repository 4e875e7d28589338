#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "accnn/tensor.hpp"

namespace accnn {

/// Binary portable pixmap (P6, maxval 255). Pixels quantize as
/// round(clamp(v, 0, 1) * 255), so write/read round-trips the byte values.
void write_ppm(const std::string& path, const Tensor<float>& image);
Tensor<float> read_ppm(const std::string& path);

/// Binary portable graymap (P5, maxval 255) from already-quantized bytes.
void write_pgm(const std::string& path, const std::vector<std::uint8_t>& gray, std::size_t width,
               std::size_t height);

}  // namespace accnn
