#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2ue/core/tensor.hpp"

namespace t2ue {

/// 8-bit RGB image, row-major HWC.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;
};

/// Writes a fixed-settings (filter 0, one deflate level) RGB8 PNG, so equal
/// pixels always produce equal bytes.
void write_png_rgb8(const std::string& path, const ImageU8& img);

/// Reads an 8-bit non-interlaced RGB PNG (filters 0-4 supported).
ImageU8 read_png_rgb8(const std::string& path);

/// (3, H, W) float image in [0, 1] from bytes, v / 255.
Tensor<float> image_to_float(const ImageU8& img);

/// Float image back to bytes; values are rounded half away from zero and
/// clamped to [0, 255].
ImageU8 float_to_image(const Tensor<float>& chw);

}  // namespace t2ue
