#pragma once

#include <string>

#include "dg/common.hpp"

namespace dg {

// 8-bit RGB PNG, no alpha. Quantization on save is round(x*255); load maps
// bytes back to byte/255, so save-then-load is a fixed point on quantized
// tensors.
TensorF load_png(const std::string& path);
void save_png(const TensorF& img, const std::string& path);

inline unsigned char to_byte(float x) {
    return static_cast<unsigned char>(
        std::round(std::min(1.0f, std::max(0.0f, x)) * 255.0f));
}

inline float quantize8(float x) { return to_byte(x) / 255.0f; }

inline TensorF quantize8(const TensorF& img) {
    TensorF out(img.shape);
    for (std::size_t i = 0; i < img.size(); ++i) out.v[i] = quantize8(img.v[i]);
    return out;
}

}  // namespace dg
