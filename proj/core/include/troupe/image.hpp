#pragma once

#include "troupe/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace troupe {

// Images are Tensor [H,W,3], videos Tensor [F,H,W,3], values in [0,1].
// Byte mapping is b/256 both ways: every decoded value is an exact multiple
// of 2^-16, and quantize(decode(b)) == b.
inline uint8_t quantize_byte(float x) {
    if (x <= 0.0f) return 0;
    if (x >= 1.0f) return 255;
    const long v = std::lround(static_cast<double>(x) * 256.0);
    return static_cast<uint8_t>(v > 255 ? 255 : v);
}
inline float byte_to_float(uint8_t b) {
    return static_cast<float>(b) / 256.0f;
}

struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> v;  // 0 or 1

    Mask() = default;
    Mask(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}
    uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    int64_t count() const;
    Mask dilated(int radius) const;
};

void write_png(const std::string& path, const Tensor& image);   // [H,W,3]
Tensor read_png(const std::string& path);                       // [H,W,3]
void write_png_mask(const std::string& path, const Mask& m);
Mask read_png_mask(const std::string& path);

// animated GIF, fixed 216-color cube palette, infinite loop
void write_gif(const std::string& path, const Tensor& video, int delay_cs = 12);  // [F,H,W,3]

// tile video frames into one [H*rows, W*cols, 3] contact sheet
Tensor frame_grid(const Tensor& video, int cols);

}  // namespace troupe
