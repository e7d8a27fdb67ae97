#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lvm {

// Tightly packed 8-bit RGB raster, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0) {}

    uint8_t* at(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const uint8_t* at(int x, int y) const {
        return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
    }

    void set(int x, int y, const std::array<uint8_t, 3>& c) {
        uint8_t* p = at(x, y);
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }

    bool operator==(const Image& o) const {
        return width == o.width && height == o.height && rgb == o.rgb;
    }
};

// ITU-R 601 luma, rounded to the nearest integer.
inline uint8_t luma_byte(uint8_t r, uint8_t g, uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    int v = static_cast<int>(y + 0.5);
    if (v > 255) {
        v = 255;
    }
    return static_cast<uint8_t>(v);
}

// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Mean squared error over channels with pixels scaled to [0,1].
double image_mse(const Image& a, const Image& b);

} // namespace lvm
