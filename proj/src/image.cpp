#include "lvm/image.hpp"

#include <cstdio>
#include <fstream>

#include "lvm/errors.hpp"

namespace lvm {

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) {
        throw IoError("short write: " + path);
    }
}

namespace {

int read_ppm_int(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comment lines, per the PPM grammar.
    int c = in.get();
    while (c != EOF && (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') {
                c = in.get();
            }
        }
        c = in.get();
    }
    if (c == EOF || c < '0' || c > '9') {
        throw FormatError("malformed PPM header: " + path);
    }
    int v = 0;
    while (c >= '0' && c <= '9') {
        v = v * 10 + (c - '0');
        if (v > 1 << 20) {
            throw FormatError("PPM dimension out of range: " + path);
        }
        c = in.get();
    }
    return v;
}

} // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '6') {
        throw FormatError("not a P6 PPM: " + path);
    }
    const int w = read_ppm_int(in, path);
    const int h = read_ppm_int(in, path);
    const int maxval = read_ppm_int(in, path);
    if (maxval != 255) {
        throw FormatError("unsupported PPM maxval (want 255): " + path);
    }
    Image img(w, h);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
        throw FormatError("truncated PPM pixel data: " + path);
    }
    return img;
}

double image_mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) {
        throw DimensionError("image_mse: size mismatch " + std::to_string(a.width) + "x" +
                             std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                             std::to_string(b.height));
    }
    double acc = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = (static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i])) / 255.0;
        acc += d * d;
    }
    return a.rgb.empty() ? 0.0 : acc / static_cast<double>(a.rgb.size());
}

} // namespace lvm
