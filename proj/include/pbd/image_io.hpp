#pragma once

// 8-bit grayscale image I/O (binary PGM, P5) and the resize used to feed the
// network. No external image libraries.

#include <cstdio>
#include <fstream>
#include <string>

#include "pbd/core.hpp"

namespace pbd {

inline void write_pgm(const std::string& path, const ImageU8& img) {
    require(img.h > 0 && img.w > 0, "write_pgm: empty image");
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "write_pgm: cannot open " + path);
    f << "P5\n" << img.w << " " << img.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.v.data()), static_cast<std::streamsize>(img.v.size()));
    require(f.good(), "write_pgm: write failed for " + path);
}

inline ImageU8 read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "read_pgm: cannot open " + path);
    std::string magic;
    f >> magic;
    require(magic == "P5", "read_pgm: not a binary PGM: " + path);
    auto next_int = [&]() {
        // skip whitespace and '#' comment lines
        int ch = f.get();
        while (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t' || ch == '#') {
            if (ch == '#')
                while (ch != '\n' && ch != EOF) ch = f.get();
            ch = f.get();
        }
        int val = 0;
        bool any = false;
        while (ch >= '0' && ch <= '9') {
            val = val * 10 + (ch - '0');
            any = true;
            ch = f.get();
        }
        require(any, "read_pgm: malformed header in " + path);
        return val;
    };
    int w = next_int(), h = next_int(), maxval = next_int();
    require(w > 0 && h > 0, "read_pgm: bad dimensions in " + path);
    require(maxval == 255, "read_pgm: only 8-bit images are supported: " + path);
    ImageU8 img(h, w);
    f.read(reinterpret_cast<char*>(img.v.data()), static_cast<std::streamsize>(img.v.size()));
    require(f.gcount() == static_cast<std::streamsize>(img.v.size()),
            "read_pgm: truncated pixel data in " + path);
    return img;
}

// Grayscale [0,255] -> [0,1].
inline MapF to_unit(const ImageU8& img) {
    MapF out(img.h, img.w);
    for (size_t i = 0; i < img.v.size(); ++i) out.v[i] = img.v[i] / 255.0;
    return out;
}

// Bilinear resize with corner pixel centers pinned, matching map_coord so
// images and coordinates transform consistently.
inline MapF resize_bilinear(const MapF& src, int out_h, int out_w) {
    require(out_h > 0 && out_w > 0, "resize_bilinear: bad target size");
    MapF dst(out_h, out_w);
    if (src.h == out_h && src.w == out_w) {
        dst.v = src.v;
        return dst;
    }
    double sy = out_h > 1 ? double(src.h - 1) / (out_h - 1) : 0.0;
    double sx = out_w > 1 ? double(src.w - 1) / (out_w - 1) : 0.0;
    for (int r = 0; r < out_h; ++r) {
        double fy = r * sy;
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, src.h - 1);
        double wy = fy - y0;
        for (int c = 0; c < out_w; ++c) {
            double fx = c * sx;
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, src.w - 1);
            double wx = fx - x0;
            double top = src.at(y0, x0) * (1 - wx) + src.at(y0, x1) * wx;
            double bot = src.at(y1, x0) * (1 - wx) + src.at(y1, x1) * wx;
            dst.at(r, c) = top * (1 - wy) + bot * wy;
        }
    }
    return dst;
}

}  // namespace pbd
