#pragma once

// Shared primitives: error type, 2-D grids, points, seeded RNG.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pbd {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw Error(msg);
}

struct Pt {
    double x = 0.0;  // column coordinate, pixel units
    double y = 0.0;  // row coordinate, pixel units
};

inline double dist(const Pt& a, const Pt& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// Dense row-major H x W grid. Used for images, masks and probability maps.
template <class T>
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int height, int width, T fill = T{})
        : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {
        require(height >= 0 && width >= 0, "grid dimensions must be non-negative");
    }

    T& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
    const T& at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
    bool inside(int r, int c) const { return r >= 0 && r < h && c >= 0 && c < w; }
    size_t size() const { return v.size(); }
};

using MaskU8 = Grid<uint8_t>;   // binary labels, values {0,1}
using ImageU8 = Grid<uint8_t>;  // 8-bit grayscale
using MapF = Grid<double>;      // probability / intensity maps

// Deterministic RNG. mt19937_64 supplies the bit stream (fully specified by the
// standard); the value transforms below are spelled out here so sampled doubles
// do not depend on libstdc++'s distribution internals.
struct Rng {
    std::mt19937_64 eng;

    explicit Rng(uint64_t seed = 0) : eng(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        require(hi >= lo, "uniform_int: empty range");
        auto span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        return lo + static_cast<int>(eng() % span);
    }

    // Box-Muller; spare value discarded to keep the state trivially seedable.
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + sd * z;
    }

    double normal_clipped(double mean, double sd, double lo, double hi) {
        double z = normal(mean, sd);
        return std::min(hi, std::max(lo, z));
    }

    bool coin(double p_true = 0.5) { return uniform() < p_true; }

    template <class T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = eng() % i;
            std::swap(xs[i - 1], xs[j]);
        }
    }
};

// Linear map between pixel frames that keeps corner pixel centers fixed.
inline double map_coord(double x, int in_extent, int out_extent) {
    if (in_extent == out_extent) return x;
    if (in_extent <= 1 || out_extent <= 1) return 0.0;
    return x * static_cast<double>(out_extent - 1) / static_cast<double>(in_extent - 1);
}

inline Pt map_point(const Pt& p, int in_w, int in_h, int out_w, int out_h) {
    return {map_coord(p.x, in_w, out_w), map_coord(p.y, in_h, out_h)};
}

}  // namespace pbd
