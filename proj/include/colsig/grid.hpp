#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "colsig/error.hpp"

namespace colsig {

/// Row-major 2D grid. Index (x, y) with x along the width.
template <typename T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
        require(w >= 1 && h >= 1, ErrorKind::Shape, "grid dimensions must be >= 1");
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    T& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const auto& other) const { return width == other.width && height == other.height; }

    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Grayscale intensities in [0,1]; 1 is ink.
using RasterImage = Grid<float>;
/// {0,1} per pixel; 1 is stroke foreground.
using BinaryMask = Grid<std::uint8_t>;

inline std::size_t count_foreground(const BinaryMask& m) {
    return static_cast<std::size_t>(std::count(m.data.begin(), m.data.end(), std::uint8_t{1}));
}

inline double foreground_fraction(const BinaryMask& m) {
    return m.empty() ? 0.0 : static_cast<double>(count_foreground(m)) / static_cast<double>(m.size());
}

inline RasterImage to_intensity(const BinaryMask& m) {
    RasterImage out(m.width, m.height);
    std::transform(m.data.begin(), m.data.end(), out.data.begin(), [](std::uint8_t b) { return b ? 1.0f : 0.0f; });
    return out;
}

inline BinaryMask binarize(const RasterImage& img, float cut = 0.5f) {
    BinaryMask out(img.width, img.height);
    std::transform(img.data.begin(), img.data.end(), out.data.begin(),
                   [cut](float v) { return static_cast<std::uint8_t>(v > cut ? 1 : 0); });
    return out;
}

} // namespace colsig
