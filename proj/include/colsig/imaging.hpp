#pragma once

// Scan normalization: hysteresis thresholding, median filtering, dilation
// and canvas fitting of signature rasters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "colsig/dataset.hpp"
#include "colsig/error.hpp"
#include "colsig/grid.hpp"

namespace colsig {

struct Canvas {
    int height = 64;
    int width = 256;
    friend bool operator==(const Canvas&, const Canvas&) = default;
};

struct PreprocessParams {
    float low_thresh = 0.3f;
    float high_thresh = 0.6f;
    int median_window = 3;
    double target_stroke_width = 2.0;
    Canvas canvas{};
    int margin = 4;
    int max_dilations = 5;

    void validate() const {
        require(low_thresh >= 0.0f && high_thresh <= 1.0f && low_thresh < high_thresh, ErrorKind::Parameter,
                "thresholds must satisfy 0 <= low < high <= 1");
        require(median_window >= 1 && median_window % 2 == 1, ErrorKind::Parameter, "median window must be odd and >= 1");
        require(target_stroke_width > 0.0, ErrorKind::Parameter, "target stroke width must be positive");
        require(canvas.width >= 1 && canvas.height >= 1, ErrorKind::Parameter, "canvas must be nonempty");
        require(margin >= 0, ErrorKind::Parameter, "margin must be >= 0");
    }
};

struct ProcessedSignature {
    BinaryMask mask;
    std::string source_id;
    Community community = Community::University;
    double stroke_width_estimate = 0.0;
};

/// Pixels >= high seed the foreground; pixels >= low join when
/// 8-connected (transitively) to a seed.
inline BinaryMask hysteresis_threshold(const RasterImage& img, float low, float high) {
    require(low >= 0.0f && high <= 1.0f && low < high, ErrorKind::Parameter,
            "hysteresis thresholds must satisfy 0 <= low < high <= 1");
    BinaryMask out(img.width, img.height, 0);
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img(x, y) >= high && !out(x, y)) {
                out(x, y) = 1;
                stack.emplace_back(x, y);
                while (!stack.empty()) {
                    auto [cx, cy] = stack.back();
                    stack.pop_back();
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int nx = cx + dx, ny = cy + dy;
                            if (!img.contains(nx, ny) || out(nx, ny) || img(nx, ny) < low) continue;
                            out(nx, ny) = 1;
                            stack.emplace_back(nx, ny);
                        }
                }
            }
    return out;
}

namespace detail {

// Symmetric reflection (d c b a | a b c d | d c b a), valid for any offset.
inline int reflect_index(int i, int n) {
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

} // namespace detail

/// Majority vote over a window x window neighborhood, edges reflected.
inline BinaryMask median_filter(const BinaryMask& mask, int window) {
    require(window >= 1 && window % 2 == 1, ErrorKind::Parameter, "median window must be odd and >= 1");
    if (window == 1) return mask;
    const int r = window / 2;
    const int w = mask.width, h = mask.height;
    // Row sums over the horizontal window, then column sums.
    std::vector<int> rows(mask.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int s = 0;
            for (int d = -r; d <= r; ++d) s += mask(detail::reflect_index(x + d, w), y);
            rows[static_cast<std::size_t>(y) * w + x] = s;
        }
    BinaryMask out(w, h, 0);
    const int half = window * window / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int s = 0;
            for (int d = -r; d <= r; ++d) s += rows[static_cast<std::size_t>(detail::reflect_index(y + d, h)) * w + x];
            out(x, y) = s > half ? 1 : 0;
        }
    return out;
}

/// Square structuring element of side 2*radius+1; outside the image is background.
inline BinaryMask dilate(const BinaryMask& mask, int radius) {
    require(radius >= 0, ErrorKind::Parameter, "dilation radius must be >= 0");
    if (radius == 0) return mask;
    const int w = mask.width, h = mask.height;
    BinaryMask tmp(w, h, 0), out(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (int d = std::max(0, x - radius); d <= std::min(w - 1, x + radius) && !v; ++d) v = mask(d, y);
            tmp(x, y) = v;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (int d = std::max(0, y - radius); d <= std::min(h - 1, y + radius) && !v; ++d) v = tmp(x, d);
            out(x, y) = v;
        }
    return out;
}

/// Zhang-Suen thinning to an 8-connected one-pixel skeleton.
inline BinaryMask thin(const BinaryMask& mask) {
    BinaryMask m = mask;
    const int w = m.width, h = m.height;
    auto at = [&](int x, int y) -> int { return m.contains(x, y) ? m(x, y) : 0; };
    std::vector<std::size_t> marked;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            marked.clear();
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (!m(x, y)) continue;
                    // P2..P9 clockwise from north.
                    const std::array<int, 8> p{at(x, y - 1), at(x + 1, y - 1), at(x + 1, y),     at(x + 1, y + 1),
                                               at(x, y + 1), at(x - 1, y + 1), at(x - 1, y), at(x - 1, y - 1)};
                    int b = 0, a = 0;
                    for (int i = 0; i < 8; ++i) {
                        b += p[i];
                        if (!p[i] && p[(i + 1) % 8]) ++a;
                    }
                    if (b < 2 || b > 6 || a != 1) continue;
                    if (pass == 0 && ((p[0] && p[2] && p[4]) || (p[2] && p[4] && p[6]))) continue;
                    if (pass == 1 && ((p[0] && p[2] && p[6]) || (p[0] && p[4] && p[6]))) continue;
                    marked.push_back(static_cast<std::size_t>(y) * w + x);
                }
            for (auto i : marked) m.data[i] = 0;
            changed = changed || !marked.empty();
        }
    }
    return m;
}

/// Geometric length of an 8-connected skeleton: orthogonal links count 1,
/// diagonal links sqrt(2) unless an orthogonal two-step path already joins
/// the pair. One pixel is added for the stroke end caps.
inline double skeleton_length(const BinaryMask& skel) {
    double len = 0.0;
    bool any = false;
    auto on = [&](int x, int y) { return skel.contains(x, y) && skel(x, y); };
    for (int y = 0; y < skel.height; ++y)
        for (int x = 0; x < skel.width; ++x) {
            if (!skel(x, y)) continue;
            any = true;
            if (on(x + 1, y)) len += 1.0;
            if (on(x, y + 1)) len += 1.0;
            if (on(x + 1, y + 1) && !on(x + 1, y) && !on(x, y + 1)) len += std::sqrt(2.0);
            if (on(x - 1, y + 1) && !on(x - 1, y) && !on(x, y + 1)) len += std::sqrt(2.0);
        }
    return any ? len + 1.0 : 0.0;
}

/// Foreground area divided by skeleton length.
inline double estimate_stroke_width(const BinaryMask& mask) {
    const auto area = count_foreground(mask);
    if (area == 0) throw Error(ErrorKind::EmptySignature, "stroke width of an empty mask is undefined");
    return static_cast<double>(area) / std::max(1.0, skeleton_length(thin(mask)));
}

struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1; // inclusive
    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    bool empty() const { return x1 < x0 || y1 < y0; }
};

inline BoundingBox bounding_box(const BinaryMask& m) {
    BoundingBox b{m.width, m.height, -1, -1};
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m(x, y)) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x);
                b.y1 = std::max(b.y1, y);
            }
    return b;
}

/// Crops `box` grown by `margin`, scales it aspect-preserving onto the
/// canvas and centers it. Pixels are resampled by area coverage; the
/// coverage cut shrinks with the scale so thin strokes survive downsampling.
inline BinaryMask fit_to_canvas(const BinaryMask& m, BoundingBox box, int margin, Canvas canvas) {
    const double bx0 = box.x0 - margin, by0 = box.y0 - margin;
    const double bw = box.width() + 2.0 * margin, bh = box.height() + 2.0 * margin;
    const double s = std::min(canvas.width / bw, canvas.height / bh);
    const int tw = std::clamp(static_cast<int>(std::lround(bw * s)), 1, canvas.width);
    const int th = std::clamp(static_cast<int>(std::lround(bh * s)), 1, canvas.height);
    const int ox = (canvas.width - tw) / 2, oy = (canvas.height - th) / 2;
    const double cut = 0.5 * std::min(1.0, s);

    auto src = [&](int x, int y) -> double { return m.contains(x, y) ? m(x, y) : 0.0; };
    BinaryMask out(canvas.width, canvas.height, 0);
    for (int ty = 0; ty < th; ++ty) {
        const double sy0 = by0 + ty / s, sy1 = by0 + (ty + 1) / s;
        for (int tx = 0; tx < tw; ++tx) {
            const double sx0 = bx0 + tx / s, sx1 = bx0 + (tx + 1) / s;
            double acc = 0.0;
            for (int y = static_cast<int>(std::floor(sy0)); y < static_cast<int>(std::ceil(sy1)); ++y) {
                const double wy = std::min<double>(y + 1, sy1) - std::max<double>(y, sy0);
                if (wy <= 0) continue;
                for (int x = static_cast<int>(std::floor(sx0)); x < static_cast<int>(std::ceil(sx1)); ++x) {
                    const double wx = std::min<double>(x + 1, sx1) - std::max<double>(x, sx0);
                    if (wx > 0) acc += wx * wy * src(x, y);
                }
            }
            const double coverage = acc * s * s;
            out(ox + tx, oy + ty) = coverage >= cut - 1e-12 ? 1 : 0;
        }
    }
    return out;
}

inline double canvas_scale(BoundingBox box, int margin, Canvas canvas) {
    return std::min(canvas.width / (box.width() + 2.0 * margin), canvas.height / (box.height() + 2.0 * margin));
}

/// threshold -> median -> radius-1 dilations until the stroke width, in
/// canvas pixels, reaches the target -> canvas fit. If resampling thins the
/// strokes below the target, the unused dilation budget is spent on the canvas.
inline ProcessedSignature normalize_signature(const RasterImage& img, const PreprocessParams& params,
                                              std::string source_id, Community community) {
    params.validate();
    require(!img.empty(), ErrorKind::Shape, "empty image");
    BinaryMask mask = hysteresis_threshold(img, params.low_thresh, params.high_thresh);
    mask = median_filter(mask, params.median_window);
    if (count_foreground(mask) == 0) throw FaintScanError(std::move(source_id));

    int budget = params.max_dilations;
    for (; budget > 0; --budget) {
        const double s = canvas_scale(bounding_box(mask), params.margin, params.canvas);
        if (estimate_stroke_width(mask) * s >= params.target_stroke_width) break;
        mask = dilate(mask, 1);
    }

    mask = fit_to_canvas(mask, bounding_box(mask), params.margin, params.canvas);
    if (count_foreground(mask) == 0) throw FaintScanError(std::move(source_id));

    double width = estimate_stroke_width(mask);
    for (; budget > 0 && width < params.target_stroke_width; --budget) {
        BinaryMask next = dilate(mask, 1);
        if (foreground_fraction(next) >= 0.5) break;
        mask = std::move(next);
        width = estimate_stroke_width(mask);
    }
    const double frac = foreground_fraction(mask);
    if (!(frac > 0.0 && frac < 0.5))
        throw Error(ErrorKind::Parameter, "'" + source_id + "' covers too much of the canvas to be a signature");
    return ProcessedSignature{std::move(mask), std::move(source_id), community, width};
}

} // namespace colsig
