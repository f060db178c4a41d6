#pragma once

// Separable Gaussian blur on row-major double buffers with symmetric
// reflection at the edges, plus its adjoint for backpropagation.

#include <algorithm>
#include <cmath>
#include <vector>

namespace colsig {

/// Normalized taps for offsets -r..r with r = max(1, ceil(3 sigma)).
inline std::vector<double> gaussian_taps(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) sum += (k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma)));
    for (double& v : k) v /= sum;
    return k;
}

namespace detail {

inline int reflect(int i, int n) {
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

// One 1D pass along x (step 1) or y (step width). With `adjoint` the taps
// scatter instead of gather.
inline std::vector<double> blur_pass(const std::vector<double>& in, int w, int h, const std::vector<double>& k,
                                     bool along_x, bool adjoint) {
    const int r = static_cast<int>(k.size() / 2);
    std::vector<double> out(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            double acc = 0.0;
            for (int d = -r; d <= r; ++d) {
                const std::size_t j = along_x ? static_cast<std::size_t>(y) * w + reflect(x + d, w)
                                              : static_cast<std::size_t>(reflect(y + d, h)) * w + x;
                if (adjoint)
                    out[j] += k[d + r] * in[i];
                else
                    acc += k[d + r] * in[j];
            }
            if (!adjoint) out[i] = acc;
        }
    return out;
}

} // namespace detail

inline std::vector<double> gaussian_blur(const std::vector<double>& in, int w, int h, double sigma = 1.0) {
    const auto k = gaussian_taps(sigma);
    return detail::blur_pass(detail::blur_pass(in, w, h, k, true, false), w, h, k, false, false);
}

/// Transpose of gaussian_blur as a linear map.
inline std::vector<double> gaussian_blur_adjoint(const std::vector<double>& in, int w, int h, double sigma = 1.0) {
    const auto k = gaussian_taps(sigma);
    return detail::blur_pass(detail::blur_pass(in, w, h, k, false, true), w, h, k, true, true);
}

} // namespace colsig
