#pragma once

// Minimal convolutional building blocks with hand-written backward passes.
//
// Activations are stored as Eigen matrices with one row per channel and one
// column per (sample, y, x) position, column index (n * H + y) * W + x. In
// column-major storage that is channels-last, so an im2col patch is a run
// of contiguous channel vectors and every convolution is a single GEMM.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "colsig/error.hpp"

namespace colsig::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// "Same"-padded square convolution.
struct ConvShape {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 3;
    int stride = 1;
    int in_h = 1;
    int in_w = 1;

    int pad() const { return kernel / 2; }
    int out_h() const { return (in_h + 2 * pad() - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad() - kernel) / stride + 1; }
    int patch() const { return kernel * kernel * in_channels; }
    long weight_count() const { return static_cast<long>(out_channels) * patch(); }
};

/// Weight matrix (out x patch) followed by bias (out) inside a flat
/// parameter vector.
struct ConvLayer {
    ConvShape shape;
    long offset = 0;

    long weight_offset() const { return offset; }
    long bias_offset() const { return offset + shape.weight_count(); }
    long size() const { return shape.weight_count() + shape.out_channels; }
};

template <typename S>
void im2col(const Mat<S>& in, int batch, const ConvShape& g, Mat<S>& cols) {
    const int ho = g.out_h(), wo = g.out_w(), k = g.kernel, c = g.in_channels, p = g.pad();
    cols.resize(g.patch(), static_cast<long>(batch) * ho * wo);
    for (int n = 0; n < batch; ++n)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const long j = (static_cast<long>(n) * ho + oy) * wo + ox;
                S* dst = cols.col(j).data();
                // Taps along x are contiguous in the input, so copy each
                // kernel row as one run and zero what falls off the edge.
                const int x0 = ox * g.stride - p;
                const int lo = std::max(0, -x0), hi = std::min(k, g.in_w - x0);
                for (int ky = 0; ky < k; ++ky) {
                    S* row = dst + static_cast<long>(ky) * k * c;
                    const int y = oy * g.stride + ky - p;
                    if (y < 0 || y >= g.in_h || lo >= hi) {
                        std::fill(row, row + k * c, S(0));
                        continue;
                    }
                    std::fill(row, row + lo * c, S(0));
                    const S* src = in.col((static_cast<long>(n) * g.in_h + y) * g.in_w + x0 + lo).data();
                    std::copy(src, src + (hi - lo) * c, row + lo * c);
                    std::fill(row + hi * c, row + k * c, S(0));
                }
            }
}

/// Adjoint of im2col: scatters patch gradients back onto the input grid.
template <typename S>
void col2im(const Mat<S>& cols, int batch, const ConvShape& g, Mat<S>& in) {
    const int ho = g.out_h(), wo = g.out_w(), k = g.kernel, c = g.in_channels, p = g.pad();
    in.setZero(c, static_cast<long>(batch) * g.in_h * g.in_w);
    for (int n = 0; n < batch; ++n)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const long j = (static_cast<long>(n) * ho + oy) * wo + ox;
                const S* src = cols.col(j).data();
                const int x0 = ox * g.stride - p;
                const int lo = std::max(0, -x0), hi = std::min(k, g.in_w - x0);
                if (lo >= hi) continue;
                for (int ky = 0; ky < k; ++ky) {
                    const int y = oy * g.stride + ky - p;
                    if (y < 0 || y >= g.in_h) continue;
                    S* dst = in.col((static_cast<long>(n) * g.in_h + y) * g.in_w + x0 + lo).data();
                    const S* s = src + (static_cast<long>(ky) * k + lo) * c;
                    const long len = static_cast<long>(hi - lo) * c;
                    for (long i = 0; i < len; ++i) dst[i] += s[i];
                }
            }
}

template <typename S>
auto weights(const Vec<S>& params, const ConvLayer& l) {
    return Eigen::Map<const Mat<S>>(params.data() + l.weight_offset(), l.shape.out_channels, l.shape.patch());
}
template <typename S>
auto weights(Vec<S>& params, const ConvLayer& l) {
    return Eigen::Map<Mat<S>>(params.data() + l.weight_offset(), l.shape.out_channels, l.shape.patch());
}
template <typename S>
auto bias(const Vec<S>& params, const ConvLayer& l) {
    return Eigen::Map<const Vec<S>>(params.data() + l.bias_offset(), l.shape.out_channels);
}
template <typename S>
auto bias(Vec<S>& params, const ConvLayer& l) {
    return Eigen::Map<Vec<S>>(params.data() + l.bias_offset(), l.shape.out_channels);
}

/// pre = W * cols + b
template <typename S>
void conv_forward(const Vec<S>& params, const ConvLayer& l, const Mat<S>& cols, Mat<S>& pre) {
    pre.noalias() = weights(params, l) * cols;
    pre.colwise() += bias(params, l);
}

/// Accumulates dW and db from dpre and returns dcols = W^T dpre when asked.
template <typename S>
void conv_backward(const Vec<S>& params, const ConvLayer& l, const Mat<S>& cols, const Mat<S>& dpre, Vec<S>* grad,
                   Mat<S>* dcols, bool with_bias = true) {
    if (grad) {
        weights(*grad, l).noalias() += dpre * cols.transpose();
        if (with_bias) bias(*grad, l) += dpre.rowwise().sum();
    }
    if (dcols) dcols->noalias() = weights(params, l).transpose() * dpre;
}

/// Stride-1 "same" convolution without an im2col buffer: every kernel tap
/// is a small GEMM between W_tap and a row of input pixels shifted by the
/// tap offset. `in` is C_in x (N*H*W); pre becomes C_out x (N*H*W).
template <typename S>
void conv_same_forward(const Vec<S>& params, const ConvLayer& l, const Mat<S>& in, int batch, Mat<S>& pre) {
    const ConvShape& g = l.shape;
    const int k = g.kernel, c = g.in_channels, p = g.pad(), h = g.in_h, w = g.in_w;
    const auto W = weights(params, l);
    pre.resize(g.out_channels, static_cast<long>(batch) * h * w);
    pre.colwise() = bias(params, l);
    for (int n = 0; n < batch; ++n)
        for (int y = 0; y < h; ++y) {
            const long out_row = (static_cast<long>(n) * h + y) * w;
            for (int ky = 0; ky < k; ++ky) {
                const int sy = y + ky - p;
                if (sy < 0 || sy >= h) continue;
                const long in_row = (static_cast<long>(n) * h + sy) * w;
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - p;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    if (x0 >= x1) continue;
                    pre.middleCols(out_row + x0, x1 - x0).noalias() +=
                        W.middleCols((ky * k + kx) * c, c) * in.middleCols(in_row + x0 + dx, x1 - x0);
                }
            }
        }
}

/// Adjoint of conv_same_forward: accumulates dW, db into grad and writes
/// the input gradient into din when asked.
template <typename S>
void conv_same_backward(const Vec<S>& params, const ConvLayer& l, const Mat<S>& in, int batch, const Mat<S>& dpre,
                        Vec<S>* grad, Mat<S>* din) {
    const ConvShape& g = l.shape;
    const int k = g.kernel, c = g.in_channels, p = g.pad(), h = g.in_h, w = g.in_w;
    const auto W = weights(params, l);
    if (din) din->setZero(c, static_cast<long>(batch) * h * w);
    if (grad) bias(*grad, l) += dpre.rowwise().sum();
    for (int n = 0; n < batch; ++n)
        for (int y = 0; y < h; ++y) {
            const long out_row = (static_cast<long>(n) * h + y) * w;
            for (int ky = 0; ky < k; ++ky) {
                const int sy = y + ky - p;
                if (sy < 0 || sy >= h) continue;
                const long in_row = (static_cast<long>(n) * h + sy) * w;
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - p;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    if (x0 >= x1) continue;
                    const long t = static_cast<long>(ky * k + kx) * c;
                    const auto d = dpre.middleCols(out_row + x0, x1 - x0);
                    if (grad) weights(*grad, l).middleCols(t, c).noalias() += d * in.middleCols(in_row + x0 + dx, x1 - x0).transpose();
                    if (din) din->middleCols(in_row + x0 + dx, x1 - x0).noalias() += W.middleCols(t, c).transpose() * d;
                }
            }
        }
}

template <typename S>
S leaky_slope(const S& pre, S slope) {
    return pre > S(0) ? S(1) : slope;
}

template <typename S>
Mat<S> leaky_relu(const Mat<S>& pre, S slope) {
    return pre.unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
}

/// Multiplies `m` in place by the activation derivative evaluated at `pre`.
template <typename S>
void mul_leaky_derivative(Mat<S>& m, const Mat<S>& pre, S slope) {
    m = m.binaryExpr(pre, [slope](S d, S p) { return p > S(0) ? d : slope * d; });
}

/// Nearest-neighbour 2x upsampling.
template <typename S>
Mat<S> upsample2(const Mat<S>& in, int batch, int h, int w) {
    Mat<S> out(in.rows(), static_cast<long>(batch) * 4 * h * w);
    const int h2 = 2 * h, w2 = 2 * w;
    for (int n = 0; n < batch; ++n)
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x)
                out.col((static_cast<long>(n) * h2 + y) * w2 + x) = in.col((static_cast<long>(n) * h + y / 2) * w + x / 2);
    return out;
}

/// Adjoint of upsample2.
template <typename S>
Mat<S> upsample2_adjoint(const Mat<S>& d, int batch, int h, int w) {
    Mat<S> out = Mat<S>::Zero(d.rows(), static_cast<long>(batch) * h * w);
    const int h2 = 2 * h, w2 = 2 * w;
    for (int n = 0; n < batch; ++n)
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x)
                out.col((static_cast<long>(n) * h + y / 2) * w + x / 2) += d.col((static_cast<long>(n) * h2 + y) * w2 + x);
    return out;
}

/// Fills a weight block with N(0, gain^2 / fan_in).
template <typename S>
void kaiming_fill(Vec<S>& params, long offset, long count, int fan_in, double gain, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
    for (long i = 0; i < count; ++i) params[offset + i] = static_cast<S>(dist(rng));
}

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double epsilon = 1e-8;
};

template <typename S>
struct AdamState {
    Vec<S> m;
    Vec<S> v;
    long steps = 0;

    void reset(long n) {
        m = Vec<S>::Zero(n);
        v = Vec<S>::Zero(n);
        steps = 0;
    }
};

template <typename S>
void adam_step(Vec<S>& params, const Vec<S>& grad, AdamState<S>& st, const AdamConfig& cfg) {
    require(params.size() == grad.size() && st.m.size() == params.size(), ErrorKind::Shape, "optimizer size mismatch");
    ++st.steps;
    const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
    st.m = b1 * st.m + (S(1) - b1) * grad;
    st.v = b2 * st.v + (S(1) - b2) * grad.cwiseProduct(grad);
    const S c1 = S(1) - static_cast<S>(std::pow(cfg.beta1, static_cast<double>(st.steps)));
    const S c2 = S(1) - static_cast<S>(std::pow(cfg.beta2, static_cast<double>(st.steps)));
    const S lr = static_cast<S>(cfg.learning_rate), eps = static_cast<S>(cfg.epsilon);
    params.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps);
}

} // namespace colsig::nn
