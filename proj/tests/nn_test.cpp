#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "colsig/nn.hpp"
#include "test_util.hpp"

using namespace colsig;
using namespace colsig::nn;

namespace {

Mat<double> random_matrix(long r, long c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat<double> m(r, c);
    for (long j = 0; j < c; ++j)
        for (long i = 0; i < r; ++i) m(i, j) = u(rng);
    return m;
}

Vec<double> random_vector(long n, std::uint64_t seed) { return random_matrix(n, 1, seed).col(0); }

// Direct zero-padded cross-correlation with the patch ordering
// (ky, kx, channel) used by the weight matrix.
Mat<double> conv_naive(const Vec<double>& params, const ConvLayer& l, const Mat<double>& in, int batch) {
    const auto& g = l.shape;
    const int ho = g.out_h(), wo = g.out_w(), p = g.pad();
    Mat<double> out(g.out_channels, static_cast<long>(batch) * ho * wo);
    for (int n = 0; n < batch; ++n)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox)
                for (int o = 0; o < g.out_channels; ++o) {
                    double acc = params[l.bias_offset() + o];
                    for (int ky = 0; ky < g.kernel; ++ky)
                        for (int kx = 0; kx < g.kernel; ++kx)
                            for (int c = 0; c < g.in_channels; ++c) {
                                const int y = oy * g.stride + ky - p, x = ox * g.stride + kx - p;
                                if (y < 0 || x < 0 || y >= g.in_h || x >= g.in_w) continue;
                                const long col = (ky * g.kernel + kx) * g.in_channels + c;
                                acc += params[l.weight_offset() + col * g.out_channels + o] *
                                       in(c, (static_cast<long>(n) * g.in_h + y) * g.in_w + x);
                            }
                    out(o, (static_cast<long>(n) * ho + oy) * wo + ox) = acc;
                }
    return out;
}

ConvLayer layer(int cin, int cout, int k, int stride, int h, int w) {
    return ConvLayer{ConvShape{cin, cout, k, stride, h, w}, 0};
}

} // namespace

TEST(ConvShape, SamePaddingSizes) {
    ConvShape g{3, 8, 3, 2, 64, 256};
    EXPECT_EQ(g.out_h(), 32);
    EXPECT_EQ(g.out_w(), 128);
    EXPECT_EQ(g.patch(), 27);
    g.stride = 1;
    EXPECT_EQ(g.out_h(), 64);
    g = {1, 1, 5, 2, 7, 9};
    EXPECT_EQ(g.out_h(), 4);
    EXPECT_EQ(g.out_w(), 5);
}

TEST(Im2col, GemmMatchesDirectConvolution) {
    for (int stride : {1, 2}) {
        for (int k : {3, 5}) {
            const auto l = layer(3, 4, k, stride, 7, 10);
            const auto params = random_vector(l.size(), 1 + stride * 10 + k);
            const auto in = random_matrix(3, 2L * 7 * 10, 99);
            Mat<double> cols, pre;
            im2col(in, 2, l.shape, cols);
            conv_forward(params, l, cols, pre);
            EXPECT_LT((pre - conv_naive(params, l, in, 2)).cwiseAbs().maxCoeff(), 1e-12) << "stride " << stride << " k " << k;
        }
    }
}

TEST(Im2col, Col2imIsAdjoint) {
    for (int stride : {1, 2}) {
        const ConvShape g{2, 1, 3, stride, 5, 9};
        const auto x = random_matrix(2, 3L * 5 * 9, 3);
        Mat<double> cols, back;
        im2col(x, 3, g, cols);
        const auto y = random_matrix(cols.rows(), cols.cols(), 4);
        col2im(y, 3, g, back);
        const double lhs = (cols.array() * y.array()).sum();
        const double rhs = (x.array() * back.array()).sum();
        EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs) + 1e-12);
    }
}

TEST(ConvSame, ForwardMatchesDirectConvolution) {
    for (int k : {1, 3, 5}) {
        const auto l = layer(3, 2, k, 1, 4, 11);
        const auto params = random_vector(l.size(), 20 + k);
        const auto in = random_matrix(3, 2L * 4 * 11, 21);
        Mat<double> pre;
        conv_same_forward(params, l, in, 2, pre);
        EXPECT_LT((pre - conv_naive(params, l, in, 2)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(ConvSame, BackwardMatchesIm2colPath) {
    const auto l = layer(3, 4, 3, 1, 6, 8);
    const auto params = random_vector(l.size(), 30);
    const auto in = random_matrix(3, 2L * 6 * 8, 31);
    const auto dpre = random_matrix(4, 2L * 6 * 8, 32);

    Vec<double> g1 = Vec<double>::Zero(l.size()), g2 = Vec<double>::Zero(l.size());
    Mat<double> din1, din2, cols, dcols;
    conv_same_backward(params, l, in, 2, dpre, &g1, &din1);
    im2col(in, 2, l.shape, cols);
    conv_backward(params, l, cols, dpre, &g2, &dcols);
    col2im(dcols, 2, l.shape, din2);
    EXPECT_LT((g1 - g2).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LT((din1 - din2).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(ConvSame, WeightGradientMatchesFiniteDifferences) {
    const auto l = layer(2, 2, 3, 1, 3, 5);
    auto params = random_vector(l.size(), 40);
    const auto in = random_matrix(2, 15, 41);
    const auto probe = random_matrix(2, 15, 42);
    auto f = [&] {
        Mat<double> pre;
        conv_same_forward(params, l, in, 1, pre);
        return (pre.array() * probe.array()).sum();
    };
    Vec<double> grad = Vec<double>::Zero(l.size());
    conv_same_backward<double>(params, l, in, 1, probe, &grad, nullptr);
    for (long i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + 1e-6;
        const double up = f();
        params[i] = keep - 1e-6;
        const double down = f();
        params[i] = keep;
        EXPECT_NEAR(grad[i], (up - down) / 2e-6, 1e-7);
    }
}

TEST(Upsample, DuplicatesPixelsAndAdjointSums) {
    const auto x = random_matrix(2, 2L * 3 * 4, 50);
    const auto up = upsample2(x, 2, 3, 4);
    ASSERT_EQ(up.cols(), 2L * 6 * 8);
    EXPECT_EQ(up.col(1 * 48 + 5 * 8 + 7), x.col(1 * 12 + 2 * 4 + 3));
    const auto y = random_matrix(2, up.cols(), 51);
    const double lhs = (up.array() * y.array()).sum();
    const double rhs = (x.array() * upsample2_adjoint(y, 2, 3, 4).array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(LeakyRelu, ValuesAndDerivative) {
    Mat<double> pre(1, 3);
    pre << -2.0, 0.0, 3.0;
    const auto a = leaky_relu(pre, 0.2);
    EXPECT_DOUBLE_EQ(a(0, 0), -0.4);
    EXPECT_DOUBLE_EQ(a(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(a(0, 2), 3.0);
    Mat<double> d = Mat<double>::Ones(1, 3);
    mul_leaky_derivative(d, pre, 0.2);
    EXPECT_DOUBLE_EQ(d(0, 0), 0.2);
    EXPECT_DOUBLE_EQ(d(0, 1), 0.2);
    EXPECT_DOUBLE_EQ(d(0, 2), 1.0);
}

TEST(Adam, FirstStepsMatchHandComputation) {
    AdamConfig cfg{0.1, 0.5, 0.9, 1e-8};
    Vec<double> p(2);
    p << 1.0, -1.0;
    AdamState<double> st;
    st.reset(2);
    Vec<double> g(2);
    g << 2.0, -0.5;
    adam_step(p, g, st, cfg);
    // Bias correction makes the first step exactly lr * sign(g).
    EXPECT_NEAR(p[0], 0.9, 1e-8);
    EXPECT_NEAR(p[1], -0.9, 1e-8);

    Vec<double> g2(2);
    g2 << 1.0, 1.0;
    adam_step(p, g2, st, cfg);
    const double m0 = (0.5 * (0.5 * 2.0) + 0.5 * 1.0) / (1 - 0.25);
    const double v0 = (0.9 * (0.1 * 4.0) + 0.1 * 1.0) / (1 - 0.81);
    const double p1 = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
    EXPECT_NEAR(p[0], p1 - 0.1 * m0 / (std::sqrt(v0) + 1e-8), 1e-12);
    EXPECT_EQ(st.steps, 2);
}

TEST(Adam, SizeMismatchIsShapeError) {
    Vec<double> p = Vec<double>::Zero(3), g = Vec<double>::Zero(2);
    AdamState<double> st;
    st.reset(3);
    EXPECT_COLSIG_ERROR(adam_step(p, g, st, AdamConfig{}), ErrorKind::Shape);
}
