#pragma once

// Generator and critic networks for the Wasserstein GAN, plus the
// critic/generator objectives and the gradient penalty.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "colsig/error.hpp"
#include "colsig/grid.hpp"
#include "colsig/nn.hpp"

namespace colsig {

using nn::Mat;
using nn::RowVec;
using nn::Vec;

struct GeneratorConfig {
    int latent_dim = 5;
    int seed_height = 1;
    int seed_width = 4;
    /// Output channels of each convolution; every layer but the last is
    /// followed by LeakyReLU and 2x nearest upsampling, the last by a sigmoid.
    std::vector<int> channels{256, 128, 64, 32, 16, 8, 1};
    int kernel_size = 3;
    double negative_slope = 0.2;

    int layers() const { return static_cast<int>(channels.size()); }
    int out_height() const { return seed_height << (layers() - 1); }
    int out_width() const { return seed_width << (layers() - 1); }

    /// Structural checks shared by every generator.
    void check() const {
        require(latent_dim >= 1, ErrorKind::Parameter, "latent_dim must be >= 1");
        require(seed_height >= 1 && seed_width >= 1, ErrorKind::Parameter, "seed grid must be nonempty");
        require(layers() >= 1 && channels.back() == 1, ErrorKind::Parameter, "generator must end in one channel");
        for (int c : channels) require(c >= 1, ErrorKind::Parameter, "channel counts must be positive");
        require(kernel_size >= 1 && kernel_size % 2 == 1, ErrorKind::Parameter, "kernel size must be odd");
        require(negative_slope >= 0.0, ErrorKind::Parameter, "negative slope must be >= 0");
    }
    /// The production architecture: 7 layers landing on the run canvas.
    void validate(int canvas_height, int canvas_width) const {
        check();
        require(layers() == 7, ErrorKind::Parameter, "generator must have 7 layers");
        require(out_height() == canvas_height && out_width() == canvas_width, ErrorKind::Parameter,
                "generator output " + std::to_string(out_height()) + "x" + std::to_string(out_width()) +
                    " does not match the canvas");
    }
};

struct CriticConfig {
    int height = 64;
    int width = 256;
    /// Output channels of the stride-2 convolutions followed by the scalar
    /// head (last entry, always 1).
    std::vector<int> channels{8, 16, 32, 64, 128, 256, 1};
    int kernel_size = 3;
    int stride = 2;
    double negative_slope = 0.2;

    int layers() const { return static_cast<int>(channels.size()); }
    int conv_layers() const { return layers() - 1; }

    void check() const {
        require(layers() >= 2 && channels.back() == 1, ErrorKind::Parameter,
                "critic needs at least one convolution and must end in a scalar head");
        for (int c : channels) require(c >= 1, ErrorKind::Parameter, "channel counts must be positive");
        require(kernel_size >= 1 && kernel_size % 2 == 1, ErrorKind::Parameter, "kernel size must be odd");
        require(stride >= 1, ErrorKind::Parameter, "stride must be >= 1");
        require(height >= 1 && width >= 1, ErrorKind::Parameter, "critic input must be nonempty");
    }
    void validate(int canvas_height, int canvas_width) const {
        check();
        require(layers() == 7, ErrorKind::Parameter, "critic must have 7 layers");
        require(height == canvas_height && width == canvas_width, ErrorKind::Parameter,
                "critic input does not match the canvas");
    }
};

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
    j = {{"latent_dim", c.latent_dim},       {"seed_height", c.seed_height}, {"seed_width", c.seed_width},
         {"channels", c.channels},           {"kernel_size", c.kernel_size}, {"negative_slope", c.negative_slope}};
}
inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.seed_height = j.value("seed_height", c.seed_height);
    c.seed_width = j.value("seed_width", c.seed_width);
    c.channels = j.value("channels", c.channels);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.negative_slope = j.value("negative_slope", c.negative_slope);
}
inline void to_json(nlohmann::json& j, const CriticConfig& c) {
    j = {{"height", c.height},           {"width", c.width},   {"channels", c.channels},
         {"kernel_size", c.kernel_size}, {"stride", c.stride}, {"negative_slope", c.negative_slope}};
}
inline void from_json(const nlohmann::json& j, CriticConfig& c) {
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.channels = j.value("channels", c.channels);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.stride = j.value("stride", c.stride);
    c.negative_slope = j.value("negative_slope", c.negative_slope);
}

/// Maps latent columns (latent_dim x N) to image columns (H*W x N, each a
/// row-major image in [0,1]).
template <typename S>
class Generator {
public:
    struct Cache {
        int batch = 0;
        Mat<S> z;
        std::vector<Mat<S>> inputs;
        std::vector<Mat<S>> pre;
        Mat<S> out;
    };

    explicit Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.check();
        const int seed_c = cfg_.channels.front();
        proj_rows_ = static_cast<long>(seed_c) * cfg_.seed_height * cfg_.seed_width;
        long offset = proj_rows_ * cfg_.latent_dim + proj_rows_;
        int h = cfg_.seed_height, w = cfg_.seed_width, cin = seed_c;
        for (int l = 0; l < cfg_.layers(); ++l) {
            nn::ConvLayer layer{{cin, cfg_.channels[l], cfg_.kernel_size, 1, h, w}, offset};
            offset += layer.size();
            layers_.push_back(layer);
            cin = cfg_.channels[l];
            if (l + 1 < cfg_.layers()) {
                h *= 2;
                w *= 2;
            }
        }
        params_ = Vec<S>::Zero(offset);
    }

    const GeneratorConfig& config() const { return cfg_; }
    Vec<S>& params() { return params_; }
    const Vec<S>& params() const { return params_; }
    int height() const { return cfg_.out_height(); }
    int width() const { return cfg_.out_width(); }
    long pixels() const { return static_cast<long>(height()) * width(); }
    /// Number of inputs consumed by the first (projection) layer.
    int input_size() const { return cfg_.latent_dim; }

    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        params_.setZero();
        nn::kaiming_fill(params_, 0, proj_rows_ * cfg_.latent_dim, cfg_.latent_dim, 1.0, rng);
        const double gain = std::sqrt(2.0 / (1.0 + cfg_.negative_slope * cfg_.negative_slope));
        for (int l = 0; l < cfg_.layers(); ++l) {
            const auto& layer = layers_[l];
            const bool last = l + 1 == cfg_.layers();
            nn::kaiming_fill(params_, layer.weight_offset(), layer.shape.weight_count(), layer.shape.patch(),
                             last ? 1.0 : gain, rng);
        }
    }

    Mat<S> forward(const Mat<S>& z, Cache* cache = nullptr) const {
        require(z.rows() == cfg_.latent_dim, ErrorKind::Shape,
                "latent vector length " + std::to_string(z.rows()) + " != " + std::to_string(cfg_.latent_dim));
        const int n = static_cast<int>(z.cols());
        Cache local;
        Cache& c = cache ? *cache : local;
        c.batch = n;
        c.z = z;
        c.inputs.assign(layers_.size(), {});
        c.pre.assign(layers_.size(), {});

        Mat<S> proj = proj_weight() * z;
        proj.colwise() += proj_bias();
        Mat<S> a = Eigen::Map<const Mat<S>>(proj.data(), cfg_.channels.front(),
                                            static_cast<long>(n) * cfg_.seed_height * cfg_.seed_width);
        const S slope = static_cast<S>(cfg_.negative_slope);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& L = layers_[l];
            nn::conv_same_forward(params_, L, a, n, c.pre[l]);
            if (cache) c.inputs[l] = std::move(a);
            if (l + 1 < layers_.size())
                a = nn::upsample2(nn::leaky_relu(c.pre[l], slope), n, L.shape.in_h, L.shape.in_w);
            else
                a = c.pre[l].unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
        }
        c.out = Eigen::Map<const Mat<S>>(a.data(), pixels(), n);
        return c.out;
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(images).
    void backward(const Cache& c, const Mat<S>& dimg, Vec<S>& grad) const {
        require(dimg.rows() == pixels() && dimg.cols() == c.batch, ErrorKind::Shape, "image gradient shape mismatch");
        require(grad.size() == params_.size(), ErrorKind::Shape, "gradient size mismatch");
        const int n = c.batch;
        const S slope = static_cast<S>(cfg_.negative_slope);
        Mat<S> d = dimg.cwiseProduct(c.out).cwiseProduct((Mat<S>::Ones(c.out.rows(), c.out.cols()) - c.out));
        d.resize(1, pixels() * n);
        Mat<S> da;
        for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
            const auto& L = layers_[l];
            if (l + 1 < static_cast<int>(layers_.size())) {
                d = nn::upsample2_adjoint(da, n, L.shape.in_h, L.shape.in_w);
                nn::mul_leaky_derivative(d, c.pre[l], slope);
            }
            nn::conv_same_backward(params_, L, c.inputs[l], n, d, &grad, &da);
        }
        Eigen::Map<const Mat<S>> dproj(da.data(), proj_rows_, n);
        Eigen::Map<Mat<S>>(grad.data(), proj_rows_, cfg_.latent_dim).noalias() += dproj * c.z.transpose();
        Eigen::Map<Vec<S>>(grad.data() + proj_rows_ * cfg_.latent_dim, proj_rows_) += dproj.rowwise().sum();
    }

    RasterImage generate(std::span<const double> z) const {
        require(static_cast<int>(z.size()) == cfg_.latent_dim, ErrorKind::Shape,
                "latent vector length " + std::to_string(z.size()) + " != " + std::to_string(cfg_.latent_dim));
        Mat<S> zm(cfg_.latent_dim, 1);
        for (int i = 0; i < cfg_.latent_dim; ++i) zm(i, 0) = static_cast<S>(z[i]);
        const Mat<S> img = forward(zm);
        RasterImage out(width(), height());
        for (long i = 0; i < pixels(); ++i) out.data[i] = static_cast<float>(img(i, 0));
        return out;
    }

private:
    auto proj_weight() const { return Eigen::Map<const Mat<S>>(params_.data(), proj_rows_, cfg_.latent_dim); }
    auto proj_bias() const {
        return Eigen::Map<const Vec<S>>(params_.data() + proj_rows_ * cfg_.latent_dim, proj_rows_);
    }

    GeneratorConfig cfg_;
    long proj_rows_ = 0;
    std::vector<nn::ConvLayer> layers_;
    Vec<S> params_;
};

/// Scores image columns (H*W x N) with an unbounded real per image.
///
/// Besides the ordinary backward pass, the critic supports a tangent
/// (forward-mode) pass: for a direction V it computes the directional
/// derivative D_V f = <grad_x f, V> per image, and the adjoint of that pass
/// yields d/dparams <grad_x f, V>. The gradient penalty's parameter gradient
/// is exactly that quantity with V = dPenalty/d(grad_x f).
template <typename S>
class Critic {
public:
    struct Cache {
        int batch = 0;
        std::vector<Mat<S>> cols;
        std::vector<Mat<S>> pre;
        Mat<S> features;
    };
    struct TangentCache {
        std::vector<Mat<S>> cols;
        Mat<S> features;
    };

    explicit Critic(CriticConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.check();
        int h = cfg_.height, w = cfg_.width, cin = 1;
        long offset = 0;
        for (int l = 0; l < cfg_.conv_layers(); ++l) {
            nn::ConvLayer layer{{cin, cfg_.channels[l], cfg_.kernel_size, cfg_.stride, h, w}, offset};
            offset += layer.size();
            layers_.push_back(layer);
            cin = cfg_.channels[l];
            h = layer.shape.out_h();
            w = layer.shape.out_w();
        }
        feature_rows_ = static_cast<long>(cin) * h * w;
        head_offset_ = offset;
        params_ = Vec<S>::Zero(offset + feature_rows_ + 1);
    }

    const CriticConfig& config() const { return cfg_; }
    Vec<S>& params() { return params_; }
    const Vec<S>& params() const { return params_; }
    long pixels() const { return static_cast<long>(cfg_.height) * cfg_.width; }

    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        params_.setZero();
        const double gain = std::sqrt(2.0 / (1.0 + cfg_.negative_slope * cfg_.negative_slope));
        for (const auto& layer : layers_)
            nn::kaiming_fill(params_, layer.weight_offset(), layer.shape.weight_count(), layer.shape.patch(), gain, rng);
        nn::kaiming_fill(params_, head_offset_, feature_rows_, static_cast<int>(feature_rows_), 1.0, rng);
    }

    RowVec<S> forward(const Mat<S>& x, Cache* cache = nullptr) const {
        require(x.rows() == pixels(), ErrorKind::Shape,
                "critic expects " + std::to_string(pixels()) + " pixels per image, got " + std::to_string(x.rows()));
        const int n = static_cast<int>(x.cols());
        Cache local;
        Cache& c = cache ? *cache : local;
        c.batch = n;
        c.cols.assign(layers_.size(), {});
        c.pre.assign(layers_.size(), {});
        Mat<S> a = Eigen::Map<const Mat<S>>(x.data(), 1, pixels() * n);
        const S slope = static_cast<S>(cfg_.negative_slope);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            nn::im2col(a, n, layers_[l].shape, c.cols[l]);
            nn::conv_forward(params_, layers_[l], c.cols[l], c.pre[l]);
            a = nn::leaky_relu(c.pre[l], slope);
        }
        c.features = Eigen::Map<const Mat<S>>(a.data(), feature_rows_, n);
        RowVec<S> s = head().transpose() * c.features;
        s.array() += head_bias();
        return s;
    }

    RowVec<S> scores(const Mat<S>& x) const { return forward(x); }

    /// Backpropagates per-image score seeds `ds`. Parameter gradients are
    /// accumulated into `grad` and input gradients written to `dx`; either
    /// may be null.
    void backward(const Cache& c, const RowVec<S>& ds, Vec<S>* grad, Mat<S>* dx) const {
        require(ds.size() == c.batch, ErrorKind::Shape, "score seed size mismatch");
        const int n = c.batch;
        const S slope = static_cast<S>(cfg_.negative_slope);
        if (grad) {
            head(*grad).noalias() += c.features * ds.transpose();
            (*grad)[head_offset_ + feature_rows_] += ds.sum();
        }
        Mat<S> da = head() * ds;
        const int last_c = layers_.back().shape.out_channels;
        da.resize(last_c, feature_rows_ * n / last_c);
        Mat<S> dcols;
        for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
            nn::mul_leaky_derivative(da, c.pre[l], slope);
            const bool need_input = l > 0 || dx;
            nn::conv_backward(params_, layers_[l], c.cols[l], da, grad, need_input ? &dcols : nullptr);
            if (need_input) nn::col2im(dcols, n, layers_[l].shape, da);
        }
        if (dx) {
            *dx = Eigen::Map<const Mat<S>>(da.data(), pixels(), n);
        }
    }

    /// Per-image input gradients (H*W x N).
    Mat<S> input_gradients(const Mat<S>& x) const {
        Cache c;
        forward(x, &c);
        Mat<S> dx;
        backward(c, RowVec<S>::Ones(c.batch), nullptr, &dx);
        return dx;
    }

    /// Directional derivative of every score along the matching column of `v`.
    RowVec<S> tangent_forward(const Cache& c, const Mat<S>& v, TangentCache& t) const {
        require(v.rows() == pixels() && v.cols() == c.batch, ErrorKind::Shape, "tangent shape mismatch");
        const int n = c.batch;
        const S slope = static_cast<S>(cfg_.negative_slope);
        t.cols.assign(layers_.size(), {});
        Mat<S> a = Eigen::Map<const Mat<S>>(v.data(), 1, pixels() * n);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            nn::im2col(a, n, layers_[l].shape, t.cols[l]);
            a.noalias() = nn::weights(params_, layers_[l]) * t.cols[l];
            nn::mul_leaky_derivative(a, c.pre[l], slope);
        }
        t.features = Eigen::Map<const Mat<S>>(a.data(), feature_rows_, n);
        return head().transpose() * t.features;
    }

    /// Accumulates d/dparams of sum_i dfdot_i * (D_{v_i} f)(x_i) into grad.
    /// LeakyReLU has zero curvature almost everywhere, so only the tangent
    /// chain carries parameter dependence; biases receive nothing.
    void tangent_backward(const Cache& c, const TangentCache& t, const RowVec<S>& dfdot, Vec<S>& grad) const {
        const int n = c.batch;
        const S slope = static_cast<S>(cfg_.negative_slope);
        head(grad).noalias() += t.features * dfdot.transpose();
        Mat<S> da = head() * dfdot;
        const int last_c = layers_.back().shape.out_channels;
        da.resize(last_c, feature_rows_ * n / last_c);
        Mat<S> dcols;
        for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
            nn::mul_leaky_derivative(da, c.pre[l], slope);
            nn::weights(grad, layers_[l]).noalias() += da * t.cols[l].transpose();
            if (l > 0) {
                dcols.noalias() = nn::weights(params_, layers_[l]).transpose() * da;
                nn::col2im(dcols, n, layers_[l].shape, da);
            }
        }
    }

private:
    auto head() const { return Eigen::Map<const Vec<S>>(params_.data() + head_offset_, feature_rows_); }
    auto head(Vec<S>& g) const { return Eigen::Map<Vec<S>>(g.data() + head_offset_, feature_rows_); }
    S head_bias() const { return params_[head_offset_ + feature_rows_]; }

    CriticConfig cfg_;
    std::vector<nn::ConvLayer> layers_;
    long feature_rows_ = 0;
    long head_offset_ = 0;
    Vec<S> params_;
};

template <typename S>
S critic_score(const Critic<S>& critic, const RasterImage& image) {
    require(image.width == critic.config().width && image.height == critic.config().height, ErrorKind::Shape,
            "image is not on the critic's canvas");
    Mat<S> x(critic.pixels(), 1);
    for (long i = 0; i < critic.pixels(); ++i) x(i, 0) = static_cast<S>(image.data[i]);
    return critic.scores(x)(0);
}

template <typename S>
Mat<S> to_batch(std::span<const RasterImage> images) {
    require(!images.empty(), ErrorKind::Shape, "empty batch");
    const long px = static_cast<long>(images.front().size());
    Mat<S> out(px, static_cast<long>(images.size()));
    for (std::size_t j = 0; j < images.size(); ++j) {
        require(static_cast<long>(images[j].size()) == px && images[j].same_shape(images.front()), ErrorKind::Shape,
                "batch images differ in shape");
        for (long i = 0; i < px; ++i) out(i, static_cast<long>(j)) = static_cast<S>(images[j].data[i]);
    }
    return out;
}

template <typename S>
RasterImage column_image(const Mat<S>& batch, long col, int width, int height) {
    require(batch.rows() == static_cast<long>(width) * height, ErrorKind::Shape, "column is not width x height");
    RasterImage img(width, height);
    for (long i = 0; i < batch.rows(); ++i) img.data[i] = static_cast<float>(batch(i, col));
    return img;
}

/// x_hat = eps * real + (1 - eps) * fake, one eps per column.
template <typename S>
Mat<S> interpolate(const Mat<S>& real, const Mat<S>& fake, const RowVec<S>& eps) {
    require(real.rows() == fake.rows() && real.cols() == fake.cols(), ErrorKind::Shape,
            "real and fake batches differ in shape");
    require(eps.size() == real.cols(), ErrorKind::Shape, "one interpolation weight per pair required");
    Mat<S> out = fake;
    for (long j = 0; j < real.cols(); ++j) out.col(j) = eps(j) * real.col(j) + (S(1) - eps(j)) * fake.col(j);
    return out;
}

template <typename S>
RowVec<S> draw_interpolation_weights(long n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RowVec<S> eps(n);
    for (long j = 0; j < n; ++j) eps(j) = static_cast<S>(u(rng));
    return eps;
}

/// Mean of (||grad_x critic(x_hat)|| - 1)^2 over columns of x_hat. Works for
/// any critic exposing `input_gradients`.
template <typename S, class CriticT>
S gradient_penalty_at(const CriticT& critic, const Mat<S>& x_hat) {
    const Mat<S> g = critic.input_gradients(x_hat);
    S acc = 0;
    for (long j = 0; j < g.cols(); ++j) {
        const S d = g.col(j).norm() - S(1);
        acc += d * d;
    }
    return acc / static_cast<S>(g.cols());
}

template <typename S, class CriticT>
S gradient_penalty(const CriticT& critic, const Mat<S>& real, const Mat<S>& fake, std::mt19937_64& rng) {
    const auto eps = draw_interpolation_weights<S>(real.cols(), rng);
    return gradient_penalty_at<S>(critic, interpolate<S>(real, fake, eps));
}

/// mean(critic(fake)) - mean(critic(real)) + lambda * penalty
template <typename S, class CriticT>
S critic_loss(const CriticT& critic, const Mat<S>& real, const Mat<S>& fake, S lambda, std::mt19937_64& rng) {
    require(real.rows() == fake.rows() && real.cols() == fake.cols(), ErrorKind::Shape,
            "real and fake batches differ in shape");
    const S adversarial = critic.scores(fake).mean() - critic.scores(real).mean();
    if (lambda == S(0)) return adversarial;
    return adversarial + lambda * gradient_penalty<S>(critic, real, fake, rng);
}

/// -mean(critic(fake)) plus any auxiliary terms.
template <typename S, class CriticT>
S generator_loss(const CriticT& critic, const Mat<S>& fake, S auxiliary = S(0)) {
    return -critic.scores(fake).mean() + auxiliary;
}

template <typename S>
struct PenaltyGrad {
    S penalty = 0;
    RowVec<S> norms;
};

/// Gradient penalty at x_hat and its parameter gradient scaled by `scale`
/// (accumulated into grad).
template <typename S>
PenaltyGrad<S> gradient_penalty_with_grad(const Critic<S>& critic, const Mat<S>& x_hat, S scale, Vec<S>& grad) {
    typename Critic<S>::Cache cache;
    critic.forward(x_hat, &cache);
    Mat<S> g;
    critic.backward(cache, RowVec<S>::Ones(cache.batch), nullptr, &g);
    const long n = g.cols();
    PenaltyGrad<S> out;
    out.norms.resize(n);
    Mat<S> v(g.rows(), n);
    for (long j = 0; j < n; ++j) {
        const S norm = g.col(j).norm();
        out.norms(j) = norm;
        out.penalty += (norm - S(1)) * (norm - S(1));
        // d/dg (||g|| - 1)^2 = 2 (||g|| - 1) g / ||g||
        if (norm > S(0))
            v.col(j) = (scale * S(2) * (norm - S(1)) / (norm * static_cast<S>(n))) * g.col(j);
        else
            v.col(j).setZero();
    }
    out.penalty /= static_cast<S>(n);
    typename Critic<S>::TangentCache tangent;
    critic.tangent_forward(cache, v, tangent);
    critic.tangent_backward(cache, tangent, RowVec<S>::Ones(n), grad);
    return out;
}

template <typename S>
struct CriticLossParts {
    S loss = 0;
    S adversarial = 0;  // mean(critic(fake)) - mean(critic(real))
    S penalty = 0;
};

/// Full critic objective with its parameter gradient accumulated into grad.
template <typename S>
CriticLossParts<S> critic_loss_with_grad(const Critic<S>& critic, const Mat<S>& real, const Mat<S>& fake, S lambda,
                                         const RowVec<S>& eps, Vec<S>& grad) {
    require(real.rows() == fake.rows() && real.cols() == fake.cols(), ErrorKind::Shape,
            "real and fake batches differ in shape");
    const long n = real.cols();
    Mat<S> both(real.rows(), 2 * n);
    both << real, fake;
    typename Critic<S>::Cache cache;
    const RowVec<S> s = critic.forward(both, &cache);
    RowVec<S> seed(2 * n);
    seed.head(n).setConstant(S(-1) / static_cast<S>(n));
    seed.tail(n).setConstant(S(1) / static_cast<S>(n));
    critic.backward(cache, seed, &grad, nullptr);

    CriticLossParts<S> parts;
    parts.adversarial = s.tail(n).mean() - s.head(n).mean();
    if (lambda != S(0)) parts.penalty = gradient_penalty_with_grad(critic, interpolate<S>(real, fake, eps), lambda, grad).penalty;
    parts.loss = parts.adversarial + lambda * parts.penalty;
    return parts;
}

} // namespace colsig
