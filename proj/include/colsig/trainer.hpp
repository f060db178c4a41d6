#pragma once

// WGAN-GP training loop with per-epoch sample emission, step-boundary
// pausing and bit-exact checkpoint/resume.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "colsig/dataset.hpp"
#include "colsig/error.hpp"
#include "colsig/feedback.hpp"
#include "colsig/gan.hpp"
#include "colsig/grid.hpp"

namespace colsig {

struct TrainConfig {
    double gp_weight = 10.0;
    int critic_steps_per_gen = 5;
    double learning_rate = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    int batch_size = 32;
    int epochs = 10;
    int samples_per_epoch = 16;
    std::uint64_t rng_seed = 0;
    /// Critic updates per epoch; 0 means ceil(N / batch_size).
    int steps_per_epoch = 0;
    bool augment = false;
    /// "float" or "double".
    std::string precision = "float";
    double initial_target_thickness = 2.0;
    FeedbackPolicy policy{};

    void validate() const {
        require(gp_weight >= 0.0, ErrorKind::Parameter, "gp_weight must be >= 0");
        require(critic_steps_per_gen >= 1, ErrorKind::Parameter, "critic_steps_per_gen must be >= 1");
        require(learning_rate > 0.0, ErrorKind::Parameter, "learning_rate must be positive");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::Parameter,
                "moment decays must lie in [0,1)");
        require(batch_size >= 1, ErrorKind::Parameter, "batch_size must be >= 1");
        require(epochs >= 0, ErrorKind::Parameter, "epochs must be >= 0");
        require(samples_per_epoch >= 0, ErrorKind::Parameter, "samples_per_epoch must be >= 0");
        require(steps_per_epoch >= 0, ErrorKind::Parameter, "steps_per_epoch must be >= 0");
        require(precision == "float" || precision == "double", ErrorKind::Parameter, "precision must be float or double");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"gp_weight", c.gp_weight},
         {"critic_steps_per_gen", c.critic_steps_per_gen},
         {"learning_rate", c.learning_rate},
         {"moment_decays", {c.beta1, c.beta2}},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"samples_per_epoch", c.samples_per_epoch},
         {"rng_seed", c.rng_seed},
         {"steps_per_epoch", c.steps_per_epoch},
         {"augment", c.augment},
         {"precision", c.precision},
         {"initial_target_thickness", c.initial_target_thickness},
         {"policy", c.policy}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.gp_weight = j.value("gp_weight", c.gp_weight);
    c.critic_steps_per_gen = j.value("critic_steps_per_gen", c.critic_steps_per_gen);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("moment_decays")) {
        const auto& m = j.at("moment_decays");
        require(m.is_array() && m.size() == 2, ErrorKind::Format, "moment_decays must be a pair");
        c.beta1 = m[0].get<double>();
        c.beta2 = m[1].get<double>();
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.samples_per_epoch = j.value("samples_per_epoch", c.samples_per_epoch);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
    c.augment = j.value("augment", c.augment);
    c.precision = j.value("precision", c.precision);
    c.initial_target_thickness = j.value("initial_target_thickness", c.initial_target_thickness);
    if (j.contains("policy")) c.policy = j.at("policy").get<FeedbackPolicy>();
}

/// Everything a run is configured with; stored as the run's config.json.
struct RunConfig {
    TrainConfig train{};
    GeneratorConfig generator{};
    CriticConfig critic{};
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"train", c.train}, {"generator", c.generator}, {"critic", c.critic}};
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorConfig>();
    if (j.contains("critic")) c.critic = j.at("critic").get<CriticConfig>();
}

struct StepMetrics {
    long step = 0;
    double critic_loss = 0.0;
    double gp = 0.0;
    std::optional<double> gen_loss;
    double alpha = 0.0;
    double beta = 0.0;
    /// mean critic(real) - mean critic(fake)
    double critic_gap = 0.0;
};

inline nlohmann::json to_json(const StepMetrics& m) {
    return {{"step", m.step},
            {"critic_loss", m.critic_loss},
            {"gp", m.gp},
            {"gen_loss", m.gen_loss ? nlohmann::json(*m.gen_loss) : nlohmann::json(nullptr)},
            {"alpha", m.alpha},
            {"beta", m.beta},
            {"critic_gap", m.critic_gap}};
}

struct SampleBatch {
    std::string run_id;
    int epoch = 0;
    std::vector<std::string> sample_ids;
    std::vector<RasterImage> images;
    std::vector<std::vector<double>> latents;
};

inline std::string make_sample_id(const std::string& run_id, int epoch, int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "-e%04d-s%02d", epoch, k);
    return run_id + buf;
}

struct SampleRef {
    std::string run_id;
    int epoch = 0;
    int index = 0;
};

inline std::optional<SampleRef> parse_sample_id(const std::string& id) {
    const auto e = id.rfind("-e");
    const auto s = id.rfind("-s");
    if (e == std::string::npos || s == std::string::npos || s < e || e == 0) return std::nullopt;
    try {
        std::size_t used = 0;
        const auto epoch_str = id.substr(e + 2, s - e - 2);
        const int epoch = std::stoi(epoch_str, &used);
        if (used != epoch_str.size()) return std::nullopt;
        const auto idx_str = id.substr(s + 2);
        const int idx = std::stoi(idx_str, &used);
        if (used != idx_str.size()) return std::nullopt;
        return SampleRef{id.substr(0, e), epoch, idx};
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

enum class RunOutcome { Completed, Paused };

/// Hooks invoked on the training thread.
struct TrainCallbacks {
    std::function<void(const StepMetrics&)> on_step;
    /// Called after each completed epoch; the trainer's state at that point
    /// is the epoch's checkpoint.
    std::function<void(const SampleBatch&)> on_epoch;
    /// Polled at every step boundary.
    std::function<bool()> should_pause;
    /// Consulted at each epoch boundary for the auxiliary loss weights.
    std::function<FeedbackState(int epoch, const FeedbackState& current)> feedback;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, nlohmann::json snapshot)
        : Error(ErrorKind::Diverged, what), snapshot_(std::move(snapshot)) {}
    const nlohmann::json& snapshot() const { return snapshot_; }

private:
    nlohmann::json snapshot_;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'L', 'S', 'I', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Metadata block of a checkpoint file, readable without knowing the scalar type.
struct CheckpointHeader {
    std::uint32_t scalar_bytes = 0;
    nlohmann::json meta;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw Error(ErrorKind::Format, "truncated checkpoint");
    return v;
}
template <typename S>
void write_vec(std::ostream& os, const Vec<S>& v) {
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(S)));
}
template <typename S>
Vec<S> read_vec(std::istream& is) {
    const auto n = read_pod<std::uint64_t>(is);
    Vec<S> v(static_cast<long>(n));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(S)));
    if (!is) throw Error(ErrorKind::Format, "truncated checkpoint");
    return v;
}

} // namespace detail

inline CheckpointHeader read_checkpoint_header(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw Error(ErrorKind::Format, "not a checkpoint file");
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != kCheckpointVersion) throw Error(ErrorKind::Format, "unsupported checkpoint version");
    CheckpointHeader h;
    h.scalar_bytes = detail::read_pod<std::uint32_t>(is);
    const auto len = detail::read_pod<std::uint64_t>(is);
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw Error(ErrorKind::Format, "truncated checkpoint");
    h.meta = nlohmann::json::parse(text);
    return h;
}

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::Io, "cannot open checkpoint '" + path.string() + "'");
    return read_checkpoint_header(is);
}

template <typename S>
class Trainer {
public:
    /// `training` holds one image per plan entry (same order), on the canvas.
    Trainer(std::string run_id, RunConfig cfg, SamplingPlan plan, const std::vector<RasterImage>& training)
        : run_id_(std::move(run_id)), cfg_(std::move(cfg)), plan_(std::move(plan)), gen_(cfg_.generator),
          critic_(cfg_.critic) {
        cfg_.train.validate();
        require(!plan_.entries.empty(), ErrorKind::Parameter, "training plan is empty");
        require(training.size() == plan_.entries.size(), ErrorKind::Shape, "one training image per plan entry required");
        require(gen_.height() == cfg_.critic.height && gen_.width() == cfg_.critic.width, ErrorKind::Parameter,
                "generator output does not match the critic input");
        data_ = to_batch<S>(training);
        require(data_.rows() == gen_.pixels(), ErrorKind::Shape, "training images are not on the generator canvas");
        gen_.initialize(cfg_.train.rng_seed * 2 + 1);
        critic_.initialize(cfg_.train.rng_seed * 2 + 2);
        gen_opt_.reset(gen_.params().size());
        critic_opt_.reset(critic_.params().size());
        rng_.seed(cfg_.train.rng_seed);
        feedback_.run_id = run_id_;
        feedback_.target_thickness = cfg_.train.initial_target_thickness;
    }

    const std::string& run_id() const { return run_id_; }
    const RunConfig& config() const { return cfg_; }
    const Generator<S>& generator() const { return gen_; }
    const Critic<S>& critic() const { return critic_; }
    Critic<S>& critic() { return critic_; }
    const FeedbackState& feedback() const { return feedback_; }
    int epochs_completed() const { return epoch_; }
    long steps_done() const { return step_; }
    long steps_in_epoch() const { return step_in_epoch_; }

    long steps_per_epoch() const {
        if (cfg_.train.steps_per_epoch > 0) return cfg_.train.steps_per_epoch;
        const long n = static_cast<long>(plan_.entries.size());
        return (n + cfg_.train.batch_size - 1) / cfg_.train.batch_size;
    }

    /// Trains until every configured epoch is done or a pause is requested.
    RunOutcome run(const TrainCallbacks& cb = {}) {
        while (epoch_ < cfg_.train.epochs) {
            if (step_in_epoch_ == 0 && cb.feedback) feedback_ = cb.feedback(epoch_, feedback_);
            while (step_in_epoch_ < steps_per_epoch()) {
                if (cb.should_pause && cb.should_pause()) return RunOutcome::Paused;
                StepMetrics m = critic_step();
                ++step_;
                ++step_in_epoch_;
                if (step_ % cfg_.train.critic_steps_per_gen == 0) last_gen_loss_ = generator_step();
                m.step = step_;
                m.gen_loss = last_gen_loss_;
                if (cb.on_step) cb.on_step(m);
            }
            const SampleBatch batch = epoch_samples(epoch_);
            ++epoch_;
            step_in_epoch_ = 0;
            if (cb.on_epoch) cb.on_epoch(batch);
        }
        return RunOutcome::Completed;
    }

    /// Deterministic per-epoch latents, independent of the training stream.
    SampleBatch epoch_samples(int epoch) const {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg_.train.rng_seed),
                          static_cast<std::uint32_t>(cfg_.train.rng_seed >> 32), static_cast<std::uint32_t>(epoch),
                          0x5eedu};
        std::mt19937_64 rng(seq);
        SampleBatch b;
        b.run_id = run_id_;
        b.epoch = epoch;
        const int k = cfg_.train.samples_per_epoch;
        if (k == 0) return b;
        Mat<S> z = latents(k, rng);
        const Mat<S> imgs = gen_.forward(z);
        for (int i = 0; i < k; ++i) {
            b.sample_ids.push_back(make_sample_id(run_id_, epoch, i));
            b.images.push_back(column_image(imgs, i, gen_.width(), gen_.height()));
            std::vector<double> zi(static_cast<std::size_t>(z.rows()));
            for (long r = 0; r < z.rows(); ++r) zi[r] = static_cast<double>(z(r, i));
            b.latents.push_back(std::move(zi));
        }
        return b;
    }

    void save(std::ostream& os) const {
        std::ostringstream rng_text;
        rng_text << rng_;
        nlohmann::json meta{{"run_id", run_id_},
                            {"epoch", epoch_},
                            {"step", step_},
                            {"step_in_epoch", step_in_epoch_},
                            {"gen_steps", gen_steps_},
                            {"config", cfg_},
                            {"feedback", to_json(feedback_)},
                            {"rng", rng_text.str()},
                            {"last_gen_loss", last_gen_loss_ ? nlohmann::json(*last_gen_loss_) : nlohmann::json(nullptr)},
                            {"gen_adam_steps", gen_opt_.steps},
                            {"critic_adam_steps", critic_opt_.steps}};
        const std::string text = meta.dump();
        os.write(kCheckpointMagic, 8);
        detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
        detail::write_pod<std::uint32_t>(os, sizeof(S));
        detail::write_pod<std::uint64_t>(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        detail::write_vec(os, gen_.params());
        detail::write_vec(os, gen_opt_.m);
        detail::write_vec(os, gen_opt_.v);
        detail::write_vec(os, critic_.params());
        detail::write_vec(os, critic_opt_.m);
        detail::write_vec(os, critic_opt_.v);
        if (!os) throw Error(ErrorKind::Io, "failed writing checkpoint");
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorKind::Io, "cannot write checkpoint '" + path.string() + "'");
        save(os);
    }

    /// Restores the full training state. Architecture must match.
    void load(std::istream& is) {
        const auto h = read_checkpoint_header(is);
        require(h.scalar_bytes == sizeof(S), ErrorKind::Format, "checkpoint precision does not match the trainer");
        const auto& m = h.meta;
        const RunConfig saved = m.at("config").get<RunConfig>();
        require(nlohmann::json(saved.generator) == nlohmann::json(cfg_.generator) &&
                    nlohmann::json(saved.critic) == nlohmann::json(cfg_.critic),
                ErrorKind::Format, "checkpoint architecture does not match");
        cfg_.train = saved.train;
        run_id_ = m.at("run_id").get<std::string>();
        epoch_ = m.at("epoch").get<int>();
        step_ = m.at("step").get<long>();
        step_in_epoch_ = m.at("step_in_epoch").get<long>();
        gen_steps_ = m.at("gen_steps").get<long>();
        feedback_ = feedback_from_json(m.at("feedback"));
        std::istringstream rng_text(m.at("rng").get<std::string>());
        rng_text >> rng_;
        last_gen_loss_ = m.at("last_gen_loss").is_null() ? std::nullopt
                                                          : std::optional<double>(m.at("last_gen_loss").get<double>());
        gen_.params() = detail::read_vec<S>(is);
        gen_opt_.m = detail::read_vec<S>(is);
        gen_opt_.v = detail::read_vec<S>(is);
        gen_opt_.steps = m.at("gen_adam_steps").get<long>();
        critic_.params() = detail::read_vec<S>(is);
        critic_opt_.m = detail::read_vec<S>(is);
        critic_opt_.v = detail::read_vec<S>(is);
        critic_opt_.steps = m.at("critic_adam_steps").get<long>();
        require(gen_.params().size() == gen_opt_.m.size() && critic_.params().size() == critic_opt_.m.size(),
                ErrorKind::Format, "checkpoint parameter blocks are inconsistent");
    }

    void load(const std::filesystem::path& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw Error(ErrorKind::Io, "cannot open checkpoint '" + path.string() + "'");
        load(is);
    }

private:
    Mat<S> latents(long n, std::mt19937_64& rng) const {
        std::normal_distribution<double> nd(0.0, 1.0);
        Mat<S> z(gen_.input_size(), n);
        for (long j = 0; j < n; ++j)
            for (long i = 0; i < z.rows(); ++i) z(i, j) = static_cast<S>(nd(rng));
        return z;
    }

    Mat<S> real_batch() {
        const auto idx = sample_batch_indices(plan_, static_cast<std::size_t>(cfg_.train.batch_size), rng_);
        Mat<S> real(data_.rows(), static_cast<long>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) real.col(static_cast<long>(j)) = data_.col(static_cast<long>(idx[j]));
        if (cfg_.train.augment) jitter(real);
        return real;
    }

    /// Random integer translation (|dx| <= 2, |dy| <= 1), zero fill.
    void jitter(Mat<S>& batch) {
        std::uniform_int_distribution<int> ddx(-2, 2), ddy(-1, 1);
        const int w = gen_.width(), h = gen_.height();
        for (long j = 0; j < batch.cols(); ++j) {
            const int dx = ddx(rng_), dy = ddy(rng_);
            Vec<S> src = batch.col(j);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int sx = x - dx, sy = y - dy;
                    batch(static_cast<long>(y) * w + x, j) =
                        (sx >= 0 && sy >= 0 && sx < w && sy < h) ? src(static_cast<long>(sy) * w + sx) : S(0);
                }
        }
    }

    StepMetrics critic_step() {
        const Mat<S> real = real_batch();
        const Mat<S> z = latents(real.cols(), rng_);
        const Mat<S> fake = gen_.forward(z);
        const auto eps = draw_interpolation_weights<S>(real.cols(), rng_);
        Vec<S> grad = Vec<S>::Zero(critic_.params().size());
        const auto parts = critic_loss_with_grad(critic_, real, fake, static_cast<S>(cfg_.train.gp_weight), eps, grad);
        StepMetrics m;
        m.critic_loss = static_cast<double>(parts.loss);
        m.gp = static_cast<double>(parts.penalty);
        m.critic_gap = -static_cast<double>(parts.adversarial);
        m.alpha = feedback_.alpha;
        m.beta = feedback_.beta;
        if (!std::isfinite(m.critic_loss) || !grad.allFinite()) diverged("critic loss is not finite", m);
        nn::adam_step(critic_.params(), grad, critic_opt_, adam_config());
        return m;
    }

    double generator_step() {
        const long n = cfg_.train.batch_size;
        const Mat<S> z = latents(n, rng_);
        typename Generator<S>::Cache gcache;
        const Mat<S> fake = gen_.forward(z, &gcache);
        typename Critic<S>::Cache ccache;
        const RowVec<S> s = critic_.forward(fake, &ccache);
        Mat<S> dimg;
        critic_.backward(ccache, RowVec<S>::Constant(n, S(-1) / static_cast<S>(n)), nullptr, &dimg);
        double loss = -static_cast<double>(s.mean());
        if (feedback_.alpha > 0.0 || feedback_.beta > 0.0) {
            std::vector<double> px(static_cast<std::size_t>(fake.rows())), g(px.size());
            for (long j = 0; j < n; ++j) {
                for (long i = 0; i < fake.rows(); ++i) px[i] = static_cast<double>(fake(i, j));
                const auto t = soft_feedback_terms(px, gen_.width(), gen_.height(), feedback_.alpha, feedback_.beta,
                                                   feedback_.target_thickness, g);
                loss += t.value / static_cast<double>(n);
                for (long i = 0; i < fake.rows(); ++i) dimg(i, j) += static_cast<S>(g[i] / static_cast<double>(n));
            }
        }
        Vec<S> grad = Vec<S>::Zero(gen_.params().size());
        gen_.backward(gcache, dimg, grad);
        if (!std::isfinite(loss) || !grad.allFinite()) {
            StepMetrics m;
            m.gen_loss = loss;
            diverged("generator loss is not finite", m);
        }
        nn::adam_step(gen_.params(), grad, gen_opt_, adam_config());
        ++gen_steps_;
        return loss;
    }

    [[noreturn]] void diverged(const std::string& what, const StepMetrics& m) const {
        nlohmann::json snap = to_json(m);
        snap["run_id"] = run_id_;
        snap["step"] = step_;
        snap["epoch"] = epoch_;
        snap["generator_param_norm"] = static_cast<double>(gen_.params().norm());
        snap["critic_param_norm"] = static_cast<double>(critic_.params().norm());
        throw TrainingDiverged(what + " at step " + std::to_string(step_), snap);
    }

    nn::AdamConfig adam_config() const { return {cfg_.train.learning_rate, cfg_.train.beta1, cfg_.train.beta2, 1e-8}; }

    std::string run_id_;
    RunConfig cfg_;
    SamplingPlan plan_;
    Generator<S> gen_;
    Critic<S> critic_;
    nn::AdamState<S> gen_opt_;
    nn::AdamState<S> critic_opt_;
    Mat<S> data_;
    std::mt19937_64 rng_;
    FeedbackState feedback_;
    int epoch_ = 0;
    long step_ = 0;
    long step_in_epoch_ = 0;
    long gen_steps_ = 0;
    std::optional<double> last_gen_loss_;
};

} // namespace colsig
