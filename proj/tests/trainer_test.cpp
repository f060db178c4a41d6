#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "colsig/trainer.hpp"
#include "test_util.hpp"

using namespace colsig;

namespace {

RunConfig tiny_config(std::uint64_t seed = 1) {
    RunConfig c;
    c.generator.latent_dim = 3;
    c.generator.seed_height = 1;
    c.generator.seed_width = 2;
    c.generator.channels = {4, 3, 1};
    c.critic.height = 4;
    c.critic.width = 8;
    c.critic.channels = {3, 2, 1};
    c.train.batch_size = 4;
    c.train.epochs = 3;
    c.train.samples_per_epoch = 3;
    c.train.critic_steps_per_gen = 2;
    c.train.steps_per_epoch = 5;
    c.train.rng_seed = seed;
    c.train.precision = "double";
    c.train.learning_rate = 1e-3;
    return c;
}

struct TinyData {
    SamplingPlan plan;
    std::vector<RasterImage> images;
};

TinyData tiny_data(int n = 6) {
    std::mt19937 rng(5);
    std::bernoulli_distribution b(0.3);
    TinyData d;
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < n; ++i) {
        entries.push_back({"x" + std::to_string(i), "x" + std::to_string(i), i % 2 ? Community::City : Community::University});
        RasterImage img(8, 4);
        for (auto& v : img.data) v = b(rng) ? 1.0f : 0.0f;
        d.images.push_back(img);
    }
    d.plan = build_plan(entries, Community::City, 2.0);
    return d;
}

std::string checkpoint_bytes(const Trainer<double>& t) {
    std::ostringstream os;
    t.save(os);
    return os.str();
}

} // namespace

TEST(SampleIds, FormatAndParse) {
    EXPECT_EQ(make_sample_id("run-7", 3, 12), "run-7-e0003-s12");
    const auto ref = parse_sample_id("run-7-e0003-s12");
    ASSERT_TRUE(ref);
    EXPECT_EQ(ref->run_id, "run-7");
    EXPECT_EQ(ref->epoch, 3);
    EXPECT_EQ(ref->index, 12);
    EXPECT_FALSE(parse_sample_id("nonsense"));
    EXPECT_FALSE(parse_sample_id("run-e00x1-s01"));
    EXPECT_FALSE(parse_sample_id("-e0001-s01"));
}

TEST(TrainConfigJson, RoundTripAndValidation) {
    RunConfig c = tiny_config(42);
    c.train.beta1 = 0.5;
    c.train.policy.tag_threshold = 4;
    const auto back = nlohmann::json(c).get<RunConfig>();
    EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
    EXPECT_EQ(nlohmann::json(c)["train"]["moment_decays"], nlohmann::json::array({0.5, 0.9}));

    TrainConfig bad;
    bad.precision = "half";
    EXPECT_COLSIG_ERROR(bad.validate(), ErrorKind::Parameter);
    bad = {};
    bad.beta2 = 1.0;
    EXPECT_COLSIG_ERROR(bad.validate(), ErrorKind::Parameter);
    EXPECT_COLSIG_ERROR((nlohmann::json{{"moment_decays", {0.1}}}.get<TrainConfig>()), ErrorKind::Format);
}

TEST(Trainer, ZeroEpochsDoesNothing) {
    auto cfg = tiny_config();
    cfg.train.epochs = 0;
    auto d = tiny_data();
    Trainer<double> t("r", cfg, d.plan, d.images);
    int calls = 0;
    TrainCallbacks cb;
    cb.on_step = [&](const StepMetrics&) { ++calls; };
    cb.on_epoch = [&](const SampleBatch&) { ++calls; };
    EXPECT_EQ(t.run(cb), RunOutcome::Completed);
    EXPECT_EQ(calls, 0);
    EXPECT_EQ(t.steps_done(), 0);
}

TEST(Trainer, StepsPerEpochDefaultsToCeil) {
    auto cfg = tiny_config();
    cfg.train.steps_per_epoch = 0;
    auto d = tiny_data(9);
    Trainer<double> t("r", cfg, d.plan, d.images);
    EXPECT_EQ(t.steps_per_epoch(), 3);
}

TEST(Trainer, RejectsMismatchedData) {
    auto d = tiny_data();
    d.images.pop_back();
    EXPECT_COLSIG_ERROR(Trainer<double>("r", tiny_config(), d.plan, d.images), ErrorKind::Shape);
    auto e = tiny_data();
    e.images[0] = RasterImage(9, 4);
    EXPECT_COLSIG_ERROR(Trainer<double>("r", tiny_config(), e.plan, e.images), ErrorKind::Shape);
}

TEST(Trainer, MetricsAndEpochCallbacks) {
    auto d = tiny_data();
    Trainer<double> t("run-a", tiny_config(), d.plan, d.images);
    std::vector<StepMetrics> steps;
    std::vector<SampleBatch> epochs;
    std::vector<int> feedback_epochs;
    TrainCallbacks cb;
    cb.on_step = [&](const StepMetrics& m) { steps.push_back(m); };
    cb.on_epoch = [&](const SampleBatch& b) { epochs.push_back(b); };
    cb.feedback = [&](int e, const FeedbackState& s) {
        feedback_epochs.push_back(e);
        return s;
    };
    EXPECT_EQ(t.run(cb), RunOutcome::Completed);
    ASSERT_EQ(steps.size(), 15u);
    EXPECT_FALSE(steps[0].gen_loss);
    EXPECT_TRUE(steps[1].gen_loss);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        EXPECT_EQ(steps[i].step, static_cast<long>(i + 1));
        EXPECT_TRUE(std::isfinite(steps[i].critic_loss));
        EXPECT_GE(steps[i].gp, 0.0);
    }
    ASSERT_EQ(epochs.size(), 3u);
    EXPECT_EQ(feedback_epochs, (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(epochs[1].sample_ids, (std::vector<std::string>{"run-a-e0001-s00", "run-a-e0001-s01", "run-a-e0001-s02"}));
    for (const auto& img : epochs[2].images) {
        EXPECT_EQ(img.width, 8);
        for (float v : img.data) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
    }
    EXPECT_EQ(epochs[0].latents[0].size(), 3u);
}

TEST(Trainer, SeededRunsAreBitIdentical) {
    auto d = tiny_data();
    Trainer<double> a("r", tiny_config(9), d.plan, d.images), b("r", tiny_config(9), d.plan, d.images),
        c("r", tiny_config(10), d.plan, d.images);
    a.run();
    b.run();
    c.run();
    EXPECT_EQ(checkpoint_bytes(a), checkpoint_bytes(b));
    EXPECT_EQ(a.epoch_samples(2).images, b.epoch_samples(2).images);
    EXPECT_NE(a.epoch_samples(2).images, c.epoch_samples(2).images);
}

TEST(Trainer, PauseAndResumeMatchUninterruptedRun) {
    auto d = tiny_data();
    Trainer<double> full("r", tiny_config(3), d.plan, d.images);
    full.run();

    for (long pause_at : {1L, 5L, 7L}) {
        Trainer<double> first("r", tiny_config(3), d.plan, d.images);
        TrainCallbacks cb;
        cb.should_pause = [&] { return first.steps_done() == pause_at; };
        ASSERT_EQ(first.run(cb), RunOutcome::Paused);
        std::stringstream ckpt;
        first.save(ckpt);

        Trainer<double> resumed("r", tiny_config(999), d.plan, d.images);
        resumed.load(ckpt);
        EXPECT_EQ(resumed.steps_done(), pause_at);
        EXPECT_EQ(resumed.run(), RunOutcome::Completed);
        EXPECT_EQ(checkpoint_bytes(resumed), checkpoint_bytes(full)) << "paused at step " << pause_at;
    }
}

TEST(Trainer, ResumeDoesNotReconsultFeedbackMidEpoch) {
    auto d = tiny_data();
    Trainer<double> first("r", tiny_config(), d.plan, d.images);
    TrainCallbacks cb;
    cb.should_pause = [&] { return first.steps_done() == 7; };
    first.run(cb);
    std::stringstream ckpt;
    first.save(ckpt);
    Trainer<double> resumed("r", tiny_config(), d.plan, d.images);
    resumed.load(ckpt);
    std::vector<int> seen;
    TrainCallbacks cb2;
    cb2.feedback = [&](int e, const FeedbackState& s) {
        seen.push_back(e);
        return s;
    };
    resumed.run(cb2);
    EXPECT_EQ(seen, (std::vector<int>{2}));
}

TEST(Checkpoint, HeaderAndValidation) {
    auto d = tiny_data();
    Trainer<double> t("run-h", tiny_config(), d.plan, d.images);
    t.run();
    std::stringstream ss(checkpoint_bytes(t));
    const auto h = read_checkpoint_header(ss);
    EXPECT_EQ(h.scalar_bytes, 8u);
    EXPECT_EQ(h.meta.at("epoch"), 3);
    EXPECT_EQ(h.meta.at("run_id"), "run-h");

    std::stringstream junk("NOTACKPT........");
    EXPECT_COLSIG_ERROR(read_checkpoint_header(junk), ErrorKind::Format);
    std::string bytes = checkpoint_bytes(t);
    std::stringstream truncated(bytes.substr(0, bytes.size() - 10));
    Trainer<double> u("run-h", tiny_config(), d.plan, d.images);
    EXPECT_COLSIG_ERROR(u.load(truncated), ErrorKind::Format);

    auto fcfg = tiny_config();
    fcfg.train.precision = "float";
    Trainer<float> f("run-h", fcfg, d.plan, d.images);
    std::stringstream dbl(bytes);
    EXPECT_COLSIG_ERROR(f.load(dbl), ErrorKind::Format);

    auto other = tiny_config();
    other.generator.channels = {5, 3, 1};
    Trainer<double> w("run-h", other, d.plan, d.images);
    std::stringstream arch(bytes);
    EXPECT_COLSIG_ERROR(w.load(arch), ErrorKind::Format);
}

TEST(Checkpoint, LoadRestoresCriticScores) {
    auto d = tiny_data();
    Trainer<double> t("r", tiny_config(), d.plan, d.images);
    t.run();
    std::stringstream ss(checkpoint_bytes(t));
    Trainer<double> u("r", tiny_config(77), d.plan, d.images);
    u.load(ss);
    const auto batch = to_batch<double>(d.images);
    EXPECT_EQ(t.critic().forward(batch), u.critic().forward(batch));
}

TEST(Trainer, FeedbackWeightsChangeGeneratorUpdates) {
    auto d = tiny_data();
    Trainer<double> plain("r", tiny_config(4), d.plan, d.images), weighted("r", tiny_config(4), d.plan, d.images);
    plain.run();
    std::vector<double> alphas;
    TrainCallbacks cb;
    cb.feedback = [](int, FeedbackState s) {
        s.alpha = 1.0;
        s.beta = 0.5;
        return s;
    };
    cb.on_step = [&](const StepMetrics& m) { alphas.push_back(m.alpha); };
    weighted.run(cb);
    EXPECT_EQ(alphas.front(), 1.0);
    EXPECT_NE(plain.generator().params(), weighted.generator().params());
    EXPECT_EQ(weighted.feedback().alpha, 1.0);
}

TEST(Trainer, NonFiniteDataRaisesDiverged) {
    auto d = tiny_data();
    for (auto& img : d.images) img.data[0] = std::numeric_limits<float>::quiet_NaN();
    Trainer<double> t("r", tiny_config(), d.plan, d.images);
    try {
        t.run();
        ADD_FAILURE() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Diverged);
        EXPECT_EQ(e.snapshot().at("run_id"), "r");
        EXPECT_TRUE(e.snapshot().contains("critic_param_norm"));
    }
}
