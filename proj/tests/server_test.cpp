#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "colsig/image_io.hpp"
#include "colsig/server.hpp"
#include "test_util.hpp"

using namespace colsig;
using nlohmann::json;

namespace {

RunConfig tiny_config(int steps_per_epoch = 5, int epochs = 3) {
    RunConfig c;
    c.generator.latent_dim = 3;
    c.generator.seed_height = 1;
    c.generator.seed_width = 2;
    c.generator.channels = {4, 3, 1};
    c.critic.height = 4;
    c.critic.width = 8;
    c.critic.channels = {3, 2, 1};
    c.train.batch_size = 4;
    c.train.epochs = epochs;
    c.train.samples_per_epoch = 3;
    c.train.critic_steps_per_gen = 2;
    c.train.steps_per_epoch = steps_per_epoch;
    c.train.rng_seed = 11;
    c.train.precision = "double";
    c.train.learning_rate = 1e-3;
    return c;
}

// Writes n random 8x4 images and returns a plan that points at them.
SamplingPlan write_training_set(const fs::path& dir, int n = 6) {
    std::mt19937 rng(3);
    std::bernoulli_distribution b(0.3);
    std::vector<ManifestEntry> entries;
    fs::create_directories(dir);
    for (int i = 0; i < n; ++i) {
        RasterImage img(8, 4);
        for (auto& v : img.data) v = b(rng) ? 1.0f : 0.0f;
        const fs::path p = dir / ("t" + std::to_string(i) + ".png");
        write_png(p, img);
        entries.push_back({p.string(), "t" + std::to_string(i), i % 2 ? Community::City : Community::University});
    }
    return build_plan(entries, Community::University, 3.0);
}

json run_body(const std::string& id, const SamplingPlan& plan, const RunConfig& cfg = tiny_config(), double tau = 0.05) {
    json config = cfg;
    config["tau"] = tau;
    return {{"run_id", id}, {"config", config}, {"plan", to_json(plan)}};
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

struct Fixture {
    fs::path dir;
    SamplingPlan plan;
    explicit Fixture(const std::string& tag) : dir(testutil::scratch_dir(tag)), plan(write_training_set(dir / "train")) {}
    fs::path root() const { return dir / "runs"; }
};

json rating(const std::string& sample, const std::string& verdict, const std::string& author,
            std::vector<std::string> tags = {}) {
    return {{"sample_id", sample}, {"verdict", verdict}, {"author", author}, {"tags", tags}};
}

} // namespace

TEST(RunManager, CreateWritesPendingRun) {
    Fixture f("srv");
    RunManager runs(f.root());
    const RunRecord r = runs.create(run_body("alpha", f.plan));
    EXPECT_EQ(r.status, RunStatus::Pending);
    EXPECT_EQ(r.latest_epoch, -1);
    const RunPaths p{f.root() / "alpha"};
    for (const auto& file : {p.run_json(), p.config(), p.plan(), p.feedback()}) EXPECT_TRUE(fs::exists(file)) << file;
    EXPECT_EQ(runs.list().size(), 1u);
    EXPECT_EQ(runs.get("alpha").run_id, "alpha");
    EXPECT_TRUE(runs.epochs("alpha").empty());
}

TEST(RunManager, CreateErrors) {
    Fixture f("srv");
    RunManager runs(f.root());
    runs.create(run_body("alpha", f.plan));
    EXPECT_COLSIG_ERROR(runs.create(run_body("alpha", f.plan)), ErrorKind::Conflict);
    EXPECT_COLSIG_ERROR(runs.create(json{{"run_id", "beta"}}), ErrorKind::Parameter);
    SamplingPlan missing = f.plan;
    missing.entries[0].path = (f.dir / "nowhere.png").string();
    EXPECT_COLSIG_ERROR(runs.create(run_body("gamma", missing)), ErrorKind::NotFound);
    json bad_tau = run_body("delta", f.plan, tiny_config(), 1.5);
    EXPECT_COLSIG_ERROR(runs.create(bad_tau), ErrorKind::Parameter);
    EXPECT_COLSIG_ERROR(runs.get("nobody"), ErrorKind::NotFound);
}

TEST(RunManager, PlanPathAndGeneratedId) {
    Fixture f("srv");
    RunManager runs(f.root());
    const fs::path plan_file = f.dir / "plan.json";
    atomic_write_json(plan_file, to_json(f.plan));
    json config = tiny_config();
    const RunRecord r = runs.create({{"config", config}, {"plan_path", plan_file.string()}});
    EXPECT_TRUE(valid_run_id(r.run_id));
    EXPECT_EQ(r.status, RunStatus::Pending);
}

TEST(RunManager, LifecycleAndTransitions) {
    Fixture f("srv");
    RunManager runs(f.root());
    runs.create(run_body("alpha", f.plan));
    EXPECT_COLSIG_ERROR(runs.pause("alpha"), ErrorKind::Conflict);
    EXPECT_COLSIG_ERROR(runs.stop("alpha"), ErrorKind::Conflict);
    runs.start("alpha");
    const RunRecord done = runs.wait("alpha");
    EXPECT_EQ(done.status, RunStatus::Done) << done.error;
    EXPECT_EQ(done.latest_epoch, 2);
    EXPECT_EQ(runs.epochs("alpha"), (std::vector<int>{0, 1, 2}));
    EXPECT_COLSIG_ERROR(runs.start("alpha"), ErrorKind::Conflict);
    EXPECT_COLSIG_ERROR(runs.pause("alpha"), ErrorKind::Conflict);
    const json on_disk = read_json(f.root() / "alpha" / "run.json");
    EXPECT_EQ(on_disk.at("status"), "DONE");
    EXPECT_EQ(line_count(RunPaths{f.root() / "alpha"}.metrics()), 15u);
}

TEST(RunManager, SamplesCarryUrlsAndFlaggedFilter) {
    Fixture f("srv");
    RunManager runs(f.root());
    // tau close to 1 flags every sample as a near-copy.
    runs.create(run_body("strict", f.plan, tiny_config(), 0.999));
    runs.create(run_body("loose", f.plan, tiny_config(), 0.0));
    runs.start("strict");
    runs.wait("strict");
    runs.start("loose");
    runs.wait("loose");

    const json all = runs.samples("strict", 1, true);
    ASSERT_EQ(all.at("samples").size(), 3u);
    for (const auto& s : all.at("samples")) {
        EXPECT_TRUE(s.at("flagged").get<bool>());
        const std::string url = s.at("image_url");
        EXPECT_EQ(url, "/runs/strict/epoch_1/" + s.at("image").get<std::string>());
        EXPECT_TRUE(fs::exists(f.root() / "strict" / "epoch_1" / s.at("image").get<std::string>()));
    }
    EXPECT_TRUE(runs.samples("strict", 1, false).at("samples").empty());
    EXPECT_EQ(runs.samples("loose", 1, false).at("samples").size(), 3u);
    EXPECT_COLSIG_ERROR(runs.samples("strict", 9, true), ErrorKind::NotFound);

    const std::string flagged_id = all.at("samples")[0].at("sample_id");
    EXPECT_COLSIG_ERROR(runs.submit_rating(rating(flagged_id, "like", "ann")), ErrorKind::Rejected);
    EXPECT_EQ(line_count(RunPaths{f.root() / "strict"}.ratings()), 3u);  // epoch markers only
}

TEST(RunManager, RatingsAreLoggedAndLatestWins) {
    Fixture f("srv");
    RunManager runs(f.root());
    RunConfig cfg = tiny_config();
    cfg.train.policy.tag_threshold = 1;
    runs.create(run_body("alpha", f.plan, cfg, 0.0));
    runs.start("alpha");
    runs.wait("alpha");
    const std::string sid = make_sample_id("alpha", 2, 0);
    runs.submit_rating(rating(sid, "dislike", "ann", {tags::kTooThick}));
    runs.submit_rating(rating(sid, "like", "ann"));
    const fs::path log = RunPaths{f.root() / "alpha"}.ratings();
    const auto events = read_event_log(log);
    std::size_t ratings = 0;
    for (const auto& ev : events) ratings += std::holds_alternative<Rating>(ev);
    EXPECT_EQ(ratings, 2u);

    // Closing the window applies the policy. Ann's later rating replaced the
    // too-thick tag, so beta stays put; without it beta would rise.
    const FeedbackState init =
        initial_feedback("alpha", run_settings_from_json(read_json(RunPaths{f.root() / "alpha"}.config())));
    auto replay_with = [&](std::vector<FeedbackEvent> evs) {
        evs.push_back(EpochEnd{3});
        return replay_events(evs, init, cfg.train.policy);
    };
    EXPECT_EQ(replay_with(events).beta, init.beta);
    std::vector<FeedbackEvent> first_only;
    for (const auto& ev : events)
        if (!std::holds_alternative<Rating>(ev) || std::get<Rating>(ev).verdict == Verdict::Dislike) first_only.push_back(ev);
    EXPECT_GT(replay_with(first_only).beta, init.beta);

    EXPECT_COLSIG_ERROR(runs.submit_rating(rating("alpha-e0009-s00", "like", "ann")), ErrorKind::NotFound);
    EXPECT_COLSIG_ERROR(runs.submit_rating(rating("alpha-e0002-s07", "like", "ann")), ErrorKind::NotFound);
    EXPECT_COLSIG_ERROR(runs.submit_rating(rating("ghost-e0000-s00", "like", "ann")), ErrorKind::NotFound);
    EXPECT_COLSIG_ERROR(runs.submit_rating(rating("garbage", "like", "ann")), ErrorKind::NotFound);
    EXPECT_COLSIG_ERROR(runs.submit_rating(rating(sid, "meh", "ann")), ErrorKind::Parameter);
    EXPECT_COLSIG_ERROR(runs.submit_rating(json{{"sample_id", sid}}), ErrorKind::Format);
}

TEST(RunManager, FeedbackOverride) {
    Fixture f("srv");
    RunManager runs(f.root());
    runs.create(run_body("alpha", f.plan));
    const FeedbackState st = runs.set_feedback("alpha", {{"alpha", 0.3}, {"beta", 0.2}, {"target_thickness", 3.0}});
    EXPECT_EQ(st.alpha, 0.3);
    EXPECT_EQ(st.beta, 0.2);
    EXPECT_EQ(st.target_thickness, 3.0);
    ASSERT_FALSE(st.history.empty());
    EXPECT_EQ(st.history.back().rule, "manual-override");
    EXPECT_EQ(runs.feedback("alpha"), st);
    EXPECT_EQ(read_json(RunPaths{f.root() / "alpha"}.feedback()), to_json(st));
    EXPECT_COLSIG_ERROR(runs.set_feedback("alpha", {{"alpha", -1.0}, {"beta", 0.0}}), ErrorKind::Parameter);
    EXPECT_COLSIG_ERROR(runs.set_feedback("alpha", {{"alpha", 0.1}}), ErrorKind::Parameter);
    EXPECT_COLSIG_ERROR(runs.set_feedback("alpha", {{"alpha", 0.1}, {"beta", 0.1}, {"target_thickness", 0.0}}),
                        ErrorKind::Parameter);
}

TEST(RunManager, MetricsPagination) {
    Fixture f("srv");
    RunManager runs(f.root());
    runs.create(run_body("alpha", f.plan));
    runs.start("alpha");
    runs.wait("alpha");
    std::vector<long> steps;
    json next = 0;
    int pages = 0;
    while (!next.is_null()) {
        const json page = runs.metrics("alpha", next.get<long>(), 4);
        EXPECT_LE(page.at("records").size(), 4u);
        for (const auto& r : page.at("records")) steps.push_back(r.at("step").get<long>());
        next = page.at("next_from_step");
        ++pages;
    }
    EXPECT_EQ(pages, 4);
    ASSERT_EQ(steps.size(), 15u);
    for (std::size_t i = 1; i < steps.size(); ++i) EXPECT_LT(steps[i - 1], steps[i]);
    EXPECT_EQ(runs.metrics("alpha", steps[10], 100).at("records").size(), 5u);
    EXPECT_COLSIG_ERROR(runs.metrics("alpha", 0, 0), ErrorKind::Parameter);
}

TEST(RunManager, RecoversInterruptedRunAsPaused) {
    Fixture f("srv");
    {
        RunManager runs(f.root());
        runs.create(run_body("alpha", f.plan));
        runs.create(run_body("beta", f.plan));
    }
    // Simulate a process that died mid-training.
    const RunPaths p{f.root() / "alpha"};
    json rec = read_json(p.run_json());
    rec["status"] = "TRAINING";
    atomic_write_json(p.run_json(), rec);
    fs::create_directories(f.root() / "not-a-run");

    RunManager runs(f.root());
    EXPECT_EQ(runs.list().size(), 2u);
    EXPECT_EQ(runs.get("alpha").status, RunStatus::Paused);
    EXPECT_EQ(runs.get("beta").status, RunStatus::Pending);
    EXPECT_EQ(read_json(p.run_json()).at("status"), "PAUSED");
    runs.start("alpha");
    EXPECT_EQ(runs.wait("alpha").status, RunStatus::Done);
}

TEST(RunManager, PauseResumeMatchesUninterruptedRun) {
    Fixture f("srv");
    const RunConfig cfg = tiny_config(2000, 2);
    std::string reference;
    {
        RunManager runs(f.dir / "ref");
        runs.create(run_body("alpha", f.plan, cfg));
        runs.start("alpha");
        ASSERT_EQ(runs.wait("alpha").status, RunStatus::Done);
        reference = file_bytes(RunPaths{f.dir / "ref" / "alpha"}.checkpoint(1));
    }
    RunManager runs(f.root());
    runs.create(run_body("alpha", f.plan, cfg));
    runs.start("alpha");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    int pauses = 0;
    for (int i = 0; i < 3; ++i) {
        try {
            const RunRecord r = runs.pause("alpha");
            if (r.status != RunStatus::Paused) break;
            ++pauses;
            EXPECT_TRUE(fs::exists(RunPaths{f.root() / "alpha"}.resume()));
            runs.start("alpha");
            std::this_thread::sleep_for(std::chrono::milliseconds(15));
        } catch (const Error&) {
            break;  // finished before the pause landed
        }
    }
    ASSERT_EQ(runs.wait("alpha").status, RunStatus::Done);
    EXPECT_GE(pauses, 1);
    EXPECT_EQ(file_bytes(RunPaths{f.root() / "alpha"}.checkpoint(1)), reference);
    EXPECT_EQ(line_count(RunPaths{f.root() / "alpha"}.metrics()), 4000u);
}

TEST(RunManager, StopEndsRun) {
    Fixture f("srv");
    RunManager runs(f.root());
    runs.create(run_body("alpha", f.plan, tiny_config(20000, 1)));
    runs.start("alpha");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    const RunRecord r = runs.stop("alpha");
    EXPECT_EQ(r.status, RunStatus::Done);
    EXPECT_COLSIG_ERROR(runs.start("alpha"), ErrorKind::Conflict);
}

TEST(HttpStatus, Mapping) {
    EXPECT_EQ(http_status(ErrorKind::NotFound), 404);
    EXPECT_EQ(http_status(ErrorKind::Conflict), 409);
    EXPECT_EQ(http_status(ErrorKind::Rejected), 422);
    EXPECT_EQ(http_status(ErrorKind::Parameter), 400);
    EXPECT_EQ(http_status(ErrorKind::Format), 400);
    EXPECT_EQ(http_status(ErrorKind::Io), 500);
    const json e = error_json(ErrorKind::Conflict, "busy");
    EXPECT_EQ(e.at("error"), "conflict");
    EXPECT_EQ(e.at("message"), "busy");
}

class ApiTest : public ::testing::Test {
protected:
    void SetUp() override {
        f_ = std::make_unique<Fixture>("api");
        runs_ = std::make_unique<RunManager>(f_->root());
        api_ = std::make_unique<ApiServer>(*runs_);
        port_ = api_->bind_any();
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { api_->serve(); });
        api_->http().wait_until_ready();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    }
    void TearDown() override {
        api_->stop();
        if (thread_.joinable()) thread_.join();
        runs_->shutdown();
    }

    std::unique_ptr<Fixture> f_;
    std::unique_ptr<RunManager> runs_;
    std::unique_ptr<ApiServer> api_;
    std::unique_ptr<httplib::Client> client_;
    std::thread thread_;
    int port_ = 0;
};

TEST_F(ApiTest, RunLifecycleOverHttp) {
    auto res = client_->Post("/api/runs", run_body("web", f_->plan, tiny_config(), 0.0).dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    EXPECT_EQ(json::parse(res->body).at("status"), "PENDING");

    res = client_->Post("/api/runs", run_body("web", f_->plan).dump(), "application/json");
    EXPECT_EQ(res->status, 409);
    EXPECT_EQ(json::parse(res->body).at("error"), "conflict");

    res = client_->Post("/api/runs", "{not json", "application/json");
    EXPECT_EQ(res->status, 400);

    res = client_->Post("/api/runs/web/pause", "", "application/json");
    EXPECT_EQ(res->status, 409);
    res = client_->Get("/api/runs/ghost");
    EXPECT_EQ(res->status, 404);

    res = client_->Post("/api/runs/web/start", "", "application/json");
    EXPECT_EQ(res->status, 200);
    runs_->wait("web");

    res = client_->Get("/api/runs");
    ASSERT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body).size(), 1u);
    EXPECT_EQ(json::parse(client_->Get("/api/runs/web")->body).at("status"), "DONE");
    EXPECT_EQ(json::parse(client_->Get("/api/runs/web/epochs")->body).at("epochs"), json({0, 1, 2}));

    res = client_->Get("/api/runs/web/epochs/2/samples");
    ASSERT_EQ(res->status, 200);
    const json samples = json::parse(res->body).at("samples");
    ASSERT_EQ(samples.size(), 3u);
    const std::string url = samples[0].at("image_url");
    res = client_->Get(url);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body, file_bytes(f_->root() / "web" / "epoch_2" / samples[0].at("image").get<std::string>()));
    EXPECT_EQ(client_->Get("/api/runs/web/epochs/2/samples?include_flagged=maybe")->status, 400);
    EXPECT_EQ(client_->Get("/api/runs/web/epochs/7/samples")->status, 404);

    res = client_->Post("/api/ratings", rating(samples[0].at("sample_id"), "like", "ann").dump(), "application/json");
    EXPECT_EQ(res->status, 201);
    EXPECT_TRUE(json::parse(res->body).at("accepted").get<bool>());
    res = client_->Post("/api/ratings", rating("web-e0002-s09", "like", "ann").dump(), "application/json");
    EXPECT_EQ(res->status, 404);

    res = client_->Put("/api/runs/web/feedback", json{{"alpha", 0.5}, {"beta", 0.25}}.dump(), "application/json");
    ASSERT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body).at("alpha"), 0.5);
    EXPECT_EQ(json::parse(client_->Get("/api/runs/web/feedback")->body).at("beta"), 0.25);
    EXPECT_EQ(client_->Put("/api/runs/web/feedback", json{{"alpha", -1}, {"beta", 0}}.dump(), "application/json")->status,
              400);

    res = client_->Get("/api/runs/web/metrics?from_step=3&limit=2");
    ASSERT_EQ(res->status, 200);
    const json page = json::parse(res->body);
    EXPECT_EQ(page.at("records").size(), 2u);
    EXPECT_EQ(page.at("records")[0].at("step"), 3);
    EXPECT_EQ(page.at("next_from_step"), 5);
    EXPECT_EQ(client_->Get("/api/runs/web/metrics?limit=abc")->status, 400);
}

TEST_F(ApiTest, RejectsRatingOfFlaggedSample) {
    client_->Post("/api/runs", run_body("copy", f_->plan, tiny_config(), 0.999).dump(), "application/json");
    client_->Post("/api/runs/copy/start", "", "application/json");
    runs_->wait("copy");
    const json visible = json::parse(client_->Get("/api/runs/copy/epochs/0/samples")->body).at("samples");
    EXPECT_TRUE(visible.empty());
    const json all = json::parse(client_->Get("/api/runs/copy/epochs/0/samples?include_flagged=true")->body).at("samples");
    ASSERT_EQ(all.size(), 3u);
    auto res = client_->Post("/api/ratings", rating(all[0].at("sample_id"), "like", "ann").dump(), "application/json");
    EXPECT_EQ(res->status, 422);
    EXPECT_EQ(json::parse(res->body).at("error"), "rejected");
}

TEST_F(ApiTest, FitCollinearAnchors) {
    const json body{{"sample_id", "x-e0000-s00"},
                    {"canvas", {{"width", 256}, {"height", 64}}},
                    {"strokes", {{{10, 10}, {60, 20}, {110, 30}, {160, 40}}}}};
    auto res = client_->Post("/api/fit", body.dump(), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const json out = json::parse(res->body);
    ASSERT_EQ(out.at("polylines").size(), 1u);
    const auto& line = out.at("polylines")[0];
    EXPECT_EQ(line.size(), 128u);
    double worst = 0.0;
    for (const auto& pt : line) {
        const double x = pt[0].get<double>(), y = pt[1].get<double>();
        // distance to y = 0.2 x + 8
        worst = std::max(worst, std::abs(0.2 * x - y + 8.0) / std::sqrt(1.04));
    }
    EXPECT_LT(worst, 1.0);

    const json one{{"sample_id", "x-e0000-s00"}, {"strokes", {{{10, 10}}}}};
    EXPECT_EQ(client_->Post("/api/fit", one.dump(), "application/json")->status, 400);
}

// ---------------------------------------------------------------------------
// Command-line tool

namespace {

struct CliResult {
    int code;
    std::string out;
};

CliResult cli(const std::string& args) {
    const std::string cmd = std::string(COLSIG_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {-1, {}};
    std::string out;
    std::array<char, 4096> buf{};
    while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

} // namespace

TEST(Cli, SubcommandHelpListsFlags) {
    const std::vector<std::pair<std::string, std::vector<std::string>>> expected{
        {"synth-corpus", {"--out", "--n"}},
        {"preprocess", {"--in", "--out", "--low", "--high", "--median", "--stroke-width", "--canvas"}},
        {"dataset build", {"--manifest", "--target", "--upweight", "--out"}},
        {"train", {"--plan", "--out", "--run-id", "--epochs", "--tau", "--resume"}},
        {"sample", {"--checkpoint", "--n", "--out"}},
        {"check-mem", {"--samples", "--training", "--tau", "--out"}},
        {"vectorize", {"--sample", "--anchors", "--smoothing", "--out", "--scale"}},
        {"animate", {"--paths", "--duration", "--pen-lift", "--color", "--out"}},
        {"serve", {"--root", "--port", "--host"}},
    };
    for (const auto& [cmd, flags] : expected) {
        const CliResult r = cli(cmd + " --help");
        EXPECT_EQ(r.code, 0) << cmd;
        for (const auto& flag : flags) EXPECT_NE(r.out.find(flag), std::string::npos) << cmd << " lacks " << flag;
    }
    const CliResult top = cli("--help");
    EXPECT_EQ(top.code, 0);
    EXPECT_NE(top.out.find("--seed"), std::string::npos);
    EXPECT_NE(top.out.find("--config"), std::string::npos);
}

TEST(Cli, ErrorsAreJsonWithNonzeroExit) {
    const fs::path dir = testutil::scratch_dir("cli");
    auto first_json = [](const std::string& out) {
        std::istringstream in(out);
        for (std::string line; std::getline(in, line);) {
            auto j = json::parse(line, nullptr, false);
            if (!j.is_discarded() && j.contains("error")) return j;
        }
        return json{};
    };

    CliResult r = cli("preprocess --in " + (dir / "missing").string() + " --out " + (dir / "o").string());
    EXPECT_NE(r.code, 0);
    EXPECT_EQ(first_json(r.out).value("error", ""), "not_found") << r.out;

    r = cli("frobnicate");
    EXPECT_NE(r.code, 0);
    EXPECT_EQ(first_json(r.out).value("error", ""), "parameter_error") << r.out;

    std::ofstream(dir / "bad.json") << "{\"sample_id\": \"x\", \"strokes\": [[[1, 2]]]}";
    r = cli("vectorize --anchors " + (dir / "bad.json").string() + " --out " + (dir / "v").string());
    EXPECT_NE(r.code, 0);
    EXPECT_FALSE(first_json(r.out).empty()) << r.out;

    r = cli("preprocess --in " + dir.string() + " --out " + (dir / "o").string() + " --low 0.9 --high 0.2");
    EXPECT_NE(r.code, 0);
    EXPECT_EQ(first_json(r.out).value("error", ""), "parameter_error") << r.out;
}

TEST(Cli, FaintScanIsReportedWithSourceId) {
    const fs::path dir = testutil::scratch_dir("cli");
    const fs::path in = dir / "scans";
    fs::create_directories(in);
    write_png(in / "blank.png", RasterImage(64, 32, 1.0f));
    const CliResult r = cli("preprocess --in " + in.string() + " --out " + (dir / "out").string());
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.out.find("faint_scan"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("\"source_id\":\"blank\""), std::string::npos) << r.out;
}
