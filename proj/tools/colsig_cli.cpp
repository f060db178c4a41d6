// colsig command-line tool.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "colsig/dataset.hpp"
#include "colsig/error.hpp"
#include "colsig/image_io.hpp"
#include "colsig/imaging.hpp"
#include "colsig/run.hpp"
#include "colsig/safeguard.hpp"
#include "colsig/server.hpp"
#include "colsig/synth.hpp"
#include "colsig/trainer.hpp"
#include "colsig/vectorize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace colsig;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    bool verbose = false;
    std::string config_path;
    json config = json::object();

    json section(const char* name) const { return config.contains(name) ? config.at(name) : json::object(); }
};

Globals g;

void info(const std::string& m) {
    if (g.verbose) std::cerr << m << '\n';
}

void emit_error(ErrorKind kind, const std::string& message, const json& extra = json::object()) {
    json j{{"error", to_string(kind)}, {"message", message}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    std::cerr << j.dump() << '\n';
}

void write_json_file(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    atomic_write_json(path, j);
}

Canvas parse_canvas(const std::string& s) {
    const auto x = s.find_first_of("xX");
    require(x != std::string::npos, ErrorKind::Parameter, "canvas must look like HxW, e.g. 64x256");
    try {
        std::size_t a = 0, b = 0;
        const int h = std::stoi(s.substr(0, x), &a);
        const int w = std::stoi(s.substr(x + 1), &b);
        require(a == x && b == s.size() - x - 1 && h >= 1 && w >= 1, ErrorKind::Parameter, "bad canvas '" + s + "'");
        return {h, w};
    } catch (const std::logic_error&) {
        throw Error(ErrorKind::Parameter, "bad canvas '" + s + "'");
    }
}

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted.store(true); }

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    int n = -1;
};

void run_synth(const SynthArgs& a) {
    SynthCorpusSpec spec = g.section("synth").get<SynthCorpusSpec>();
    if (a.n > 0) spec.n_per_community = a.n;
    if (g.seed) spec.seed = *g.seed;
    const auto entries = write_synth_corpus(spec, a.out);
    std::cout << json{{"images", entries.size()}, {"manifest", (fs::path(a.out) / "manifest.tsv").string()}}.dump()
              << '\n';
}

struct PreprocessArgs {
    std::string in, out;
    std::optional<float> low, high;
    std::optional<int> median;
    std::optional<double> stroke_width;
    std::string canvas;
    std::optional<int> margin;
    std::string community = "university";
    int jobs = 0;
};

void run_preprocess(const PreprocessArgs& a) {
    PreprocessParams params;
    const json cfg = g.section("preprocess");
    params.low_thresh = cfg.value("low", params.low_thresh);
    params.high_thresh = cfg.value("high", params.high_thresh);
    params.median_window = cfg.value("median", params.median_window);
    params.target_stroke_width = cfg.value("stroke_width", params.target_stroke_width);
    params.margin = cfg.value("margin", params.margin);
    if (cfg.contains("canvas")) params.canvas = parse_canvas(cfg.at("canvas").get<std::string>());
    if (a.low) params.low_thresh = *a.low;
    if (a.high) params.high_thresh = *a.high;
    if (a.median) params.median_window = *a.median;
    if (a.stroke_width) params.target_stroke_width = *a.stroke_width;
    if (a.margin) params.margin = *a.margin;
    if (!a.canvas.empty()) params.canvas = parse_canvas(a.canvas);
    params.validate();

    const fs::path in(a.in), out(a.out);
    require(fs::is_directory(in), ErrorKind::NotFound, "input directory '" + a.in + "' does not exist");
    std::vector<ManifestEntry> inputs;
    if (fs::exists(in / "manifest.tsv")) {
        inputs = read_manifest(in / "manifest.tsv");
        for (auto& e : inputs)
            if (fs::path(e.path).is_relative()) e.path = (in / e.path).string();
    } else {
        const Community c = parse_community(a.community);
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(in))
            if (e.is_regular_file() && is_raster_file(e.path())) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) inputs.push_back({f.string(), f.stem().string(), c});
    }
    require(!inputs.empty(), ErrorKind::NotFound, "no raster files in '" + a.in + "'");
    fs::create_directories(out);

    struct Outcome {
        std::optional<ManifestEntry> entry;
        std::optional<Error> error;
    };
    std::vector<Outcome> results(inputs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < inputs.size(); i = next++) {
            const auto& e = inputs[i];
            try {
                const auto p = normalize_signature(load_scan(e.path), params, e.source_id, e.community);
                write_mask_png(out / (e.source_id + ".png"), p.mask);
                results[i].entry = ManifestEntry{e.source_id + ".png", e.source_id, e.community};
            } catch (const Error& ex) {
                results[i].error = ex;
            }
        }
    };
    const int jobs = a.jobs > 0 ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<ManifestEntry> kept;
    json rejected = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].entry) {
            kept.push_back(*results[i].entry);
        } else {
            const auto& ex = *results[i].error;
            emit_error(ex.kind(), ex.what(), {{"source_id", inputs[i].source_id}});
            rejected.push_back({{"source_id", inputs[i].source_id}, {"error", to_string(ex.kind())}, {"message", ex.what()}});
        }
    }
    {
        std::ofstream m(out / "manifest.tsv");
        write_manifest(m, kept);
    }
    if (!rejected.empty()) write_json_file(out / "rejected.json", rejected);
    std::cout << json{{"processed", kept.size()}, {"rejected", rejected.size()},
                      {"manifest", (out / "manifest.tsv").string()}}.dump()
              << '\n';
    require(!kept.empty(), ErrorKind::FaintScan, "every input was rejected");
}

struct DatasetArgs {
    std::string manifest, target = "university", out;
    double upweight = 3.0;
};

void run_dataset_build(const DatasetArgs& a) {
    const SamplingPlan plan = plan_from_manifest(a.manifest, parse_community(a.target), a.upweight);
    write_json_file(a.out, to_json(plan));
    double target_mass = 0.0;
    for (std::size_t i = 0; i < plan.entries.size(); ++i)
        if (plan.entries[i].community == plan.target_community) target_mass += plan.probabilities[i];
    std::cout << json{{"entries", plan.entries.size()}, {"target_draw_rate", target_mass}, {"plan", a.out}}.dump() << '\n';
}

struct TrainArgs {
    std::string plan, out = "runs", run_id;
    std::optional<int> epochs;
    std::optional<double> tau;
    bool resume = false;
};

RunSettings settings_from_config() {
    json cfg = g.config;
    // A bare TrainConfig document is accepted as well as a full run config.
    if (!cfg.contains("train") && !cfg.contains("generator") && !cfg.contains("critic") && !cfg.empty()) {
        json t = cfg;
        t.erase("tau");
        cfg = json{{"train", t}, {"tau", g.config.value("tau", 0.05)}};
    }
    return run_settings_from_json(cfg);
}

void run_train(const TrainArgs& a) {
    RunSettings settings = settings_from_config();
    if (g.seed) settings.model.train.rng_seed = *g.seed;
    if (a.epochs) settings.model.train.epochs = *a.epochs;
    if (a.tau) settings.tau = *a.tau;
    settings.model.generator.validate(settings.model.critic.height, settings.model.critic.width);
    settings.model.critic.validate(settings.model.generator.out_height(), settings.model.generator.out_width());

    const std::string id = a.run_id.empty() ? "run-" + std::to_string(settings.model.train.rng_seed) : a.run_id;
    const RunPaths p{fs::path(a.out) / id};
    if (a.resume) {
        require(fs::exists(p.run_json()), ErrorKind::NotFound, "no run '" + id + "' to resume under '" + a.out + "'");
    } else {
        require(!a.plan.empty(), ErrorKind::Parameter, "--plan is required for a new run");
        const SamplingPlan plan = plan_from_json(read_json(a.plan));
        create_run_dir(a.out, id, settings, plan);
    }

    RunRecord rec = run_record_from_json(read_json(p.run_json()));
    auto set_status = [&](RunStatus s, const std::string& err = {}) {
        require(transition_allowed(rec.status, s), ErrorKind::Conflict,
                "run '" + id + "' cannot go from " + to_string(rec.status) + " to " + to_string(s));
        rec.status = s;
        rec.error = err;
        atomic_write_json(p.run_json(), to_json(rec));
    };
    set_status(RunStatus::Training);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    EventLog events = open_event_log(p, id);
    ExecuteOptions opt;
    opt.should_pause = [] { return g_interrupted.load(); };
    opt.log = [](const std::string& m) { info(m); };
    opt.on_epoch = [&](int e) {
        rec.latest_epoch = e;
        atomic_write_json(p.run_json(), to_json(rec));
        info("epoch " + std::to_string(e) + " written to " + p.epoch_dir(e).string());
    };
    try {
        const RunOutcome out = execute_run(p, events, opt);
        set_status(out == RunOutcome::Completed ? RunStatus::Done : RunStatus::Paused);
    } catch (const Error& ex) {
        set_status(RunStatus::Failed, ex.what());
        throw;
    }
    std::cout << json{{"run_id", id}, {"status", to_string(rec.status)}, {"latest_epoch", rec.latest_epoch},
                      {"dir", p.dir.string()}}.dump()
              << '\n';
}

struct SampleArgs {
    std::string checkpoint, out;
    int n = 16;
};

template <typename S>
void sample_with(const CheckpointHeader& h, const SampleArgs& a) {
    const RunConfig cfg = h.meta.at("config").get<RunConfig>();
    Generator<S> gen(cfg.generator);
    {
        std::ifstream is(a.checkpoint, std::ios::binary);
        read_checkpoint_header(is);
        gen.params() = detail::read_vec<S>(is);
        require(gen.params().size() > 0, ErrorKind::Format, "checkpoint has no generator weights");
    }
    std::mt19937_64 rng(g.seed.value_or(0));
    std::normal_distribution<double> nd(0.0, 1.0);
    fs::create_directories(a.out);
    json listing = json::array();
    for (int k = 0; k < a.n; ++k) {
        std::vector<double> z(static_cast<std::size_t>(cfg.generator.latent_dim));
        for (auto& v : z) v = nd(rng);
        const std::string name = "sample_" + std::to_string(k) + ".png";
        write_png(fs::path(a.out) / name, gen.generate(z));
        listing.push_back({{"image", name}, {"latent", z}});
    }
    write_json_file(fs::path(a.out) / "samples.json",
                    {{"checkpoint", a.checkpoint}, {"seed", g.seed.value_or(0)}, {"samples", listing}});
    std::cout << json{{"samples", a.n}, {"out", a.out}}.dump() << '\n';
}

void run_sample(const SampleArgs& a) {
    require(a.n >= 1, ErrorKind::Parameter, "--n must be >= 1");
    const CheckpointHeader h = read_checkpoint_header(a.checkpoint);
    if (h.scalar_bytes == sizeof(double)) sample_with<double>(h, a);
    else if (h.scalar_bytes == sizeof(float)) sample_with<float>(h, a);
    else throw Error(ErrorKind::Format, "unsupported checkpoint precision");
}

struct CheckMemArgs {
    std::string samples, training, out;
    double tau = 0.05;
};

std::vector<NamedImage> load_dir_images(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorKind::NotFound, "directory '" + dir.string() + "' does not exist");
    std::vector<NamedImage> out;
    if (fs::exists(dir / "manifest.tsv")) {
        for (const auto& e : read_manifest(dir / "manifest.tsv")) {
            const fs::path p = fs::path(e.path).is_relative() ? dir / e.path : fs::path(e.path);
            out.push_back({e.source_id, read_raster(p)});
        }
        return out;
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_raster_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back({f.stem().string(), read_raster(f)});
    return out;
}

void run_check_mem(const CheckMemArgs& a) {
    const auto training = load_dir_images(a.training);
    require(!training.empty(), ErrorKind::NotFound, "no training images in '" + a.training + "'");
    TrainingIndex index;
    for (const auto& t : training) index.add(t.id, t.image);
    auto samples = load_dir_images(a.samples);
    // Epoch directories name their images sample_<K>; use the published ids.
    if (fs::exists(fs::path(a.samples) / "samples.json")) {
        const json doc = read_json(fs::path(a.samples) / "samples.json");
        std::map<std::string, std::string> ids;
        for (const auto& s : doc.at("samples"))
            if (s.contains("sample_id")) ids[fs::path(s.at("image").get<std::string>()).stem().string()] = s.at("sample_id");
        for (auto& s : samples)
            if (ids.count(s.id)) s.id = ids[s.id];
    }
    require(!samples.empty(), ErrorKind::NotFound, "no sample images in '" + a.samples + "'");
    const auto reports = screen_batch(samples, index, a.tau);
    write_json_file(a.out, to_json(reports));
    std::size_t flagged = 0;
    for (const auto& r : reports) flagged += r.flagged;
    std::cout << json{{"samples", reports.size()}, {"flagged", flagged}, {"report", a.out}}.dump() << '\n';
}

struct VectorizeArgs {
    std::string sample, anchors, out;
    double smoothing = 0.0;
    double stroke_width = 2.0;
    double scale = 85.0;
    double inches_per_px = 0.1;
    std::string color = "black";
};

void draw_overlay(RasterImage& img, const PathDocument& doc) {
    for (const auto& s : doc.strokes) {
        const int n = std::max(2, static_cast<int>(arc_length(s) * 2));
        for (Point p : resample_arclength(s, n)) {
            const int x = static_cast<int>(std::floor(p.x)), y = static_cast<int>(std::floor(p.y));
            if (img.contains(x, y)) img(x, y) = 0.5f;
        }
    }
}

void run_vectorize(const VectorizeArgs& a) {
    const AnchorSet anchors = anchors_from_json(read_json(a.anchors));
    FitOptions opt;
    opt.smoothing = a.smoothing;
    const PathDocument doc = fit_anchor_set(anchors, opt);
    const fs::path out(a.out);
    fs::create_directories(out);
    if (!a.sample.empty()) {
        RasterImage img = read_raster(a.sample);
        require(img.width == anchors.canvas_width && img.height == anchors.canvas_height, ErrorKind::Shape,
                "sample is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                    " but the anchors were placed on a " + std::to_string(anchors.canvas_width) + "x" +
                    std::to_string(anchors.canvas_height) + " canvas");
        draw_overlay(img, doc);
        write_png(out / "overlay.png", img);
    }
    write_json_file(out / "paths.json", to_json(doc));
    atomic_write_text(out / "signature.svg", export_svg(doc, a.stroke_width, parse_color_mode(a.color)));
    write_json_file(out / "fabrication.json", to_json(scale_for_fabrication(doc, a.scale, a.inches_per_px)));
    std::cout << json{{"strokes", doc.strokes.size()}, {"paths", (out / "paths.json").string()},
                      {"svg", (out / "signature.svg").string()}}.dump()
              << '\n';
}

struct AnimateArgs {
    std::string paths, out, color = "black";
    double duration = 60.0;
    double pen_lift = 0.5;
};

void run_animate(const AnimateArgs& a) {
    const PathDocument doc = paths_from_json(read_json(a.paths));
    AnimationOptions opt;
    opt.total_duration = a.duration;
    opt.pen_lift = a.pen_lift;
    opt.color = parse_color_mode(a.color);
    const AnimationScript script = build_animation(doc.strokes, opt);
    for (const auto& w : script.warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
    write_json_file(a.out, to_json(script));
    double sum = 0.0;
    for (const auto& s : script.segments) sum += s.duration();
    std::cout << json{{"segments", script.segments.size()}, {"total_duration", sum}, {"out", a.out}}.dump() << '\n';
}

struct ServeArgs {
    std::string root = "runs", host = "127.0.0.1";
    int port = 8080;
};

httplib::Server* g_http = nullptr;
extern "C" void on_serve_signal(int) {
    if (g_http) g_http->stop();
}

void run_serve(const ServeArgs& a) {
    RunManager runs(a.root, [](const std::string& m) { info(m); });
    ApiServer api(runs);
    require(api.bind(a.host, a.port), ErrorKind::Io, "cannot bind " + a.host + ":" + std::to_string(a.port));
    g_http = &api.http();
    std::signal(SIGINT, on_serve_signal);
    std::signal(SIGTERM, on_serve_signal);
    std::cerr << json{{"listening", a.host + ":" + std::to_string(a.port)}, {"root", a.root}}.dump() << '\n';
    api.serve();
    g_http = nullptr;
    runs.shutdown();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Collective-signature pipeline: preprocessing, weighted GAN training, memorization screening, "
                 "curation server and vector export."};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Random seed (overrides the config file)");
    app.add_flag("-v,--verbose", g.verbose, "Progress messages on standard error");
    app.add_option("--config", g.config_path, "JSON config overriding defaults")->check(CLI::ExistingFile);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth-corpus", "Generate the synthetic squiggle corpus plus manifest.tsv");
    c_synth->add_option("--out", synth.out, "Output directory")->required();
    c_synth->add_option("--n", synth.n, "Signatures per community (default 500)");

    PreprocessArgs pre;
    auto* c_pre = app.add_subcommand("preprocess", "Normalize scans into canvas-sized binary masks");
    c_pre->add_option("--in", pre.in, "Directory of scans (uses its manifest.tsv when present)")->required();
    c_pre->add_option("--out", pre.out, "Output directory for <source_id>.png and manifest.tsv")->required();
    c_pre->add_option("--low", pre.low, "Hysteresis low threshold (default 0.3)");
    c_pre->add_option("--high", pre.high, "Hysteresis high threshold (default 0.6)");
    c_pre->add_option("--median", pre.median, "Median window, odd (default 3)");
    c_pre->add_option("--stroke-width", pre.stroke_width, "Target stroke width in canvas pixels (default 2)");
    c_pre->add_option("--canvas", pre.canvas, "Canvas as HxW (default 64x256)");
    c_pre->add_option("--margin", pre.margin, "Canvas margin in pixels (default 4)");
    c_pre->add_option("--community", pre.community, "Community for scans without a manifest")
        ->check(CLI::IsMember({"university", "city"}, CLI::ignore_case));
    c_pre->add_option("--jobs", pre.jobs, "Worker threads (default: all cores)");

    DatasetArgs ds;
    auto* c_ds = app.add_subcommand("dataset", "Dataset tools");
    c_ds->require_subcommand(1);
    auto* c_build = c_ds->add_subcommand("build", "Build a community-weighted sampling plan from a manifest");
    c_build->add_option("--manifest", ds.manifest, "Manifest file (path, source_id, community)")->required()->check(CLI::ExistingFile);
    c_build->add_option("--target", ds.target, "Community to upweight")
        ->check(CLI::IsMember({"university", "city"}, CLI::ignore_case));
    c_build->add_option("--upweight", ds.upweight, "Sampling weight of the target community (>= 1, default 3)");
    c_build->add_option("--out", ds.out, "Output plan.json")->required();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train a WGAN-GP run (config via --config train.json)");
    c_train->add_option("--plan", tr.plan, "Sampling plan from `dataset build`");
    c_train->add_option("--out", tr.out, "Runs root directory (default runs)");
    c_train->add_option("--run-id", tr.run_id, "Run id (default run-<seed>)");
    c_train->add_option("--epochs", tr.epochs, "Override the configured epoch count");
    c_train->add_option("--tau", tr.tau, "Memorization threshold for epoch screening (default 0.05)");
    c_train->add_flag("--resume", tr.resume, "Continue an existing paused or interrupted run");

    SampleArgs sm;
    auto* c_sample = app.add_subcommand("sample", "Generate images from a checkpoint");
    c_sample->add_option("--checkpoint", sm.checkpoint, "checkpoint.bin")->required()->check(CLI::ExistingFile);
    c_sample->add_option("--n", sm.n, "Number of samples (default 16)");
    c_sample->add_option("--out", sm.out, "Output directory")->required();

    CheckMemArgs cm;
    auto* c_mem = app.add_subcommand("check-mem", "Screen samples against the training set");
    c_mem->add_option("--samples", cm.samples, "Directory of generated images")->required();
    c_mem->add_option("--training", cm.training, "Directory of processed training masks")->required();
    c_mem->add_option("--tau", cm.tau, "Flag threshold on blurred RMS distance (default 0.05)");
    c_mem->add_option("--out", cm.out, "Report JSON")->required();

    VectorizeArgs vz;
    auto* c_vec = app.add_subcommand("vectorize", "Fit B-splines to hand-placed anchors and export SVG");
    c_vec->add_option("--sample", vz.sample, "Sample PNG the anchors were placed on")->check(CLI::ExistingFile);
    c_vec->add_option("--anchors", vz.anchors, "Anchor file (JSON)")->required()->check(CLI::ExistingFile);
    c_vec->add_option("--smoothing", vz.smoothing, "Roughness penalty weight (default 0: interpolate)");
    c_vec->add_option("--out", vz.out, "Output directory")->required();
    c_vec->add_option("--stroke-width", vz.stroke_width, "SVG stroke width (default 2)");
    c_vec->add_option("--scale", vz.scale, "Fabrication scale factor (default 85)");
    c_vec->add_option("--inches-per-px", vz.inches_per_px, "Canvas-to-inch mapping (default 0.1)");
    c_vec->add_option("--color", vz.color, "black or white")->check(CLI::IsMember({"black", "white"}));

    AnimateArgs an;
    auto* c_anim = app.add_subcommand("animate", "Build the timed signing script");
    c_anim->add_option("--paths", an.paths, "paths.json from vectorize")->required()->check(CLI::ExistingFile);
    c_anim->add_option("--duration", an.duration, "Cycle length in seconds (default 60)");
    c_anim->add_option("--pen-lift", an.pen_lift, "Gap between strokes in seconds (default 0.5)");
    c_anim->add_option("--color", an.color, "black or white")->check(CLI::IsMember({"black", "white"}));
    c_anim->add_option("--out", an.out, "Output animation JSON")->required();

    ServeArgs sv;
    auto* c_serve = app.add_subcommand("serve", "Serve the run API and sample images");
    c_serve->add_option("--root", sv.root, "Runs root directory (default runs)");
    c_serve->add_option("--port", sv.port, "TCP port (default 8080)");
    c_serve->add_option("--host", sv.host, "Bind address (default 127.0.0.1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error(ErrorKind::Parameter, e.what());
        return 2;
    }

    try {
        if (app.count("--seed")) g.seed = seed;
        if (!g.config_path.empty()) g.config = read_json(g.config_path);
        if (*c_synth) run_synth(synth);
        else if (*c_pre) run_preprocess(pre);
        else if (*c_build) run_dataset_build(ds);
        else if (*c_train) run_train(tr);
        else if (*c_sample) run_sample(sm);
        else if (*c_mem) run_check_mem(cm);
        else if (*c_vec) run_vectorize(vz);
        else if (*c_anim) run_animate(an);
        else if (*c_serve) run_serve(sv);
    } catch (const TrainingDiverged& e) {
        emit_error(e.kind(), e.what(), {{"snapshot", e.snapshot()}});
        return 1;
    } catch (const Error& e) {
        emit_error(e.kind(), e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        emit_error(ErrorKind::Io, e.what());
        return 1;
    } catch (const nlohmann::json::exception& e) {
        emit_error(ErrorKind::Format, e.what());
        return 1;
    } catch (const std::exception& e) {
        emit_error(ErrorKind::Io, e.what());
        return 1;
    }
    return 0;
}
