#pragma once

// On-disk run directories. Everything a run needs to be reconstructed
// lives here; readers only ever see files that were atomically renamed
// into place.
//
//   <root>/<run_id>/run.json           RunRecord
//   <root>/<run_id>/config.json        RunConfig + safeguard threshold
//   <root>/<run_id>/plan.json          SamplingPlan (absolute paths)
//   <root>/<run_id>/metrics.log        one JSON record per critic step
//   <root>/<run_id>/ratings.log        feedback event log
//   <root>/<run_id>/feedback.json      FeedbackState snapshot
//   <root>/<run_id>/resume.bin         mid-epoch state after a pause
//   <root>/<run_id>/epoch_<E>/         checkpoint.bin, sample_<K>.png,
//                                      samples.json, memorization.json

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "colsig/dataset.hpp"
#include "colsig/error.hpp"
#include "colsig/feedback.hpp"
#include "colsig/image_io.hpp"
#include "colsig/safeguard.hpp"
#include "colsig/trainer.hpp"

namespace colsig {

namespace fs = std::filesystem;

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& ex) {
        throw Error(ErrorKind::Format, "'" + path.string() + "' is not valid JSON: " + ex.what());
    }
}

/// Writes through a sibling temporary and renames over the target.
inline void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
        body(out);
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "failed writing '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline void atomic_write_text(const fs::path& path, const std::string& text) {
    atomic_write(path, [&](std::ostream& os) { os << text; });
}

inline void atomic_write_json(const fs::path& path, const nlohmann::json& j) { atomic_write_text(path, j.dump(2) + "\n"); }

enum class RunStatus { Pending, Training, Paused, Done, Failed };

inline std::string to_string(RunStatus s) {
    switch (s) {
    case RunStatus::Pending: return "PENDING";
    case RunStatus::Training: return "TRAINING";
    case RunStatus::Paused: return "PAUSED";
    case RunStatus::Done: return "DONE";
    case RunStatus::Failed: return "FAILED";
    }
    return "FAILED";
}

inline RunStatus parse_run_status(const std::string& s) {
    for (auto v : {RunStatus::Pending, RunStatus::Training, RunStatus::Paused, RunStatus::Done, RunStatus::Failed})
        if (to_string(v) == s) return v;
    throw Error(ErrorKind::Format, "unknown run status '" + s + "'");
}

/// PENDING -> TRAINING -> {PAUSED <-> TRAINING, DONE, FAILED}
inline bool transition_allowed(RunStatus from, RunStatus to) {
    switch (from) {
    case RunStatus::Pending: return to == RunStatus::Training;
    case RunStatus::Training: return to == RunStatus::Paused || to == RunStatus::Done || to == RunStatus::Failed;
    case RunStatus::Paused: return to == RunStatus::Training;
    default: return false;
    }
}

struct RunRecord {
    std::string run_id;
    RunStatus status = RunStatus::Pending;
    std::string created_at;
    int latest_epoch = -1;
    std::string error;
};

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json j{{"run_id", r.run_id},
                     {"status", to_string(r.status)},
                     {"created_at", r.created_at},
                     {"latest_epoch", r.latest_epoch}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.status = parse_run_status(j.at("status").get<std::string>());
    r.created_at = j.value("created_at", std::string{});
    r.latest_epoch = j.value("latest_epoch", -1);
    r.error = j.value("error", std::string{});
    return r;
}

/// Configuration stored in config.json.
struct RunSettings {
    RunConfig model{};
    double tau = 0.05;
};

inline nlohmann::json to_json(const RunSettings& s) {
    nlohmann::json j = s.model;
    j["tau"] = s.tau;
    return j;
}

inline RunSettings run_settings_from_json(const nlohmann::json& j) {
    RunSettings s;
    try {
        s.model = j.get<RunConfig>();
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::Format, std::string("malformed run config: ") + ex.what());
    }
    s.tau = j.value("tau", s.tau);
    require(s.tau >= 0.0 && s.tau < 1.0, ErrorKind::Parameter, "tau must lie in [0,1)");
    s.model.train.validate();
    s.model.generator.check();
    s.model.critic.check();
    return s;
}

inline bool valid_run_id(const std::string& id) {
    static const std::regex re("[A-Za-z0-9][A-Za-z0-9_.-]{0,63}");
    return std::regex_match(id, re);
}

struct RunPaths {
    fs::path dir;

    fs::path run_json() const { return dir / "run.json"; }
    fs::path config() const { return dir / "config.json"; }
    fs::path plan() const { return dir / "plan.json"; }
    fs::path metrics() const { return dir / "metrics.log"; }
    fs::path ratings() const { return dir / "ratings.log"; }
    fs::path feedback() const { return dir / "feedback.json"; }
    fs::path resume() const { return dir / "resume.bin"; }
    fs::path diagnostic() const { return dir / "diagnostic.json"; }
    fs::path epoch_dir(int e) const { return dir / ("epoch_" + std::to_string(e)); }
    fs::path checkpoint(int e) const { return epoch_dir(e) / "checkpoint.bin"; }
    fs::path sample(int e, int k) const { return epoch_dir(e) / ("sample_" + std::to_string(k) + ".png"); }
    fs::path samples_json(int e) const { return epoch_dir(e) / "samples.json"; }
    fs::path memorization(int e) const { return epoch_dir(e) / "memorization.json"; }
};

/// Highest published epoch directory, or -1.
inline int latest_epoch_on_disk(const RunPaths& p) {
    int best = -1;
    if (!fs::exists(p.dir)) return best;
    static const std::regex re("epoch_([0-9]+)");
    for (const auto& e : fs::directory_iterator(p.dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (e.is_directory() && std::regex_match(name, m, re)) best = std::max(best, std::stoi(m[1].str()));
    }
    return best;
}

/// Resolves manifest-relative paths and builds a plan whose entries carry
/// absolute paths, so the plan file can live anywhere.
inline SamplingPlan plan_from_manifest(const fs::path& manifest, Community target, double upweight) {
    auto entries = read_manifest(manifest);
    const fs::path base = fs::absolute(manifest).parent_path();
    for (auto& e : entries) {
        fs::path p(e.path);
        if (p.is_relative()) e.path = fs::weakly_canonical(base / p).string();
    }
    return build_plan(std::move(entries), target, upweight);
}

inline std::vector<RasterImage> load_plan_images(const SamplingPlan& plan) {
    std::vector<RasterImage> out;
    out.reserve(plan.entries.size());
    for (const auto& e : plan.entries) out.push_back(read_raster(e.path));
    return out;
}

/// Serializes appends to one run's event log and folds it into feedback
/// state. Exactly one instance per run should exist in a process.
class EventLog {
public:
    EventLog(fs::path path, FeedbackState initial, FeedbackPolicy policy)
        : path_(std::move(path)), initial_(std::move(initial)), policy_(policy) {}

    void append(const FeedbackEvent& ev) {
        std::lock_guard lock(mu_);
        append_event(path_, ev);
    }

    std::vector<FeedbackEvent> events() const {
        std::lock_guard lock(mu_);
        return read_event_log(path_);
    }

    FeedbackState replay() const { return replay_events(events(), initial_, policy_); }

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    FeedbackState initial_;
    FeedbackPolicy policy_;
    mutable std::mutex mu_;
};

inline FeedbackState initial_feedback(const std::string& run_id, const RunSettings& s) {
    FeedbackState st;
    st.run_id = run_id;
    st.target_thickness = s.model.train.initial_target_thickness;
    return st;
}

/// Creates the directory for a new run. Fails with Conflict if it exists.
inline RunRecord create_run_dir(const fs::path& root, const std::string& run_id, const RunSettings& settings,
                                const SamplingPlan& plan) {
    require(valid_run_id(run_id), ErrorKind::Parameter, "invalid run id '" + run_id + "'");
    const RunPaths p{root / run_id};
    require(!fs::exists(p.dir), ErrorKind::Conflict, "run '" + run_id + "' already exists");
    settings.model.train.validate();
    fs::create_directories(root);
    const fs::path staging = root / ("." + run_id + ".creating");
    fs::remove_all(staging);
    fs::create_directories(staging);
    const RunPaths sp{staging};
    RunRecord rec{run_id, RunStatus::Pending, utc_timestamp(), -1, {}};
    atomic_write_json(sp.config(), to_json(settings));
    atomic_write_json(sp.plan(), to_json(plan));
    atomic_write_json(sp.feedback(), to_json(initial_feedback(run_id, settings)));
    atomic_write_json(sp.run_json(), to_json(rec));
    fs::rename(staging, p.dir);
    return rec;
}

/// Drops metric records past `step` (written after the checkpoint we are
/// resuming from).
inline void truncate_metrics(const fs::path& path, long step) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::string line, kept;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("step")) continue;
        if (j.at("step").get<long>() > step) continue;
        kept += line;
        kept += '\n';
    }
    in.close();
    atomic_write_text(path, kept);
}

struct ExecuteOptions {
    std::function<bool()> should_pause;
    std::function<void(const std::string&)> log;
    /// Called after each epoch directory is published.
    std::function<void(int epoch)> on_epoch;
};

/// Runs (or resumes) training for a run directory until done or paused.
/// Resumes from resume.bin when present, else from the newest epoch
/// checkpoint, else from scratch.
template <typename S>
RunOutcome execute_run(const RunPaths& p, EventLog& events, const ExecuteOptions& opt = {}) {
    auto log = [&](const std::string& m) {
        if (opt.log) opt.log(m);
    };
    const RunSettings settings = run_settings_from_json(read_json(p.config()));
    const SamplingPlan plan = plan_from_json(read_json(p.plan()));
    const RunRecord rec = run_record_from_json(read_json(p.run_json()));
    const auto images = load_plan_images(plan);

    Trainer<S> trainer(rec.run_id, settings.model, plan, images);
    const int latest = latest_epoch_on_disk(p);
    if (fs::exists(p.resume())) {
        trainer.load(p.resume());
        log("resuming from pause at step " + std::to_string(trainer.steps_done()));
    } else if (latest >= 0) {
        trainer.load(p.checkpoint(latest));
        log("resuming from epoch " + std::to_string(latest) + " checkpoint");
    }
    truncate_metrics(p.metrics(), trainer.steps_done());
    // Epoch markers already in the log must not be duplicated on resume.
    int logged_epochs = -1;
    for (const auto& ev : events.events())
        if (const auto* e = std::get_if<EpochEnd>(&ev)) logged_epochs = std::max(logged_epochs, e->epoch);

    TrainingIndex index;
    for (std::size_t i = 0; i < images.size(); ++i) index.add(plan.entries[i].source_id, images[i]);

    std::ofstream metrics(p.metrics(), std::ios::app);
    if (!metrics) throw Error(ErrorKind::Io, "cannot open '" + p.metrics().string() + "'");

    TrainCallbacks cb;
    cb.should_pause = opt.should_pause;
    cb.on_step = [&](const StepMetrics& m) { metrics << to_json(m).dump() << '\n' << std::flush; };
    cb.feedback = [&](int, const FeedbackState&) { return events.replay(); };
    cb.on_epoch = [&](const SampleBatch& batch) {
        const int e = batch.epoch;
        fs::path staging = p.dir / (".epoch_" + std::to_string(e) + ".tmp");
        fs::remove_all(staging);
        fs::create_directories(staging);
        trainer.save(staging / "checkpoint.bin");
        std::vector<NamedImage> named;
        nlohmann::json samples = nlohmann::json::array();
        for (std::size_t k = 0; k < batch.images.size(); ++k) {
            write_png(staging / ("sample_" + std::to_string(k) + ".png"), batch.images[k]);
            named.push_back({batch.sample_ids[k], batch.images[k]});
        }
        const auto reports = screen_batch(named, index, settings.tau);
        for (std::size_t k = 0; k < batch.images.size(); ++k)
            samples.push_back({{"sample_id", batch.sample_ids[k]},
                               {"index", k},
                               {"image", "sample_" + std::to_string(k) + ".png"},
                               {"latent", batch.latents[k]},
                               {"flagged", reports[k].flagged},
                               {"distance", reports[k].distance},
                               {"nearest_source_id", reports[k].nearest_source_id},
                               {"direction_diversity", direction_diversity(batch.images[k])},
                               {"thickness_penalty",
                                thickness_penalty(batch.images[k], trainer.feedback().target_thickness)}});
        {
            std::ofstream os(staging / "samples.json");
            os << nlohmann::json{{"run_id", batch.run_id}, {"epoch", e}, {"samples", samples}}.dump(2) << '\n';
        }
        {
            std::ofstream os(staging / "memorization.json");
            os << to_json(reports).dump(2) << '\n';
        }
        fs::remove_all(p.epoch_dir(e));
        fs::rename(staging, p.epoch_dir(e));
        fs::remove(p.resume());

        if (e > logged_epochs) {
            events.append(EpochEnd{e});
            logged_epochs = e;
        }
        atomic_write_json(p.feedback(), to_json(events.replay()));
        log("epoch " + std::to_string(e) + " published");
        if (opt.on_epoch) opt.on_epoch(e);
    };

    try {
        const RunOutcome out = trainer.run(cb);
        if (out == RunOutcome::Paused) {
            atomic_write(p.resume(), [&](std::ostream& os) { trainer.save(os); });
            log("paused at step " + std::to_string(trainer.steps_done()));
        } else {
            fs::remove(p.resume());
        }
        return out;
    } catch (const TrainingDiverged& ex) {
        atomic_write_json(p.diagnostic(), ex.snapshot());
        throw;
    }
}

/// Dispatches on the configured precision.
inline RunOutcome execute_run(const RunPaths& p, EventLog& events, const ExecuteOptions& opt = {}) {
    const RunSettings settings = run_settings_from_json(read_json(p.config()));
    if (settings.model.train.precision == "double") return execute_run<double>(p, events, opt);
    return execute_run<float>(p, events, opt);
}

inline EventLog open_event_log(const RunPaths& p, const std::string& run_id) {
    const RunSettings settings = run_settings_from_json(read_json(p.config()));
    return EventLog(p.ratings(), initial_feedback(run_id, settings), settings.model.train.policy);
}

} // namespace colsig
