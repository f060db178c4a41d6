#pragma once

// Run orchestration and the HTTP API used by the curation front end.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "colsig/error.hpp"
#include "colsig/run.hpp"
#include "colsig/vectorize.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

namespace colsig {

/// Owns every run under a root directory. Each run has at most one
/// training thread; it is the only writer of checkpoints and metrics, and
/// the run's EventLog is the only writer of its ratings log.
class RunManager {
public:
    explicit RunManager(fs::path root, std::function<void(const std::string&)> log = {})
        : root_(std::move(root)), log_(std::move(log)) {
        fs::create_directories(root_);
        for (const auto& e : fs::directory_iterator(root_)) {
            if (!e.is_directory() || !fs::exists(e.path() / "run.json")) continue;
            const std::string id = e.path().filename().string();
            if (!valid_run_id(id)) continue;
            try {
                recover(id);
            } catch (const std::exception& ex) {
                say("skipping unreadable run '" + id + "': " + ex.what());
            }
        }
    }

    ~RunManager() { shutdown(); }

    RunManager(const RunManager&) = delete;
    RunManager& operator=(const RunManager&) = delete;

    const fs::path& root() const { return root_; }

    /// Body: {"run_id"?, "config"?: RunSettings, "plan": SamplingPlan | "plan_path": file}.
    RunRecord create(const nlohmann::json& body) {
        std::lock_guard lock(registry_mu_);
        std::string id = body.value("run_id", std::string{});
        if (id.empty()) {
            int n = static_cast<int>(runs_.size());
            do id = "run-" + std::to_string(n++);
            while (runs_.count(id) || fs::exists(root_ / id));
        }
        require(!runs_.count(id), ErrorKind::Conflict, "run '" + id + "' already exists");
        const RunSettings settings = run_settings_from_json(body.value("config", nlohmann::json::object()));
        SamplingPlan plan;
        if (body.contains("plan"))
            plan = plan_from_json(body.at("plan"));
        else if (body.contains("plan_path"))
            plan = plan_from_json(read_json(body.at("plan_path").get<std::string>()));
        else
            throw Error(ErrorKind::Parameter, "a run needs a plan or plan_path");
        for (const auto& e : plan.entries)
            require(fs::exists(e.path), ErrorKind::NotFound, "training image '" + e.path + "' does not exist");
        RunRecord rec = create_run_dir(root_, id, settings, plan);
        add_handle(id, rec);
        return rec;
    }

    std::vector<RunRecord> list() const {
        std::lock_guard lock(registry_mu_);
        std::vector<RunRecord> out;
        for (const auto& [id, h] : runs_) out.push_back(record(*h));
        return out;
    }

    RunRecord get(const std::string& id) const { return record(handle(id)); }

    RunRecord start(const std::string& id) {
        auto& h = handle(id);
        std::lock_guard lock(h.mu);
        join_finished(h);
        set_status(h, RunStatus::Training);
        h.pause.store(false);
        h.worker = std::thread([this, &h] { work(h); });
        return h.rec;
    }

    /// Blocks until the worker reaches the next step boundary and parks.
    RunRecord pause(const std::string& id) {
        auto& h = handle(id);
        std::unique_lock lock(h.mu);
        require(h.rec.status == RunStatus::Training, ErrorKind::Conflict,
                "cannot pause a run in state " + to_string(h.rec.status));
        h.pause.store(true);
        std::thread t = std::move(h.worker);
        lock.unlock();
        if (t.joinable()) t.join();
        lock.lock();
        return h.rec;
    }

    /// Ends a run early; a paused run is briefly resumed so that every
    /// recorded transition stays legal.
    RunRecord stop(const std::string& id) {
        auto& h = handle(id);
        std::unique_lock lock(h.mu);
        require(h.rec.status == RunStatus::Training || h.rec.status == RunStatus::Paused, ErrorKind::Conflict,
                "cannot stop a run in state " + to_string(h.rec.status));
        h.stop.store(true);
        h.pause.store(true);
        std::thread t = std::move(h.worker);
        lock.unlock();
        if (t.joinable()) t.join();
        lock.lock();
        if (h.rec.status == RunStatus::Paused) set_status(h, RunStatus::Training);
        if (h.rec.status == RunStatus::Training) set_status(h, RunStatus::Done);
        h.stop.store(false);
        return h.rec;
    }

    /// Waits for a running worker to finish on its own.
    RunRecord wait(const std::string& id) {
        auto& h = handle(id);
        std::unique_lock lock(h.mu);
        std::thread t = std::move(h.worker);
        lock.unlock();
        if (t.joinable()) t.join();
        lock.lock();
        return h.rec;
    }

    std::vector<int> epochs(const std::string& id) const {
        const auto& h = handle(id);
        std::vector<int> out;
        for (int e = 0; e <= latest_epoch_on_disk(h.paths); ++e)
            if (fs::exists(h.paths.samples_json(e))) out.push_back(e);
        return out;
    }

    nlohmann::json samples(const std::string& id, int epoch, bool include_flagged) const {
        const auto& h = handle(id);
        const fs::path file = h.paths.samples_json(epoch);
        require(fs::exists(file), ErrorKind::NotFound, "run '" + id + "' has no epoch " + std::to_string(epoch));
        const nlohmann::json doc = read_json(file);
        nlohmann::json out = nlohmann::json::array();
        for (auto s : doc.at("samples")) {
            if (s.value("flagged", false) && !include_flagged) continue;
            s["image_url"] = "/runs/" + id + "/epoch_" + std::to_string(epoch) + "/" + s.at("image").get<std::string>();
            out.push_back(std::move(s));
        }
        return {{"run_id", id}, {"epoch", epoch}, {"include_flagged", include_flagged}, {"samples", out}};
    }

    nlohmann::json submit_rating(const nlohmann::json& body) {
        Rating r = rating_from_json(body);
        if (r.timestamp.empty()) r.timestamp = utc_timestamp();
        const auto ref = parse_sample_id(r.sample_id);
        require(ref.has_value(), ErrorKind::NotFound, "unknown sample '" + r.sample_id + "'");
        auto& h = handle(ref->run_id);
        const fs::path file = h.paths.samples_json(ref->epoch);
        require(fs::exists(file), ErrorKind::NotFound, "unknown sample '" + r.sample_id + "'");
        const nlohmann::json doc = read_json(file);
        const nlohmann::json* found = nullptr;
        for (const auto& s : doc.at("samples"))
            if (s.at("sample_id").get<std::string>() == r.sample_id) found = &s;
        require(found != nullptr, ErrorKind::NotFound, "unknown sample '" + r.sample_id + "'");
        if (found->value("flagged", false))
            throw Error(ErrorKind::Rejected, "sample '" + r.sample_id + "' is flagged as a near-copy of training item '" +
                                                 found->value("nearest_source_id", std::string{}) + "'");
        h.events->append(r);
        return {{"accepted", true}, {"rating", to_json(r)}};
    }

    FeedbackState feedback(const std::string& id) const { return handle(id).events->replay(); }

    /// Manual override; takes effect at the trainer's next epoch boundary.
    FeedbackState set_feedback(const std::string& id, const nlohmann::json& body) {
        auto& h = handle(id);
        WeightOverride o;
        try {
            o.alpha = body.at("alpha").get<double>();
            o.beta = body.at("beta").get<double>();
            if (body.contains("target_thickness")) o.target_thickness = body.at("target_thickness").get<double>();
            o.author = body.value("author", std::string{"curator"});
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::Parameter, std::string("override needs numeric alpha and beta: ") + ex.what());
        }
        require(o.alpha >= 0.0 && o.beta >= 0.0, ErrorKind::Parameter, "feedback weights must be >= 0");
        require(!o.target_thickness || *o.target_thickness > 0.0, ErrorKind::Parameter,
                "target thickness must be positive");
        o.timestamp = utc_timestamp();
        h.events->append(o);
        FeedbackState st = h.events->replay();
        atomic_write_json(h.paths.feedback(), to_json(st));
        return st;
    }

    nlohmann::json metrics(const std::string& id, long from_step, long limit) const {
        const auto& h = handle(id);
        require(limit >= 1, ErrorKind::Parameter, "limit must be >= 1");
        nlohmann::json records = nlohmann::json::array();
        std::optional<long> next;
        std::ifstream in(h.paths.metrics());
        std::string line;
        while (std::getline(in, line)) {
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) continue;  // partially written tail
            const long step = j.value("step", 0L);
            if (step < from_step) continue;
            if (static_cast<long>(records.size()) == limit) {
                next = step;
                break;
            }
            records.push_back(std::move(j));
        }
        return {{"run_id", id}, {"from_step", from_step}, {"records", records},
                {"next_from_step", next ? nlohmann::json(*next) : nlohmann::json(nullptr)}};
    }

    /// Parks every running worker; their state is written to resume.bin.
    void shutdown() {
        std::vector<std::string> ids;
        {
            std::lock_guard lock(registry_mu_);
            for (const auto& [id, h] : runs_) ids.push_back(id);
        }
        for (const auto& id : ids) {
            auto& h = handle(id);
            std::unique_lock lock(h.mu);
            h.pause.store(true);
            std::thread t = std::move(h.worker);
            lock.unlock();
            if (t.joinable()) t.join();
        }
    }

private:
    struct Handle {
        RunPaths paths;
        RunRecord rec;
        std::unique_ptr<EventLog> events;
        std::thread worker;
        std::atomic<bool> pause{false};
        std::atomic<bool> stop{false};
        mutable std::mutex mu;
    };

    void say(const std::string& m) const {
        if (log_) log_(m);
    }

    Handle& add_handle(const std::string& id, const RunRecord& rec) {
        auto h = std::make_unique<Handle>();
        h->paths = RunPaths{root_ / id};
        h->rec = rec;
        const RunSettings settings = run_settings_from_json(read_json(h->paths.config()));
        h->events = std::make_unique<EventLog>(h->paths.ratings(), initial_feedback(id, settings),
                                               settings.model.train.policy);
        auto& ref = *h;
        runs_[id] = std::move(h);
        return ref;
    }

    /// Rebuilds a run from disk. A run that was TRAINING when the process
    /// died has no worker any more and is parked as PAUSED.
    void recover(const std::string& id) {
        const RunPaths p{root_ / id};
        RunRecord rec = run_record_from_json(read_json(p.run_json()));
        rec.latest_epoch = latest_epoch_on_disk(p);
        auto& h = add_handle(id, rec);
        if (rec.status == RunStatus::Training) set_status(h, RunStatus::Paused);
        else atomic_write_json(p.run_json(), to_json(h.rec));
        atomic_write_json(p.feedback(), to_json(h.events->replay()));
    }

    Handle& handle(const std::string& id) const {
        std::lock_guard lock(registry_mu_);
        const auto it = runs_.find(id);
        require(it != runs_.end(), ErrorKind::NotFound, "unknown run '" + id + "'");
        return *it->second;
    }

    static RunRecord record(const Handle& h) {
        std::lock_guard lock(h.mu);
        return h.rec;
    }

    /// Caller holds h.mu.
    void set_status(Handle& h, RunStatus to, const std::string& error = {}) {
        require(transition_allowed(h.rec.status, to), ErrorKind::Conflict,
                "invalid transition " + to_string(h.rec.status) + " -> " + to_string(to));
        h.rec.status = to;
        if (!error.empty()) h.rec.error = error;
        atomic_write_json(h.paths.run_json(), to_json(h.rec));
    }

    static void join_finished(Handle& h) {
        if (h.worker.joinable() && h.rec.status != RunStatus::Training) h.worker.join();
    }

    void work(Handle& h) {
        ExecuteOptions opt;
        opt.should_pause = [&h] { return h.pause.load(); };
        opt.log = [this, &h](const std::string& m) { say(h.rec.run_id + ": " + m); };
        opt.on_epoch = [&h](int e) {
            std::lock_guard lock(h.mu);
            h.rec.latest_epoch = e;
            atomic_write_json(h.paths.run_json(), to_json(h.rec));
        };
        try {
            const RunOutcome out = execute_run(h.paths, *h.events, opt);
            std::lock_guard lock(h.mu);
            if (out == RunOutcome::Completed) set_status(h, RunStatus::Done);
            else if (!h.stop.load()) set_status(h, RunStatus::Paused);
        } catch (const std::exception& ex) {
            std::lock_guard lock(h.mu);
            say(h.rec.run_id + ": failed: " + ex.what());
            set_status(h, RunStatus::Failed, ex.what());
        }
    }

    fs::path root_;
    std::function<void(const std::string&)> log_;
    std::map<std::string, std::unique_ptr<Handle>> runs_;
    mutable std::mutex registry_mu_;
};

inline int http_status(ErrorKind k) {
    switch (k) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict: return 409;
    case ErrorKind::Rejected: return 422;
    case ErrorKind::Io:
    case ErrorKind::Diverged: return 500;
    default: return 400;
    }
}

inline nlohmann::json error_json(ErrorKind k, const std::string& message) {
    return {{"error", to_string(k)}, {"message", message}};
}

/// HTTP front end over a RunManager. Sample images are served as static
/// files under /runs/<id>/epoch_<e>/.
class ApiServer {
public:
    explicit ApiServer(RunManager& runs) : runs_(runs) { routes(); }

    httplib::Server& http() { return http_; }

    int bind_any(const std::string& host = "127.0.0.1") { return http_.bind_to_any_port(host); }
    bool bind(const std::string& host, int port) { return http_.bind_to_port(host, port); }
    bool serve() { return http_.listen_after_bind(); }
    void stop() { http_.stop(); }

private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    static void reply(Res& res, const nlohmann::json& body, int status = 200) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static nlohmann::json body_json(const Req& req) {
        if (req.body.empty()) return nlohmann::json::object();
        auto j = nlohmann::json::parse(req.body, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorKind::Format, "request body is not valid JSON");
        return j;
    }

    template <typename F>
    static httplib::Server::Handler guarded(F f) {
        return [f](const Req& req, Res& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                reply(res, error_json(e.kind(), e.what()), http_status(e.kind()));
            } catch (const std::exception& e) {
                reply(res, error_json(ErrorKind::Io, e.what()), 500);
            }
        };
    }

    void routes() {
        http_.set_mount_point("/runs", runs_.root().string());

        http_.Post("/api/runs", guarded([this](const Req& req, Res& res) {
                       reply(res, to_json(runs_.create(body_json(req))), 201);
                   }));
        http_.Get("/api/runs", guarded([this](const Req&, Res& res) {
                      nlohmann::json a = nlohmann::json::array();
                      for (const auto& r : runs_.list()) a.push_back(to_json(r));
                      reply(res, a);
                  }));
        http_.Get(R"(/api/runs/([^/]+))", guarded([this](const Req& req, Res& res) {
                      reply(res, to_json(runs_.get(req.matches[1])));
                  }));
        http_.Post(R"(/api/runs/([^/]+)/(start|pause|stop))", guarded([this](const Req& req, Res& res) {
                       const std::string id = req.matches[1], action = req.matches[2];
                       RunRecord r = action == "start" ? runs_.start(id) : action == "pause" ? runs_.pause(id)
                                                                                               : runs_.stop(id);
                       reply(res, to_json(r));
                   }));
        http_.Get(R"(/api/runs/([^/]+)/epochs)", guarded([this](const Req& req, Res& res) {
                      reply(res, {{"run_id", req.matches[1].str()}, {"epochs", runs_.epochs(req.matches[1])}});
                  }));
        http_.Get(R"(/api/runs/([^/]+)/epochs/(\d+)/samples)", guarded([this](const Req& req, Res& res) {
                      const std::string flag = req.has_param("include_flagged") ? req.get_param_value("include_flagged") : "";
                      require(flag.empty() || flag == "true" || flag == "false" || flag == "1" || flag == "0",
                              ErrorKind::Parameter, "include_flagged must be a boolean");
                      reply(res, runs_.samples(req.matches[1], std::stoi(req.matches[2]), flag == "true" || flag == "1"));
                  }));
        http_.Post("/api/ratings", guarded([this](const Req& req, Res& res) {
                       reply(res, runs_.submit_rating(body_json(req)), 201);
                   }));
        http_.Get(R"(/api/runs/([^/]+)/feedback)", guarded([this](const Req& req, Res& res) {
                      reply(res, to_json(runs_.feedback(req.matches[1])));
                  }));
        http_.Put(R"(/api/runs/([^/]+)/feedback)", guarded([this](const Req& req, Res& res) {
                      reply(res, to_json(runs_.set_feedback(req.matches[1], body_json(req))));
                  }));
        http_.Get(R"(/api/runs/([^/]+)/metrics)", guarded([this](const Req& req, Res& res) {
                      auto num = [&](const char* key, long def) {
                          if (!req.has_param(key)) return def;
                          try {
                              return std::stol(req.get_param_value(key));
                          } catch (const std::exception&) {
                              throw Error(ErrorKind::Parameter, std::string(key) + " must be an integer");
                          }
                      };
                      reply(res, runs_.metrics(req.matches[1], num("from_step", 0), num("limit", 1000)));
                  }));
        // Spline fit for the anchor editor overlay: AnchorSet in, paths plus
        // a dense polyline per stroke out.
        http_.Post("/api/fit", guarded([](const Req& req, Res& res) {
                       const auto body = body_json(req);
                       const AnchorSet anchors = anchors_from_json(body);
                       FitOptions opt;
                       opt.smoothing = body.value("smoothing", 0.0);
                       const PathDocument doc = fit_anchor_set(anchors, opt);
                       nlohmann::json out = to_json(doc);
                       nlohmann::json lines = nlohmann::json::array();
                       for (const auto& s : doc.strokes) {
                           nlohmann::json pts = nlohmann::json::array();
                           for (Point p : resample_arclength(s, 128)) pts.push_back(point_json(p));
                           lines.push_back(std::move(pts));
                       }
                       out["polylines"] = std::move(lines);
                       reply(res, out);
                   }));
    }

    RunManager& runs_;
    httplib::Server http_;
};

} // namespace colsig
