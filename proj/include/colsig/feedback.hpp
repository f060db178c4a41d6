#pragma once

// Curator ratings, the rule table that turns them into auxiliary loss
// weights, and the aesthetic metrics those weights scale.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "colsig/blur.hpp"
#include "colsig/error.hpp"
#include "colsig/grid.hpp"
#include "colsig/imaging.hpp"

namespace colsig {

// ---------------------------------------------------------------------------
// Metrics

inline constexpr int kOrientationBins = 8;

/// Normalized entropy of the magnitude-weighted, 8-bin (mod pi) gradient
/// orientation histogram over pixels within two pixels of the foreground
/// (intensity > 0.5). Gradients are central differences of the sigma-1
/// blurred image, so pixel-grid edges do not snap to the four axis and
/// diagonal directions. Bins are centred on multiples of pi/8.
inline double direction_diversity(const RasterImage& img) {
    const BinaryMask fg = binarize(img);
    if (count_foreground(fg) == 0) return 0.0;
    const BinaryMask near = dilate(fg, 2);
    const int w = img.width, h = img.height;
    const auto b = gaussian_blur(std::vector<double>(img.data.begin(), img.data.end()), w, h);
    auto at = [&](int x, int y) { return b[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)]; };
    std::array<double, kOrientationBins> hist{};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!near(x, y)) continue;
            const double gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            const double gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            const double mag = std::hypot(gx, gy);
            if (mag <= 0.0) continue;
            double theta = std::atan2(gy, gx);
            if (theta < 0) theta += std::numbers::pi;
            const int bin = static_cast<int>(std::lround(theta / (std::numbers::pi / kOrientationBins))) % kOrientationBins;
            hist[bin] += mag;
        }
    double total = 0.0;
    for (double v : hist) total += v;
    if (total <= 0.0) return 0.0;
    double entropy = 0.0;
    for (double v : hist)
        if (v > 0.0) entropy -= (v / total) * std::log(v / total);
    return entropy / std::log(static_cast<double>(kOrientationBins));
}

/// ((stroke width of the binarized image - target) / target)^2; 0 when empty.
inline double thickness_penalty(const RasterImage& img, double target) {
    require(target > 0.0, ErrorKind::Parameter, "target thickness must be positive");
    const BinaryMask fg = binarize(img);
    if (count_foreground(fg) == 0) return 0.0;
    const double d = (estimate_stroke_width(fg) - target) / target;
    return d * d;
}

struct SoftSurrogateParams {
    double temperature = 0.1;   // soft foreground sigmoid((x - 0.5) / temperature)
    double concentration = 24.0; // orientation kernel sharpness
    double epsilon = 1e-8;      // gradient-magnitude floor
};

struct SoftTerms {
    double diversity = 0.0;
    double stroke_width = 0.0;
    double thickness = 0.0;
    double value = 0.0; // alpha * (1 - diversity) + beta * thickness
};

/// Differentiable counterparts of direction_diversity and thickness_penalty
/// for one image, with d(value)/d(pixel) written to `grad` when non-empty.
///
/// Soft foreground m = sigmoid((x - 0.5)/T), affinely rescaled so that
/// m(0) = 0 and m(1) = 1. The orientation histogram
/// weights each pixel by |grad blur(m)| and spreads it over bins with a
/// softmax kernel on the doubled angle. Stroke width is 2 * area / perimeter
/// with area = sum m and perimeter = sum of forward-difference gradient
/// magnitudes of m (unblurred, so thin strokes keep both edges).
inline SoftTerms soft_feedback_terms(std::span<const double> pixels, int width, int height, double alpha, double beta,
                                     double target, std::span<double> grad = {},
                                     const SoftSurrogateParams& sp = {}) {
    require(static_cast<long>(pixels.size()) == static_cast<long>(width) * height, ErrorKind::Shape,
            "pixel count mismatch");
    require(grad.empty() || grad.size() == pixels.size(), ErrorKind::Shape, "gradient buffer size mismatch");
    const std::size_t n = pixels.size();
    // Sigmoid rescaled so intensities 0 and 1 map exactly to 0 and 1.
    auto sig = [&](double v) { return 1.0 / (1.0 + std::exp(-(v - 0.5) / sp.temperature)); };
    const double lo = sig(0.0), span = sig(1.0) - lo;
    std::vector<double> m(n), dmdx(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double q = sig(pixels[i]);
        m[i] = (q - lo) / span;
        dmdx[i] = q * (1.0 - q) / (sp.temperature * span);
    }
    const auto bm = gaussian_blur(m, width, height);
    auto idx = [&](int x, int y) {
        return static_cast<std::size_t>(std::clamp(y, 0, height - 1)) * width + std::clamp(x, 0, width - 1);
    };
    std::array<double, kOrientationBins> cosb{}, sinb{};
    for (int b = 0; b < kOrientationBins; ++b) {
        const double phi = 2.0 * b * std::numbers::pi / kOrientationBins;
        cosb[b] = std::cos(phi);
        sinb[b] = std::sin(phi);
    }
    // o*: orientation field from blur(m); e*: edge field from m.
    std::vector<double> ox(n), oy(n), ro(n), ex(n), ey(n), re(n);
    std::vector<std::array<double, kOrientationBins>> k(n);
    std::array<double, kOrientationBins> hist{};
    double area = 0.0, perimeter = 0.0;
    const double floor = std::sqrt(sp.epsilon);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            ox[i] = 0.5 * (bm[idx(x + 1, y)] - bm[idx(x - 1, y)]);
            oy[i] = 0.5 * (bm[idx(x, y + 1)] - bm[idx(x, y - 1)]);
            const double r2 = ox[i] * ox[i] + oy[i] * oy[i] + sp.epsilon;
            ro[i] = std::sqrt(r2);
            const double c = (ox[i] * ox[i] - oy[i] * oy[i]) / r2, s = 2.0 * ox[i] * oy[i] / r2;
            double mx = -1e300;
            for (int b = 0; b < kOrientationBins; ++b) {
                k[i][b] = sp.concentration * (c * cosb[b] + s * sinb[b]);
                mx = std::max(mx, k[i][b]);
            }
            double z = 0.0;
            for (int b = 0; b < kOrientationBins; ++b) z += (k[i][b] = std::exp(k[i][b] - mx));
            for (int b = 0; b < kOrientationBins; ++b) {
                k[i][b] /= z;
                hist[b] += ro[i] * k[i][b];
            }
            ex[i] = m[idx(x + 1, y)] - m[i];
            ey[i] = m[idx(x, y + 1)] - m[i];
            re[i] = std::sqrt(ex[i] * ex[i] + ey[i] * ey[i] + sp.epsilon);
            area += m[i];
            perimeter += re[i] - floor;
        }

    SoftTerms out;
    double total = 0.0;
    for (double h : hist) total += h;
    const double ln_bins = std::log(static_cast<double>(kOrientationBins));
    std::array<double, kOrientationBins> p{};
    for (int b = 0; b < kOrientationBins; ++b) {
        p[b] = hist[b] / total;
        if (p[b] > 0.0) out.diversity -= p[b] * std::log(p[b]) / ln_bins;
    }
    const bool has_strokes = perimeter > 1e-6;
    if (has_strokes) {
        out.stroke_width = 2.0 * area / perimeter;
        const double d = (out.stroke_width - target) / target;
        out.thickness = d * d;
    }
    out.value = alpha * (1.0 - out.diversity) + beta * out.thickness;
    if (grad.empty()) return out;

    // d value / d hist
    std::array<double, kOrientationBins> dp{}, dh{};
    double dot = 0.0;
    for (int b = 0; b < kOrientationBins; ++b) {
        dp[b] = p[b] > 0.0 ? alpha * (std::log(p[b]) + 1.0) / ln_bins : 0.0;
        dot += p[b] * dp[b];
    }
    for (int b = 0; b < kOrientationBins; ++b) dh[b] = (dp[b] - dot) / total;

    double dwidth_darea = 0.0, dwidth_dperim = 0.0;
    if (has_strokes) {
        const double dthick = beta * 2.0 * (out.stroke_width - target) / (target * target);
        dwidth_darea = dthick * 2.0 / perimeter;
        dwidth_dperim = -dthick * 2.0 * area / (perimeter * perimeter);
    }

    std::vector<double> dbm(n, 0.0), dm(n, dwidth_darea);
    for (std::size_t i = 0; i < n; ++i) {
        const int x = static_cast<int>(i % width), y = static_cast<int>(i / width);
        double dr = 0.0, dl_dot = 0.0;
        std::array<double, kOrientationBins> dk{};
        for (int b = 0; b < kOrientationBins; ++b) {
            dr += dh[b] * k[i][b];
            dk[b] = dh[b] * ro[i];
            dl_dot += k[i][b] * dk[b];
        }
        double dc = 0.0, ds = 0.0;
        for (int b = 0; b < kOrientationBins; ++b) {
            const double dlogit = k[i][b] * (dk[b] - dl_dot);
            dc += sp.concentration * dlogit * cosb[b];
            ds += sp.concentration * dlogit * sinb[b];
        }
        const double gx = ox[i], gy = oy[i];
        const double r2 = ro[i] * ro[i], r4 = r2 * r2;
        const double num_c = gx * gx - gy * gy, num_s = 2.0 * gx * gy;
        const double dgx = dr * gx / ro[i] + dc * (2.0 * gx / r2 - num_c * 2.0 * gx / r4) +
                           ds * (2.0 * gy / r2 - num_s * 2.0 * gx / r4);
        const double dgy = dr * gy / ro[i] + dc * (-2.0 * gy / r2 - num_c * 2.0 * gy / r4) +
                           ds * (2.0 * gx / r2 - num_s * 2.0 * gy / r4);
        dbm[idx(x + 1, y)] += 0.5 * dgx;
        dbm[idx(x - 1, y)] -= 0.5 * dgx;
        dbm[idx(x, y + 1)] += 0.5 * dgy;
        dbm[idx(x, y - 1)] -= 0.5 * dgy;

        const double dex = dwidth_dperim * ex[i] / re[i], dey = dwidth_dperim * ey[i] / re[i];
        dm[idx(x + 1, y)] += dex;
        dm[idx(x, y + 1)] += dey;
        dm[i] -= dex + dey;
    }
    const auto back = gaussian_blur_adjoint(dbm, width, height);
    for (std::size_t i = 0; i < n; ++i) grad[i] = (dm[i] + back[i]) * dmdx[i];
    return out;
}

// ---------------------------------------------------------------------------
// Ratings and feedback state

enum class Verdict { Like, Dislike, Neutral };

inline std::string to_string(Verdict v) {
    switch (v) {
    case Verdict::Like: return "like";
    case Verdict::Dislike: return "dislike";
    case Verdict::Neutral: return "neutral";
    }
    return "neutral";
}

inline Verdict parse_verdict(const std::string& s) {
    if (s == "like") return Verdict::Like;
    if (s == "dislike") return Verdict::Dislike;
    if (s == "neutral") return Verdict::Neutral;
    throw Error(ErrorKind::Parameter, "unknown verdict '" + s + "'");
}

namespace tags {
inline constexpr const char* kTooBlurry = "too-blurry";
inline constexpr const char* kTooThick = "strokes-too-thick";
inline constexpr const char* kTooThin = "strokes-too-thin";
inline constexpr const char* kMoreDiversity = "more-direction-diversity";
inline constexpr const char* kTooSimple = "too-simple";
} // namespace tags

inline bool is_valid_tag(const std::string& t) {
    static const std::set<std::string> known{tags::kTooBlurry, tags::kTooThick, tags::kTooThin, tags::kMoreDiversity,
                                             tags::kTooSimple};
    return known.count(t) > 0 || (t.rfind("other:", 0) == 0 && t.size() > 6);
}

struct Rating {
    std::string sample_id;
    Verdict verdict = Verdict::Neutral;
    std::set<std::string> tags;
    std::string author;
    std::string timestamp;

    bool has_tag(const std::string& t) const { return tags.count(t) > 0; }
    friend bool operator==(const Rating&, const Rating&) = default;
};

struct WeightOverride {
    double alpha = 0.0;
    double beta = 0.0;
    std::optional<double> target_thickness;
    std::string author;
    std::string timestamp;
    friend bool operator==(const WeightOverride&, const WeightOverride&) = default;
};

/// Written by the training worker when an epoch completes; closes the
/// current rating window.
struct EpochEnd {
    int epoch = 0;
    friend bool operator==(const EpochEnd&, const EpochEnd&) = default;
};

using FeedbackEvent = std::variant<Rating, WeightOverride, EpochEnd>;

struct HistoryRecord {
    int epoch = 0;
    double alpha = 0.0;
    double beta = 0.0;
    double target_thickness = 0.0;
    std::string rule;
    friend bool operator==(const HistoryRecord&, const HistoryRecord&) = default;
};

struct FeedbackState {
    std::string run_id;
    double alpha = 0.0;
    double beta = 0.0;
    double target_thickness = 2.0;
    std::vector<HistoryRecord> history;
    /// Number of log events folded into this state.
    std::size_t events_applied = 0;
    /// Epoch currently accumulating ratings.
    int open_epoch = 0;

    friend bool operator==(const FeedbackState&, const FeedbackState&) = default;
};

struct FeedbackPolicy {
    int tag_threshold = 3;
    double step = 0.1;
    double cap = 1.0;
    double thin_target_factor = 0.9;
};

inline void to_json(nlohmann::json& j, const FeedbackPolicy& p) {
    j = {{"tag_threshold", p.tag_threshold}, {"step", p.step}, {"cap", p.cap}, {"thin_target_factor", p.thin_target_factor}};
}
inline void from_json(const nlohmann::json& j, FeedbackPolicy& p) {
    p.tag_threshold = j.value("tag_threshold", p.tag_threshold);
    p.step = j.value("step", p.step);
    p.cap = j.value("cap", p.cap);
    p.thin_target_factor = j.value("thin_target_factor", p.thin_target_factor);
}

/// Rule table, evaluated in order over the latest rating per
/// (sample, author) in the window. Counts only DISLIKE verdicts:
///   1. >= threshold tagged strokes-too-thick        -> beta += step
///   2. >= threshold tagged more-direction-diversity -> alpha += step
///   3. >= threshold tagged strokes-too-thin         -> beta += step, target *= 0.9
/// Weights are capped; every rule that changes the state adds a history record.
inline FeedbackState apply_feedback_policy(std::span<const Rating> window, FeedbackState state, int epoch,
                                           const FeedbackPolicy& policy = {}) {
    std::map<std::pair<std::string, std::string>, const Rating*> latest;
    for (const auto& r : window) latest[{r.sample_id, r.author}] = &r;
    auto count = [&](const char* tag) {
        int n = 0;
        for (const auto& [key, r] : latest)
            if (r->verdict == Verdict::Dislike && r->has_tag(tag)) ++n;
        return n;
    };
    // Snap to the cap so repeated decimal steps land on it exactly.
    auto bump = [&](double& w) { w = w + policy.step >= policy.cap - 1e-9 ? policy.cap : w + policy.step; };
    auto record = [&](const char* rule) {
        state.history.push_back({epoch, state.alpha, state.beta, state.target_thickness, rule});
    };

    if (count(tags::kTooThick) >= policy.tag_threshold) {
        const double before = state.beta;
        bump(state.beta);
        if (state.beta != before) record(tags::kTooThick);
    }
    if (count(tags::kMoreDiversity) >= policy.tag_threshold) {
        const double before = state.alpha;
        bump(state.alpha);
        if (state.alpha != before) record(tags::kMoreDiversity);
    }
    if (count(tags::kTooThin) >= policy.tag_threshold) {
        bump(state.beta);
        state.target_thickness *= policy.thin_target_factor;
        record(tags::kTooThin);
    }
    return state;
}

/// Folds events into `state`: ratings accumulate in the open window, an
/// EpochEnd applies the policy to the window and opens the next epoch, an
/// override replaces the weights immediately.
inline FeedbackState replay_events(std::span<const FeedbackEvent> events, FeedbackState state,
                                   const FeedbackPolicy& policy = {}) {
    std::vector<Rating> window;
    for (const auto& ev : events) {
        if (const auto* r = std::get_if<Rating>(&ev)) {
            window.push_back(*r);
        } else if (const auto* o = std::get_if<WeightOverride>(&ev)) {
            state.alpha = o->alpha;
            state.beta = o->beta;
            if (o->target_thickness) state.target_thickness = *o->target_thickness;
            state.history.push_back({state.open_epoch, state.alpha, state.beta, state.target_thickness, "manual-override"});
        } else {
            const auto& e = std::get<EpochEnd>(ev);
            state = apply_feedback_policy(window, std::move(state), e.epoch, policy);
            window.clear();
            state.open_epoch = e.epoch + 1;
        }
        ++state.events_applied;
    }
    return state;
}

/// Augmented generator-loss terms with the hard metric definitions, averaged
/// over the batch: alpha * (1 - diversity) + beta * thickness penalty.
inline double augmented_loss_terms(std::span<const RasterImage> batch, const FeedbackState& state) {
    require(state.alpha >= 0.0 && state.beta >= 0.0, ErrorKind::Parameter, "feedback weights must be >= 0");
    if (batch.empty() || (state.alpha == 0.0 && state.beta == 0.0)) return 0.0;
    double acc = 0.0;
    for (const auto& img : batch) {
        if (state.alpha != 0.0) acc += state.alpha * (1.0 - direction_diversity(img));
        if (state.beta != 0.0) acc += state.beta * thickness_penalty(img, state.target_thickness);
    }
    return acc / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const Rating& r) {
    return {{"type", "rating"},          {"sample_id", r.sample_id}, {"verdict", to_string(r.verdict)},
            {"tags", r.tags},            {"author", r.author},       {"timestamp", r.timestamp}};
}

inline Rating rating_from_json(const nlohmann::json& j) {
    try {
        Rating r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.verdict = parse_verdict(j.at("verdict").get<std::string>());
        for (const auto& t : j.value("tags", nlohmann::json::array())) {
            auto tag = t.get<std::string>();
            require(is_valid_tag(tag), ErrorKind::Parameter, "unknown tag '" + tag + "'");
            r.tags.insert(std::move(tag));
        }
        r.author = j.at("author").get<std::string>();
        r.timestamp = j.value("timestamp", std::string{});
        require(!r.sample_id.empty() && !r.author.empty(), ErrorKind::Parameter, "rating needs sample_id and author");
        return r;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::Format, std::string("malformed rating: ") + ex.what());
    }
}

inline nlohmann::json event_to_json(const FeedbackEvent& ev) {
    if (const auto* r = std::get_if<Rating>(&ev)) return to_json(*r);
    if (const auto* o = std::get_if<WeightOverride>(&ev)) {
        nlohmann::json j{{"type", "override"}, {"alpha", o->alpha}, {"beta", o->beta}, {"author", o->author},
                         {"timestamp", o->timestamp}};
        if (o->target_thickness) j["target_thickness"] = *o->target_thickness;
        return j;
    }
    return {{"type", "epoch_end"}, {"epoch", std::get<EpochEnd>(ev).epoch}};
}

inline FeedbackEvent event_from_json(const nlohmann::json& j) {
    const auto type = j.value("type", std::string{"rating"});
    if (type == "rating") return rating_from_json(j);
    try {
        if (type == "override") {
            WeightOverride o{j.at("alpha").get<double>(), j.at("beta").get<double>(), std::nullopt,
                             j.value("author", std::string{}), j.value("timestamp", std::string{})};
            if (j.contains("target_thickness")) o.target_thickness = j.at("target_thickness").get<double>();
            return o;
        }
        if (type == "epoch_end") return EpochEnd{j.at("epoch").get<int>()};
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::Format, std::string("malformed event: ") + ex.what());
    }
    throw Error(ErrorKind::Format, "unknown event type '" + type + "'");
}

/// One JSON document per line. A truncated final line (crash mid-append) is ignored.
inline std::vector<FeedbackEvent> read_event_log(const std::filesystem::path& path) {
    std::vector<FeedbackEvent> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw Error(ErrorKind::Format, "corrupt event log line in '" + path.string() + "'");
        }
        out.push_back(event_from_json(j));
    }
    return out;
}

inline void append_event(const std::filesystem::path& path, const FeedbackEvent& ev) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error(ErrorKind::Io, "cannot append to '" + path.string() + "'");
    out << event_to_json(ev).dump() << '\n';
    out.flush();
}

inline nlohmann::json to_json(const FeedbackState& s) {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& h : s.history)
        hist.push_back({{"epoch", h.epoch}, {"alpha", h.alpha}, {"beta", h.beta},
                        {"target_thickness", h.target_thickness}, {"rule", h.rule}});
    return {{"run_id", s.run_id},
            {"alpha", s.alpha},
            {"beta", s.beta},
            {"target_thickness", s.target_thickness},
            {"history", hist},
            {"events_applied", s.events_applied},
            {"open_epoch", s.open_epoch}};
}

inline FeedbackState feedback_from_json(const nlohmann::json& j) {
    FeedbackState s;
    s.run_id = j.value("run_id", std::string{});
    s.alpha = j.value("alpha", 0.0);
    s.beta = j.value("beta", 0.0);
    s.target_thickness = j.value("target_thickness", 2.0);
    s.events_applied = j.value("events_applied", std::size_t{0});
    s.open_epoch = j.value("open_epoch", 0);
    for (const auto& h : j.value("history", nlohmann::json::array()))
        s.history.push_back({h.at("epoch").get<int>(), h.at("alpha").get<double>(), h.at("beta").get<double>(),
                             h.value("target_thickness", 0.0), h.at("rule").get<std::string>()});
    return s;
}

} // namespace colsig
