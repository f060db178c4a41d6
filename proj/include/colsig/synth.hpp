#pragma once

// Synthetic squiggle corpus: random looping cursive-like scrawls drawn as
// cubic splines and rendered as dark ink on light paper at 64x256. The two
// communities differ in slant direction and loop frequency.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "colsig/dataset.hpp"
#include "colsig/error.hpp"
#include "colsig/grid.hpp"
#include "colsig/image_io.hpp"
#include "colsig/spline.hpp"

namespace colsig {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct CommunityStyle {
    /// Horizontal shear per pixel of height (positive leans right).
    Range slant;
    /// Loops per 100 px of baseline.
    Range loop_rate;
};

struct SynthCorpusSpec {
    int n_per_community = 500;
    CommunityStyle university{{-0.45, -0.15}, {1.3, 1.9}};
    CommunityStyle city{{0.15, 0.45}, {3.0, 4.0}};
    std::uint64_t seed = 0;
    int width = 256;
    int height = 64;

    const CommunityStyle& style(Community c) const { return c == Community::University ? university : city; }

    void validate() const {
        require(n_per_community >= 1, ErrorKind::Parameter, "n_per_community must be >= 1");
        require(width >= 64 && height >= 32, ErrorKind::Parameter, "synthetic canvas too small");
        for (const auto* s : {&university, &city}) {
            require(s->slant.lo <= s->slant.hi && s->loop_rate.lo <= s->loop_rate.hi, ErrorKind::Parameter,
                    "style ranges must be ordered");
            require(s->loop_rate.lo > 0.0, ErrorKind::Parameter, "loop rate must be positive");
        }
    }
};

inline void to_json(nlohmann::json& j, const Range& r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json& j, Range& r) {
    require(j.is_array() && j.size() == 2, ErrorKind::Format, "range must be a [lo, hi] pair");
    r = {j[0].get<double>(), j[1].get<double>()};
}
inline void to_json(nlohmann::json& j, const CommunityStyle& s) { j = {{"slant", s.slant}, {"loop_rate", s.loop_rate}}; }
inline void from_json(const nlohmann::json& j, CommunityStyle& s) {
    if (j.contains("slant")) s.slant = j.at("slant").get<Range>();
    if (j.contains("loop_rate")) s.loop_rate = j.at("loop_rate").get<Range>();
}
inline void to_json(nlohmann::json& j, const SynthCorpusSpec& s) {
    j = {{"n_per_community", s.n_per_community}, {"university", s.university}, {"city", s.city},
         {"seed", s.seed}, {"width", s.width}, {"height", s.height}};
}
inline void from_json(const nlohmann::json& j, SynthCorpusSpec& s) {
    s.n_per_community = j.value("n_per_community", s.n_per_community);
    if (j.contains("university")) s.university = j.at("university").get<CommunityStyle>();
    if (j.contains("city")) s.city = j.at("city").get<CommunityStyle>();
    s.seed = j.value("seed", s.seed);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
}

/// Anchor polylines of one scrawl (before rendering).
inline std::vector<Polyline> synth_strokes(const SynthCorpusSpec& spec, Community community, int index) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(community), static_cast<std::uint32_t>(index), 0x5c21u};
    std::mt19937_64 rng(seq);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const auto& style = spec.style(community);
    const double w = spec.width, h = spec.height;
    const double pi = std::acos(-1.0);

    const double slant = uni(style.slant.lo, style.slant.hi);
    const double rate = uni(style.loop_rate.lo, style.loop_rate.hi);
    const double period = 100.0 / rate;
    // Horizontal swing above period / 2pi makes the trochoid cross itself.
    const double swing = uni(1.2, 1.6) * period / (2 * pi);
    const double rise = uni(0.16, 0.26) * h;
    const double tilt = uni(-0.03, 0.03);
    const double phase = uni(0.0, 2 * pi);
    const double yc = h / 2 + uni(-0.06, 0.06) * h;
    const double start = 0.05 * w + swing + uni(0.0, 0.06 * w);
    const double stop = 0.95 * w - swing - uni(0.0, 0.06 * w);

    std::vector<Polyline> strokes;
    const double spacing = period / 8;
    // Optional pen lift splits the baseline into two words.
    double split = stop;
    const double cut = start + uni(0.45, 0.6) * (stop - start);
    if (uni(0.0, 1.0) < 0.4 && cut - start >= 1.5 * period && stop - cut >= 2.1 * period) split = cut;
    for (int part = 0; part < 2; ++part) {
        const double a = part == 0 ? start : split + 0.6 * period;
        const double b = part == 0 ? split : stop;
        if (b - a < period) continue;
        Polyline anchors;
        for (double u = a; u <= b + 1e-9; u += spacing) {
            const double ph = 2 * pi * (u - start) / period + phase;
            const double y = yc + tilt * (u - w / 2) - rise * std::cos(ph) + uni(-0.6, 0.6);
            double x = u + swing * std::sin(ph) + uni(-0.6, 0.6);
            x += slant * (yc - y);
            anchors.push_back({x, y});
        }
        if (anchors.size() >= 4) strokes.push_back(std::move(anchors));
    }
    // Underline flourish.
    if (uni(0.0, 1.0) < 0.5) {
        const double y = yc + rise + uni(0.1, 0.18) * h;
        const double x0 = start + uni(0.0, 0.2) * (stop - start), x1 = stop - uni(0.0, 0.2) * (stop - start);
        strokes.push_back({{x0, y + uni(-2, 2)}, {(2 * x0 + x1) / 3, y + uni(-2, 2)}, {(x0 + 2 * x1) / 3, y + uni(-2, 2)},
                           {x1, y + uni(-2, 2)}});
    }
    return strokes;
}

/// Renders one scrawl as a grayscale "scan": paper near 1, ink near 0.
inline RasterImage synth_signature(const SynthCorpusSpec& spec, Community community, int index) {
    const auto strokes = synth_strokes(spec, community, index);
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(community),
                      static_cast<std::uint32_t>(index), 0x1a4bu};
    std::mt19937_64 rng(seq);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const double pen = uni(1.0, 1.5);
    const double ink = uni(0.05, 0.2);
    const double paper = uni(0.85, 0.97);

    Grid<double> cover(spec.width, spec.height, 0.0);
    for (const auto& s : strokes) {
        const SplinePath path = fit_bspline(s);
        const int n = std::max(2, static_cast<int>(arc_length(path) * 3));
        for (Point c : resample_arclength(path, n)) {
            const int x0 = static_cast<int>(std::floor(c.x - pen - 1)), x1 = static_cast<int>(std::ceil(c.x + pen + 1));
            const int y0 = static_cast<int>(std::floor(c.y - pen - 1)), y1 = static_cast<int>(std::ceil(c.y + pen + 1));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    if (!cover.contains(x, y)) continue;
                    const double d = std::hypot(x + 0.5 - c.x, y + 0.5 - c.y);
                    cover(x, y) = std::max(cover(x, y), std::clamp(pen + 0.5 - d, 0.0, 1.0));
                }
        }
    }
    std::normal_distribution<double> grain(0.0, 0.02);
    RasterImage img(spec.width, spec.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double v = paper + (ink - paper) * cover.data[i] + grain(rng);
        img.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return img;
}

inline std::string synth_source_id(Community c, int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d", index);
    return to_string(c) + "_" + buf;
}

/// Writes `<source_id>.png` for every scrawl plus `manifest.tsv` (paths
/// relative to the output directory). Returns the manifest entries.
inline std::vector<ManifestEntry> write_synth_corpus(const SynthCorpusSpec& spec, const std::filesystem::path& out) {
    spec.validate();
    std::filesystem::create_directories(out);
    std::vector<ManifestEntry> entries;
    for (Community c : {Community::University, Community::City})
        for (int i = 0; i < spec.n_per_community; ++i) {
            const std::string id = synth_source_id(c, i);
            write_png(out / (id + ".png"), synth_signature(spec, c, i));
            entries.push_back({id + ".png", id, c});
        }
    std::ofstream m(out / "manifest.tsv");
    if (!m) throw Error(ErrorKind::Io, "cannot write manifest in '" + out.string() + "'");
    write_manifest(m, entries);
    return entries;
}

} // namespace colsig
