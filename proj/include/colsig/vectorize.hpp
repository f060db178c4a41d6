#pragma once

// Anchor files, spline path documents, the signing animation schedule and
// the SVG / fabrication exports.

#include <cmath>
#include <cstdio>
#include <limits>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "colsig/error.hpp"
#include "colsig/spline.hpp"

namespace colsig {

struct AnchorSet {
    std::string sample_id;
    int canvas_width = 256;
    int canvas_height = 64;
    std::vector<Polyline> strokes;
};

inline nlohmann::json point_json(Point p) { return nlohmann::json::array({p.x, p.y}); }

inline Point point_from_json(const nlohmann::json& j) {
    require(j.is_array() && j.size() == 2, ErrorKind::Format, "points are [x, y] pairs");
    return {j[0].get<double>(), j[1].get<double>()};
}

/// Anchor file: {"sample_id": ..., "canvas": {"width", "height"},
/// "strokes": [[[x, y], ...], ...]}
inline AnchorSet anchors_from_json(const nlohmann::json& j) {
    try {
        AnchorSet a;
        a.sample_id = j.at("sample_id").get<std::string>();
        if (j.contains("canvas")) {
            a.canvas_width = j["canvas"].at("width").get<int>();
            a.canvas_height = j["canvas"].at("height").get<int>();
        }
        for (const auto& s : j.at("strokes")) {
            Polyline stroke;
            for (const auto& p : s) stroke.push_back(point_from_json(p));
            require(stroke.size() >= 2, ErrorKind::Format, "every stroke needs at least 2 anchors");
            for (const auto& p : stroke)
                require(p.x >= 0 && p.y >= 0 && p.x <= a.canvas_width && p.y <= a.canvas_height, ErrorKind::Format,
                        "anchor outside the canvas");
            a.strokes.push_back(std::move(stroke));
        }
        require(!a.strokes.empty(), ErrorKind::Format, "anchor file has no strokes");
        return a;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::Format, std::string("malformed anchor file: ") + ex.what());
    }
}

inline nlohmann::json to_json(const AnchorSet& a) {
    nlohmann::json strokes = nlohmann::json::array();
    for (const auto& s : a.strokes) {
        nlohmann::json pts = nlohmann::json::array();
        for (auto p : s) pts.push_back(point_json(p));
        strokes.push_back(pts);
    }
    return {{"sample_id", a.sample_id},
            {"canvas", {{"width", a.canvas_width}, {"height", a.canvas_height}}},
            {"strokes", strokes}};
}

inline nlohmann::json to_json(const SplinePath& p) {
    nlohmann::json ctrl = nlohmann::json::array();
    for (auto c : p.control_points) ctrl.push_back(point_json(c));
    return {{"degree", p.degree}, {"control_points", ctrl}, {"knots", p.knots}};
}

inline SplinePath spline_from_json(const nlohmann::json& j) {
    SplinePath p;
    p.degree = j.at("degree").get<int>();
    for (const auto& c : j.at("control_points")) p.control_points.push_back(point_from_json(c));
    p.knots = j.at("knots").get<std::vector<double>>();
    require(p.degree >= 1 && p.knots.size() == p.control_points.size() + p.degree + 1, ErrorKind::Format,
            "spline knot count must equal control count + degree + 1");
    return p;
}

struct PathDocument {
    std::string sample_id;
    int canvas_width = 256;
    int canvas_height = 64;
    std::vector<SplinePath> strokes;
};

inline nlohmann::json to_json(const PathDocument& d) {
    nlohmann::json strokes = nlohmann::json::array();
    for (const auto& s : d.strokes) strokes.push_back(to_json(s));
    return {{"sample_id", d.sample_id},
            {"canvas", {{"width", d.canvas_width}, {"height", d.canvas_height}}},
            {"strokes", strokes}};
}

inline PathDocument paths_from_json(const nlohmann::json& j) {
    try {
        PathDocument d;
        d.sample_id = j.value("sample_id", std::string{});
        if (j.contains("canvas")) {
            d.canvas_width = j["canvas"].at("width").get<int>();
            d.canvas_height = j["canvas"].at("height").get<int>();
        }
        for (const auto& s : j.at("strokes")) d.strokes.push_back(spline_from_json(s));
        return d;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::Format, std::string("malformed path document: ") + ex.what());
    }
}

inline PathDocument fit_anchor_set(const AnchorSet& anchors, const FitOptions& opt = {}) {
    PathDocument d{anchors.sample_id, anchors.canvas_width, anchors.canvas_height, {}};
    for (const auto& s : anchors.strokes) d.strokes.push_back(fit_bspline(s, opt));
    return d;
}

// ---------------------------------------------------------------------------
// Animation

enum class ColorMode { Black, White };

inline std::string to_string(ColorMode c) { return c == ColorMode::Black ? "black" : "white"; }
inline ColorMode parse_color_mode(const std::string& s) {
    if (s == "black") return ColorMode::Black;
    if (s == "white") return ColorMode::White;
    throw Error(ErrorKind::Parameter, "color mode must be black or white");
}

struct AnimationSegment {
    /// Index into the path document, or -1 for a pen lift.
    int stroke = -1;
    double t_start = 0.0;
    double t_end = 0.0;
    Polyline points;

    bool pen_lift() const { return stroke < 0; }
    double duration() const { return t_end - t_start; }
};

struct AnimationScript {
    double total_duration = 60.0;
    double pen_lift_duration = 0.5;
    ColorMode color = ColorMode::Black;
    std::vector<AnimationSegment> segments;
    std::vector<std::string> warnings;
};

struct AnimationOptions {
    double total_duration = 60.0;
    double pen_lift = 0.5;
    ColorMode color = ColorMode::Black;
    /// Polyline density along each stroke.
    double points_per_unit = 1.0;
};

/// Drawing time is shared in proportion to arc length after reserving one
/// pen lift between consecutive strokes. The schedule covers
/// (0, total_duration] and ends exactly at total_duration.
inline AnimationScript build_animation(const std::vector<SplinePath>& paths, const AnimationOptions& opt = {}) {
    require(opt.total_duration > 0.0 && opt.pen_lift >= 0.0, ErrorKind::Parameter, "durations must be positive");
    AnimationScript script{opt.total_duration, opt.pen_lift, opt.color, {}, {}};
    std::vector<int> kept;
    std::vector<double> lengths;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const double len = arc_length(paths[i]);
        if (len <= 1e-9) {
            script.warnings.push_back("stroke " + std::to_string(i) + " has zero length and was dropped");
            continue;
        }
        kept.push_back(static_cast<int>(i));
        lengths.push_back(len);
    }
    require(!kept.empty(), ErrorKind::Parameter, "animation needs at least one stroke of nonzero length");
    const double gaps = opt.pen_lift * static_cast<double>(kept.size() - 1);
    const double drawing = opt.total_duration - gaps;
    require(drawing > 0.0, ErrorKind::Parameter, "pen lifts leave no time for drawing");
    double total_len = 0.0;
    for (double l : lengths) total_len += l;

    double t = 0.0;
    double drawn_len = 0.0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const auto& path = paths[kept[i]];
        if (i > 0) {
            const Point from = script.segments.back().points.back();
            script.segments.push_back({-1, t, t + opt.pen_lift, {from, evaluate(path, 0.0)}});
            t += opt.pen_lift;
        }
        drawn_len += lengths[i];
        // Cumulative form keeps the last segment ending exactly on the total.
        const double end = i + 1 == kept.size()
                               ? opt.total_duration
                               : drawing * (drawn_len / total_len) + opt.pen_lift * static_cast<double>(i);
        const int n = std::max(2, static_cast<int>(std::ceil(lengths[i] * opt.points_per_unit)) + 1);
        script.segments.push_back({kept[i], t, end, resample_arclength(path, n)});
        t = end;
    }
    return script;
}

inline nlohmann::json to_json(const AnimationScript& s) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& seg : s.segments) {
        nlohmann::json pts = nlohmann::json::array();
        for (auto p : seg.points) pts.push_back(point_json(p));
        segs.push_back({{"kind", seg.pen_lift() ? "pen_lift" : "stroke"},
                        {"stroke", seg.stroke},
                        {"t_start", seg.t_start},
                        {"t_end", seg.t_end},
                        {"points", pts}});
    }
    return {{"total_duration", s.total_duration},
            {"pen_lift_duration", s.pen_lift_duration},
            {"color_mode", to_string(s.color)},
            {"loop", true},
            {"segments", segs},
            {"warnings", s.warnings}};
}

inline AnimationScript animation_from_json(const nlohmann::json& j) {
    AnimationScript s;
    s.total_duration = j.at("total_duration").get<double>();
    s.pen_lift_duration = j.value("pen_lift_duration", 0.5);
    s.color = parse_color_mode(j.value("color_mode", std::string{"black"}));
    for (const auto& seg : j.at("segments")) {
        AnimationSegment a{seg.at("stroke").get<int>(), seg.at("t_start").get<double>(), seg.at("t_end").get<double>(), {}};
        for (const auto& p : seg.at("points")) a.points.push_back(point_from_json(p));
        s.segments.push_back(std::move(a));
    }
    s.warnings = j.value("warnings", std::vector<std::string>{});
    return s;
}

// ---------------------------------------------------------------------------
// Exports

namespace detail {
inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}
} // namespace detail

/// One <path> per stroke made of cubic segments.
inline std::string export_svg(const PathDocument& doc, double stroke_width, ColorMode color = ColorMode::Black) {
    std::ostringstream os;
    os << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << doc.canvas_width << R"(" height=")"
       << doc.canvas_height << R"(" viewBox="0 0 )" << doc.canvas_width << ' ' << doc.canvas_height << "\">\n";
    const char* ink = color == ColorMode::Black ? "#000000" : "#ffffff";
    for (std::size_t i = 0; i < doc.strokes.size(); ++i) {
        const auto segs = to_cubic_beziers(doc.strokes[i]);
        os << "  <path id=\"stroke-" << i << "\" fill=\"none\" stroke=\"" << ink << "\" stroke-width=\""
           << detail::num(stroke_width) << "\" stroke-linecap=\"round\" d=\"M " << detail::num(segs.front()[0].x) << ' '
           << detail::num(segs.front()[0].y);
        for (const auto& b : segs)
            for (int k = 1; k <= 3; ++k) os << (k == 1 ? " C " : " ") << detail::num(b[k].x) << ' ' << detail::num(b[k].y);
        os << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Reads back the cubic segments of every <path d="M ... C ..."> element.
inline std::vector<std::vector<CubicBezier>> parse_svg_paths(const std::string& svg) {
    std::vector<std::vector<CubicBezier>> out;
    static const std::regex d_attr(R"re( d="([^"]*)")re");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), d_attr); it != std::sregex_iterator(); ++it) {
        std::istringstream is((*it)[1].str());
        std::string tok;
        std::vector<double> nums;
        std::vector<char> cmds;
        while (is >> tok) {
            if (tok == "M" || tok == "C") {
                cmds.push_back(tok[0]);
                continue;
            }
            nums.push_back(std::stod(tok));
        }
        require(nums.size() >= 8 && (nums.size() - 2) % 6 == 0, ErrorKind::Format, "unexpected SVG path data");
        std::vector<CubicBezier> segs;
        Point cur{nums[0], nums[1]};
        for (std::size_t i = 2; i < nums.size(); i += 6) {
            CubicBezier b{cur, {nums[i], nums[i + 1]}, {nums[i + 2], nums[i + 3]}, {nums[i + 4], nums[i + 5]}};
            cur = b[3];
            segs.push_back(b);
        }
        out.push_back(std::move(segs));
    }
    return out;
}

struct FabricationDocument {
    double scale_factor = 1.0;
    double inches_per_unit = 0.1;
    double width_in = 0.0;
    double height_in = 0.0;
    PathDocument paths;
};

/// Multiplies every coordinate by `factor`; the physical extent is the
/// scaled curve bounding box times `inches_per_px`.
inline FabricationDocument scale_for_fabrication(const PathDocument& doc, double factor, double inches_per_px) {
    require(factor > 0.0 && inches_per_px > 0.0, ErrorKind::Parameter, "scale factors must be positive");
    FabricationDocument f{factor, inches_per_px, 0.0, 0.0, doc};
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    for (auto& s : f.paths.strokes) {
        for (auto& c : s.control_points) c = factor * c;
        for (int i = 0; i <= 256; ++i) {
            const Point p = evaluate(s, i / 256.0);
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y);
            y1 = std::max(y1, p.y);
        }
    }
    if (!f.paths.strokes.empty()) {
        f.width_in = (x1 - x0) * inches_per_px;
        f.height_in = (y1 - y0) * inches_per_px;
    }
    return f;
}

inline nlohmann::json to_json(const FabricationDocument& f) {
    return {{"units", "in"},
            {"scale_factor", f.scale_factor},
            {"inches_per_unit", f.inches_per_unit},
            {"width_in", f.width_in},
            {"height_in", f.height_in},
            {"paths", to_json(f.paths)}};
}

} // namespace colsig
