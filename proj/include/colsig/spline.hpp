#pragma once

// Clamped B-spline fitting, de Boor evaluation, arc-length resampling and
// conversion to cubic Bezier segments.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "colsig/error.hpp"

namespace colsig {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

using Polyline = std::vector<Point>;

struct SplinePath {
    int degree = 3;
    std::vector<Point> control_points;
    std::vector<double> knots;
};

struct FitOptions {
    int degree = 3;
    /// Weight of the second-difference roughness penalty on the control polygon.
    double smoothing = 0.0;
    /// 0 means one control point per anchor (interpolation when smoothing is 0).
    int control_points = 0;
};

/// Index k with knots[k] <= t < knots[k+1], clamped to the last nonempty span.
inline int find_span(const SplinePath& path, double t) {
    const int n = static_cast<int>(path.control_points.size());
    const int p = path.degree;
    if (t >= path.knots[n]) return n - 1;
    if (t <= path.knots[p]) return p;
    const auto it = std::upper_bound(path.knots.begin() + p, path.knots.begin() + n + 1, t);
    return static_cast<int>(it - path.knots.begin()) - 1;
}

/// Nonzero basis functions N_{k-p..k, p}(t) (triangular scheme).
inline std::vector<double> basis_functions(const std::vector<double>& knots, int span, double t, int p) {
    std::vector<double> N(p + 1, 0.0), left(p + 1), right(p + 1);
    N[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double tmp = N[r] / (right[r + 1] + left[j - r]);
            N[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        N[j] = saved;
    }
    return N;
}

/// de Boor's algorithm. t must lie in [0,1].
inline Point evaluate(const SplinePath& path, double t) {
    require(t >= 0.0 && t <= 1.0, ErrorKind::Parameter, "spline parameter must lie in [0,1]");
    require(!path.control_points.empty(), ErrorKind::Parameter, "empty spline");
    const int p = path.degree;
    const int k = find_span(path, t);
    std::vector<Point> d(path.control_points.begin() + (k - p), path.control_points.begin() + (k + 1));
    for (int r = 1; r <= p; ++r)
        for (int j = p; j >= r; --j) {
            const double lo = path.knots[j + k - p], hi = path.knots[j + 1 + k - r];
            const double a = hi > lo ? (t - lo) / (hi - lo) : 0.0;
            d[j] = (1.0 - a) * d[j - 1] + a * d[j];
        }
    return d[p];
}

/// Drops consecutive duplicates.
inline Polyline collapse_coincident(std::span<const Point> pts, double tol = 1e-12) {
    Polyline out;
    for (const auto& p : pts)
        if (out.empty() || distance(out.back(), p) > tol) out.push_back(p);
    return out;
}

inline std::vector<double> chord_parameters(const Polyline& pts) {
    std::vector<double> u(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) u[i] = u[i - 1] + distance(pts[i - 1], pts[i]);
    const double total = u.back();
    for (auto& v : u) v /= total;
    u.back() = 1.0;
    return u;
}

/// Clamped knots. With as many control points as anchors the interior knots
/// average the parameters, which keeps the interpolation system nonsingular
/// for any chord spacing; otherwise they are uniform.
inline std::vector<double> clamped_knots(int n_ctrl, int p, const std::vector<double>& u) {
    std::vector<double> knots(static_cast<std::size_t>(n_ctrl + p + 1), 0.0);
    for (int i = 0; i <= p; ++i) knots[knots.size() - 1 - i] = 1.0;
    const int interior = n_ctrl - p - 1;
    const bool averaging = static_cast<int>(u.size()) == n_ctrl;
    for (int j = 1; j <= interior; ++j) {
        double v = 0.0;
        if (averaging) {
            for (int i = j; i < j + p; ++i) v += u[i];
            v /= p;
        } else {
            v = static_cast<double>(j) / (interior + 1);
        }
        knots[j + p] = v;
    }
    return knots;
}

/// Least-squares clamped B-spline through chord-parameterized anchors with
/// the end anchors interpolated exactly. The degree drops to count-1 when
/// there are too few anchors.
inline SplinePath fit_bspline(std::span<const Point> anchors, const FitOptions& opt = {}) {
    require(opt.degree >= 1, ErrorKind::Parameter, "spline degree must be >= 1");
    require(opt.smoothing >= 0.0, ErrorKind::Parameter, "smoothing must be >= 0");
    const Polyline q = collapse_coincident(anchors);
    require(q.size() >= 2, ErrorKind::Parameter, "a stroke needs at least 2 distinct anchors");
    const int m = static_cast<int>(q.size());
    const int p = std::min(opt.degree, m - 1);
    const int n = opt.control_points > 0 ? std::clamp(opt.control_points, p + 1, m) : m;
    const auto u = chord_parameters(q);

    SplinePath path;
    path.degree = p;
    path.knots = clamped_knots(n, p, u);
    path.control_points.assign(static_cast<std::size_t>(n), Point{});
    path.control_points.front() = q.front();
    path.control_points.back() = q.back();
    if (n == 2) return path;

    // Unknowns are the interior control points 1..n-2.
    const int k = n - 2;
    const bool penalize = opt.smoothing > 0.0 && n >= 3;
    const int rows = m + (penalize ? n - 2 : 0);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, k);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(rows, 2);
    for (int i = 0; i < m; ++i) {
        const int span = find_span(path, u[i]);
        const auto N = basis_functions(path.knots, span, u[i], p);
        b(i, 0) = q[i].x;
        b(i, 1) = q[i].y;
        for (int r = 0; r <= p; ++r) {
            const int j = span - p + r;
            if (j == 0 || j == n - 1) {
                b(i, 0) -= N[r] * path.control_points[j].x;
                b(i, 1) -= N[r] * path.control_points[j].y;
            } else {
                A(i, j - 1) += N[r];
            }
        }
    }
    if (penalize) {
        const double w = std::sqrt(opt.smoothing);
        for (int j = 1; j + 1 < n; ++j) {
            const int row = m + j - 1;
            const std::array<std::pair<int, double>, 3> terms{{{j - 1, w}, {j, -2.0 * w}, {j + 1, w}}};
            for (auto [idx, c] : terms) {
                if (idx == 0 || idx == n - 1) {
                    b(row, 0) -= c * path.control_points[idx].x;
                    b(row, 1) -= c * path.control_points[idx].y;
                } else {
                    A(row, idx - 1) += c;
                }
            }
        }
    }
    const Eigen::MatrixXd P = A.colPivHouseholderQr().solve(b);
    for (int j = 0; j < k; ++j) path.control_points[j + 1] = {P(j, 0), P(j, 1)};
    return path;
}

inline constexpr int kArcLengthSamples = 1024;

/// Cumulative chord length at t = i / kArcLengthSamples.
inline std::vector<double> arc_length_table(const SplinePath& path) {
    std::vector<double> s(kArcLengthSamples + 1, 0.0);
    Point prev = evaluate(path, 0.0);
    for (int i = 1; i <= kArcLengthSamples; ++i) {
        const Point cur = evaluate(path, static_cast<double>(i) / kArcLengthSamples);
        s[i] = s[i - 1] + distance(prev, cur);
        prev = cur;
    }
    return s;
}

inline double arc_length(const SplinePath& path) { return arc_length_table(path).back(); }

/// n points at equal arc-length spacing (inverse interpolation of the
/// chord-length table). Endpoints are exact.
inline Polyline resample_arclength(const SplinePath& path, int n) {
    require(n >= 2, ErrorKind::Parameter, "resampling needs at least 2 points");
    const auto s = arc_length_table(path);
    const double total = s.back();
    Polyline out;
    out.reserve(n);
    out.push_back(evaluate(path, 0.0));
    for (int j = 1; j + 1 < n; ++j) {
        const double target = total * j / (n - 1);
        const auto it = std::lower_bound(s.begin(), s.end(), target);
        const int i = std::clamp(static_cast<int>(it - s.begin()), 1, kArcLengthSamples);
        const double seg = s[i] - s[i - 1];
        const double frac = seg > 0.0 ? (target - s[i - 1]) / seg : 0.0;
        out.push_back(evaluate(path, std::clamp((i - 1 + frac) / kArcLengthSamples, 0.0, 1.0)));
    }
    out.push_back(evaluate(path, 1.0));
    return out;
}

/// Boehm knot insertion of `t` once.
inline SplinePath insert_knot(const SplinePath& path, double t) {
    const int p = path.degree;
    const int k = find_span(path, t);
    SplinePath out;
    out.degree = p;
    out.knots = path.knots;
    out.knots.insert(out.knots.begin() + k + 1, t);
    const auto& P = path.control_points;
    out.control_points.reserve(P.size() + 1);
    for (int i = 0; i <= k - p; ++i) out.control_points.push_back(P[i]);
    for (int i = k - p + 1; i <= k; ++i) {
        const double a = (t - path.knots[i]) / (path.knots[i + p] - path.knots[i]);
        out.control_points.push_back((1.0 - a) * P[i - 1] + a * P[i]);
    }
    for (std::size_t i = static_cast<std::size_t>(k); i < P.size(); ++i) out.control_points.push_back(P[i]);
    return out;
}

using CubicBezier = std::array<Point, 4>;

/// Splits the spline into Bezier pieces and elevates each to cubic.
inline std::vector<CubicBezier> to_cubic_beziers(const SplinePath& path) {
    const int p = path.degree;
    require(p >= 1 && p <= 3, ErrorKind::Parameter, "only degrees 1..3 convert to cubic segments");
    SplinePath s = path;
    const int n = static_cast<int>(path.control_points.size());
    // Raise every distinct interior knot to multiplicity p.
    std::vector<double> interior(path.knots.begin() + p + 1, path.knots.begin() + n);
    interior.erase(std::unique(interior.begin(), interior.end()), interior.end());
    for (double t : interior) {
        const auto mult = std::count(s.knots.begin(), s.knots.end(), t);
        for (auto i = mult; i < p; ++i) s = insert_knot(s, t);
    }
    std::vector<CubicBezier> out;
    const auto& C = s.control_points;
    for (std::size_t i = 0; i + p < C.size(); i += p) {
        if (p == 3) {
            out.push_back({C[i], C[i + 1], C[i + 2], C[i + 3]});
        } else if (p == 2) {
            out.push_back({C[i], C[i] + (2.0 / 3.0) * (C[i + 1] - C[i]), C[i + 2] + (2.0 / 3.0) * (C[i + 1] - C[i + 2]),
                           C[i + 2]});
        } else {
            out.push_back({C[i], C[i] + (1.0 / 3.0) * (C[i + 1] - C[i]), C[i] + (2.0 / 3.0) * (C[i + 1] - C[i]), C[i + 1]});
        }
    }
    return out;
}

} // namespace colsig
