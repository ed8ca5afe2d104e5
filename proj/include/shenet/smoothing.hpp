#pragma once

#include <cmath>
#include <cstddef>

#include "shenet/errors.hpp"
#include "shenet/types.hpp"

namespace shenet {

/// How the quadratic Bézier control point is chosen when smoothing.
struct ControlRule {
    enum class Kind {
        /// control = (1 - t0) * start + t0 * end. Every smoothed point then
        /// lies on the start-end chord; kept for reference and tests.
        kChordPoint,
        /// control = the raw point at index floor((n - 1) / 2). Default.
        kMidTrajectoryPoint,
        /// control minimizing the sum of squared distances between the
        /// sampled curve and the raw points (closed-form linear solve).
        kLeastSquaresFit,
    };

    Kind kind{Kind::kMidTrajectoryPoint};
    double t0{0.5};  // used by kChordPoint only

    static ControlRule mid() { return {Kind::kMidTrajectoryPoint, 0.5}; }
    static ControlRule chord(double t0) {
        if (!(t0 >= 0.0 && t0 <= 1.0))
            throw ConfigError("control rule: t0 must be in [0, 1]");
        return {Kind::kChordPoint, t0};
    }
    static ControlRule lsq() { return {Kind::kLeastSquaresFit, 0.5}; }
};

struct BezierSpec {
    Vec2 start;
    Vec2 control;
    Vec2 end;
};

/// Quadratic Bézier: (1-t)^2 start + 2(1-t)t control + t^2 end, t in [0, 1].
inline Vec2 bezier_eval(const BezierSpec& spec, double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw DataError("bezier_eval: t outside [0, 1]");
    const double u = 1.0 - t;
    return (u * u) * spec.start + (2.0 * u * t) * spec.control + (t * t) * spec.end;
}

/// Picks the control point for a raw n-point trajectory under `rule`.
inline BezierSpec make_bezier_spec(const Path& points, ControlRule rule) {
    const std::size_t n = points.size();
    if (n < 2) throw DataError("bezier spec: need at least 2 points");
    BezierSpec spec;
    spec.start = points.front();
    spec.end = points.back();
    switch (rule.kind) {
        case ControlRule::Kind::kChordPoint:
            spec.control = (1.0 - rule.t0) * spec.start + rule.t0 * spec.end;
            break;
        case ControlRule::Kind::kMidTrajectoryPoint:
            spec.control = points[(n - 1) / 2];
            break;
        case ControlRule::Kind::kLeastSquaresFit: {
            // Minimize sum_j |B(t_j) - p_j|^2 over the control c alone.
            // With a_j the endpoint part of B(t_j) and b_j = 2(1-t_j)t_j:
            //   c = sum_j b_j (p_j - a_j) / sum_j b_j^2.
            double denom = 0.0;
            Vec2 num{0, 0};
            for (std::size_t j = 0; j < n; ++j) {
                const double t = static_cast<double>(j) / static_cast<double>(n - 1);
                const double u = 1.0 - t;
                const double b = 2.0 * u * t;
                const Vec2 a = (u * u) * spec.start + (t * t) * spec.end;
                num = num + b * (points[j] - a);
                denom += b * b;
            }
            // n = 2 samples only the endpoints, leaving c unconstrained.
            spec.control = denom > 0.0 ? (1.0 / denom) * num
                                       : 0.5 * (spec.start + spec.end);
            break;
        }
    }
    return spec;
}

/// Replaces an n-point trajectory with n equidistant-in-t samples of one
/// quadratic Bézier through its endpoints. Endpoints are copied exactly.
inline Path smooth_trajectory(const Path& points, ControlRule rule) {
    const std::size_t n = points.size();
    if (n < 2) throw DataError("smooth_trajectory: need at least 2 points");
    const BezierSpec spec = make_bezier_spec(points, rule);
    Path out(n);
    out.front() = points.front();
    out.back() = points.back();
    for (std::size_t j = 1; j + 1 < n; ++j)
        out[j] = bezier_eval(spec, static_cast<double>(j) / static_cast<double>(n - 1));
    return out;
}

/// Smooths the future segment only, as the loss and CS metrics require.
inline Path smooth_future(const Trajectory& traj, ControlRule rule) {
    validate(traj);
    return smooth_trajectory(traj.future(), rule);
}

/// Smooths the whole past+future sequence; optional variant of smooth_future.
inline Path smooth_full(const Trajectory& traj, ControlRule rule) {
    validate(traj);
    return smooth_trajectory(traj.full(), rule);
}

}  // namespace shenet
