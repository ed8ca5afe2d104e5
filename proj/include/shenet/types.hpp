#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shenet/errors.hpp"

namespace shenet {

struct Vec2 {
    double x{0};
    double y{0};

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;

    [[nodiscard]] double norm() const { return std::hypot(x, y); }
};

/// A T x 2 point matrix, one row per time step.
using Path = std::vector<Vec2>;

struct TrajPoint {
    std::int64_t t{0};  // frame index
    double x{0};
    double y{0};

    friend bool operator==(const TrajPoint&, const TrajPoint&) = default;
};

/// One past/future window cut from a pedestrian track.
/// points holds t_pas observed steps followed by t_fut future steps.
struct Trajectory {
    std::int64_t person_id{0};
    std::vector<TrajPoint> points;
    int t_pas{0};
    int t_fut{0};

    [[nodiscard]] Path past() const {
        Path p(static_cast<std::size_t>(t_pas));
        for (int i = 0; i < t_pas; ++i) p[i] = {points[i].x, points[i].y};
        return p;
    }
    [[nodiscard]] Path future() const {
        Path p(static_cast<std::size_t>(t_fut));
        for (int i = 0; i < t_fut; ++i) {
            const auto& q = points[static_cast<std::size_t>(t_pas + i)];
            p[i] = {q.x, q.y};
        }
        return p;
    }
    [[nodiscard]] Path full() const {
        Path p(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) p[i] = {points[i].x, points[i].y};
        return p;
    }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline void validate(const Trajectory& traj) {
    if (traj.t_pas < 2) throw DataError("trajectory: t_pas must be >= 2");
    if (traj.t_fut < 1) throw DataError("trajectory: t_fut must be >= 1");
    if (traj.points.size() != static_cast<std::size_t>(traj.t_pas + traj.t_fut))
        throw DataError("trajectory: point count does not equal t_pas + t_fut");
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        const auto& p = traj.points[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw DataError("trajectory: non-finite coordinate");
        if (p.t < 0) throw DataError("trajectory: negative frame index");
        if (i > 0 && traj.points[i - 1].t >= p.t)
            throw DataError("trajectory: frame indices must be strictly increasing");
    }
}

/// Per-class occupancy grid standing in for a scene image.
/// grid is class-major row-major: grid[(c*h + i)*w + j] in [0, 1].
struct SceneRaster {
    int n_cls{1};
    int h{1};
    int w{1};
    std::vector<double> grid{0.0};

    [[nodiscard]] double at(int c, int i, int j) const {
        return grid[(static_cast<std::size_t>(c) * h + i) * w + j];
    }
    [[nodiscard]] double& at(int c, int i, int j) {
        return grid[(static_cast<std::size_t>(c) * h + i) * w + j];
    }

    friend bool operator==(const SceneRaster&, const SceneRaster&) = default;
};

inline void validate(const SceneRaster& raster) {
    if (raster.n_cls < 1 || raster.h < 1 || raster.w < 1)
        throw DataError("raster: dimensions must be >= 1");
    const auto expected =
        static_cast<std::size_t>(raster.n_cls) * raster.h * raster.w;
    if (raster.grid.size() != expected)
        throw DataError("raster: grid size does not match n_cls*h*w");
    for (double v : raster.grid)
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("raster: cell outside [0, 1]");
}

enum class Split { kTrain, kTest };

struct Dataset {
    std::vector<Trajectory> trajectories;
    SceneRaster scene;
    std::vector<Split> split;  // one label per trajectory
    std::string units{"units"};

    [[nodiscard]] std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < trajectories.size(); ++i)
            if (split[i] == s) out.push_back(i);
        return out;
    }
    [[nodiscard]] std::vector<Trajectory> subset(Split s) const {
        std::vector<Trajectory> out;
        for (std::size_t i = 0; i < trajectories.size(); ++i)
            if (split[i] == s) out.push_back(trajectories[i]);
        return out;
    }
};

// -- Small Path helpers used across modules ----------------------------------

inline std::vector<double> flatten(const Path& p) {
    std::vector<double> v;
    v.reserve(p.size() * 2);
    for (const auto& q : p) {
        v.push_back(q.x);
        v.push_back(q.y);
    }
    return v;
}

inline void require_same_shape(const Path& a, const Path& b, const char* what) {
    if (a.size() != b.size())
        throw DataError(std::string(what) + ": shape mismatch (" +
                        std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

}  // namespace shenet
