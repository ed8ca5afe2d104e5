#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "shenet/errors.hpp"
#include "shenet/types.hpp"

namespace shenet {

namespace detail {

inline bool parse_number(const std::string& tok, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(tok, &pos);
        return pos == tok.size() && std::isfinite(out);
    } catch (const std::exception&) {
        return false;
    }
}

inline std::int64_t parse_integral(const std::string& tok, int line_no, const char* what) {
    double v = 0;
    if (!parse_number(tok, v))
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + tok + "'");
    const double r = std::llround(v);
    if (std::abs(v - r) > 1e-9)
        throw ParseError("line " + std::to_string(line_no) + ": non-integer " + what + " '" + tok + "'");
    return static_cast<std::int64_t>(r);
}

// Cut one gap-free track segment into overlapping windows.
inline void emit_windows(const std::vector<TrajPoint>& seg, std::int64_t ped, int t_pas,
                         int t_fut, int stride, std::vector<Trajectory>& out) {
    const int win = t_pas + t_fut;
    const auto len = static_cast<std::int64_t>(seg.size());
    for (std::int64_t off = 0; off + win <= len; off += stride) {
        Trajectory traj;
        traj.person_id = ped;
        traj.t_pas = t_pas;
        traj.t_fut = t_fut;
        traj.points.assign(seg.begin() + off, seg.begin() + off + win);
        validate(traj);
        out.push_back(std::move(traj));
    }
}

}  // namespace detail

/// Loads `frame_id ped_id x y` text records and cuts each pedestrian track
/// into overlapping windows of t_pas+t_fut points advanced by `stride`.
/// Tracks are split (not interpolated) at frame gaps larger than the track's
/// base sampling step; tracks shorter than one window are skipped.
/// Extra columns are ignored with a warning on `warn`.
inline Dataset load_trajectory_file(const std::string& path, int t_pas, int t_fut,
                                    int stride, std::ostream* warn = &std::cerr) {
    if (t_pas < 1 || t_fut < 1) throw ConfigError("load: t_pas and t_fut must be >= 1");
    if (stride < 1) throw ConfigError("load: stride must be >= 1");
    std::ifstream in(path);
    if (!in) throw DataError("load: cannot open '" + path + "'");

    struct Track {
        std::vector<TrajPoint> points;
    };
    std::map<std::int64_t, Track> tracks;
    std::vector<std::int64_t> ped_order;

    std::string line;
    int line_no = 0;
    int extra_col_lines = 0;
    int first_extra_line = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::vector<std::string> tok;
        std::string t;
        while (ss >> t) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() < 4)
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 columns, got " +
                             std::to_string(tok.size()));
        if (tok.size() > 4 && ++extra_col_lines == 1) first_extra_line = line_no;

        const std::int64_t frame = detail::parse_integral(tok[0], line_no, "frame_id");
        const std::int64_t ped = detail::parse_integral(tok[1], line_no, "ped_id");
        double x = 0, y = 0;
        if (!detail::parse_number(tok[2], x))
            throw ParseError("line " + std::to_string(line_no) + ": bad x '" + tok[2] + "'");
        if (!detail::parse_number(tok[3], y))
            throw ParseError("line " + std::to_string(line_no) + ": bad y '" + tok[3] + "'");
        if (frame < 0)
            throw ParseError("line " + std::to_string(line_no) + ": negative frame_id");

        auto [it, inserted] = tracks.try_emplace(ped);
        if (inserted) ped_order.push_back(ped);
        auto& pts = it->second.points;
        if (!pts.empty() && pts.back().t >= frame)
            throw DataError("ped " + std::to_string(ped) + ": non-monotone frame " +
                            std::to_string(frame) + " at line " + std::to_string(line_no));
        pts.push_back({frame, x, y});
    }
    if (extra_col_lines > 0 && warn)
        *warn << "warning: " << path << ": ignored extra columns on " << extra_col_lines
              << " line(s), first at line " << first_extra_line << "\n";

    Dataset ds;
    for (std::int64_t ped : ped_order) {
        const auto& pts = tracks[ped].points;
        // Base sampling step = smallest consecutive frame difference; a gap
        // larger than that splits the track into independent segments.
        std::int64_t step = 0;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const std::int64_t d = pts[i].t - pts[i - 1].t;
            if (step == 0 || d < step) step = d;
        }
        std::vector<TrajPoint> seg;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (!seg.empty() && pts[i].t - seg.back().t > step) {
                detail::emit_windows(seg, ped, t_pas, t_fut, stride, ds.trajectories);
                seg.clear();
            }
            seg.push_back(pts[i]);
        }
        if (!seg.empty()) detail::emit_windows(seg, ped, t_pas, t_fut, stride, ds.trajectories);
    }
    ds.split.assign(ds.trajectories.size(), Split::kTrain);
    return ds;
}

/// Writes trajectories back to the 4-column text format. Each trajectory gets
/// a fresh sequential ped_id so that overlapping windows of one original
/// track do not collide on reload.
inline void dump_trajectory_file(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("dump: cannot open '" + path + "' for writing");
    char buf[128];
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        for (const auto& p : ds.trajectories[i].points) {
            std::snprintf(buf, sizeof(buf), "%lld %zu %.17g %.17g\n",
                          static_cast<long long>(p.t), i, p.x, p.y);
            out << buf;
        }
    }
    if (!out) throw DataError("dump: write failed for '" + path + "'");
}

inline void save_raster(const SceneRaster& raster, const std::string& path) {
    nlohmann::json j;
    j["n_cls"] = raster.n_cls;
    j["h"] = raster.h;
    j["w"] = raster.w;
    j["grid"] = raster.grid;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_raster: cannot open '" + path + "'");
    out << j.dump(2) << "\n";
}

inline SceneRaster load_raster(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_raster: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_raster: invalid JSON in '" + path + "': " + e.what());
    }
    SceneRaster raster;
    try {
        raster.n_cls = j.at("n_cls").get<int>();
        raster.h = j.at("h").get<int>();
        raster.w = j.at("w").get<int>();
        raster.grid = j.at("grid").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_raster: missing or mistyped field: " + std::string(e.what()));
    }
    validate(raster);
    return raster;
}

/// Seeded shuffle split: round(n * train_fraction) trajectories become train.
inline void assign_split(Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
        throw ConfigError("assign_split: train_fraction must be in [0, 1]");
    const std::size_t n = ds.trajectories.size();
    auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * train_fraction));
    n_train = std::min(n_train, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    ds.split.assign(n, Split::kTest);
    for (std::size_t i = 0; i < n_train; ++i) ds.split[order[i]] = Split::kTrain;
}

// -- Synthetic multi-regularity scene -----------------------------------------

namespace detail {

constexpr double kWorldExtent = 24.0;  // square world [0, 24] x [0, 24]
constexpr int kWalkableClass = 1;
// Per-instance variation, as multiples of noise_sigma. Each instance of a
// group walks the same route with a phase lead or lag along it (kPhaseScale,
// which moves where the route's fixed turn or fold lands inside the sampled
// window), a steady walking-speed surplus or deficit (kGaitScale, the
// per-step along-track excess, which compounds over the window), and a small
// heading tilt (kTiltScale, radians of rotation about the middle of the
// observed segment, so the lateral deviation stays small while observed and
// grows through the predicted segment), plus the i.i.d. per-point jitter.
// Everything scales with noise_sigma, so at noise_sigma = 0 instances
// collapse exactly onto the template.
constexpr double kPhaseScale = 2.5;
constexpr double kGaitScale = 0.4;
constexpr double kTiltScale = 0.8;

/// Evaluates a polyline at fractional index u, extrapolating the end segments
/// beyond [0, size-1].
inline Vec2 sample_polyline(const Path& tpl, double u) {
    const double last = static_cast<double>(tpl.size() - 1);
    if (u <= 0.0) return tpl.front() + u * (tpl[1] - tpl[0]);
    if (u >= last) return tpl.back() + (u - last) * (tpl[tpl.size() - 1] - tpl[tpl.size() - 2]);
    const auto i = static_cast<std::size_t>(u);
    const double a = u - static_cast<double>(i);
    return tpl[i] + a * (tpl[i + 1] - tpl[i]);
}

/// Template for group g: a T-point polyline. Groups cycle through three
/// movement patterns (straight lane, L-turn, turn-back at a curb); repeats
/// get distinct lane positions. Each pattern walks at its own pace, so the
/// movement class shows up in the step length and not just in where the
/// route sits in the world.
constexpr double kPatternPace[3] = {1.00, 0.85, 1.15};

inline Path group_template(int g, int t_total, int t_pas) {
    const int pattern = g % 3;
    const int variant = g / 3;
    const double lane = 5.0 + 3.5 * variant + 1.5 * pattern;
    Path p(static_cast<std::size_t>(t_total));
    const double margin = 3.0;
    const double span = kWorldExtent - 2 * margin;
    const double step = kPatternPace[pattern] * span / (t_total - 1);
    switch (pattern) {
        case 0: {  // straight lane, left to right
            for (int i = 0; i < t_total; ++i)
                p[i] = {margin + i * step, lane};
            break;
        }
        case 1: {  // L-turn: right, then up
            const int leg1 = std::max(2, (t_total * 55) / 100);
            for (int i = 0; i < t_total; ++i) {
                if (i < leg1)
                    p[i] = {margin + i * step, lane};
                else
                    p[i] = {margin + (leg1 - 1) * step, lane + (i - leg1 + 1) * step};
            }
            break;
        }
        default: {  // turn-back: walk to a curb, then retrace
            // The fold lands a few steps into the future segment so the
            // reversal is part of what must be predicted.
            const int fold = std::min(t_total - 2, t_pas + std::max(1, (t_total - t_pas) / 6));
            for (int i = 0; i < t_total; ++i) {
                if (i <= fold)
                    p[i] = {margin + i * step, lane};
                else
                    p[i] = {margin + (2 * fold - i) * step, lane};
            }
            break;
        }
    }
    return p;
}

inline void mark_walkable(SceneRaster& raster, const Path& tpl) {
    const double cell_w = kWorldExtent / raster.w;
    const double cell_h = kWorldExtent / raster.h;
    auto mark = [&](Vec2 q) {
        int j = std::clamp(static_cast<int>(q.x / cell_w), 0, raster.w - 1);
        int i = std::clamp(static_cast<int>(q.y / cell_h), 0, raster.h - 1);
        raster.at(kWalkableClass, i, j) = 1.0;
    };
    for (std::size_t i = 0; i + 1 < tpl.size(); ++i) {
        for (int s = 0; s <= 8; ++s) {
            const double a = s / 8.0;
            mark({tpl[i].x + a * (tpl[i + 1].x - tpl[i].x),
                  tpl[i].y + a * (tpl[i + 1].y - tpl[i].y)});
        }
    }
}

}  // namespace detail

/// Deterministic synthetic dataset: n_groups lane/turn templates (one
/// turn-back pattern whenever n_groups >= 3), each instantiated per_group
/// times with Gaussian positional noise, plus a raster marking the lanes
/// walkable. All trajectories are labeled train; use assign_split to carve
/// out a test set.
inline Dataset generate_synthetic_scene(int n_groups, int per_group, double noise_sigma,
                                        std::uint64_t seed, int t_pas, int t_fut,
                                        int n_cls = 8, int grid_h = 16, int grid_w = 16) {
    if (n_groups < 1) throw ConfigError("synthetic: n_groups must be >= 1");
    if (per_group < 1) throw ConfigError("synthetic: per_group must be >= 1");
    if (!(noise_sigma >= 0)) throw ConfigError("synthetic: noise_sigma must be >= 0");
    if (t_pas < 2 || t_fut < 1) throw ConfigError("synthetic: need t_pas >= 2, t_fut >= 1");
    if (n_cls <= detail::kWalkableClass)
        throw ConfigError("synthetic: n_cls must be > " + std::to_string(detail::kWalkableClass));

    const int t_total = t_pas + t_fut;
    Dataset ds;
    ds.scene.n_cls = n_cls;
    ds.scene.h = grid_h;
    ds.scene.w = grid_w;
    ds.scene.grid.assign(static_cast<std::size_t>(n_cls) * grid_h * grid_w, 0.0);
    // class 0 = ground everywhere, class 1 = walkable lanes
    for (int i = 0; i < grid_h; ++i)
        for (int j = 0; j < grid_w; ++j) ds.scene.at(0, i, j) = 1.0;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::int64_t pid = 0;
    for (int g = 0; g < n_groups; ++g) {
        const Path tpl = detail::group_template(g, t_total, t_pas);
        detail::mark_walkable(ds.scene, tpl);
        // Step length along the template arc; every template advances by a
        // constant arc step, so a fractional-index offset is an arc offset.
        const Vec2 first_leg = tpl[1] - tpl[0];
        const double step_len = std::hypot(first_leg.x, first_leg.y);
        for (int k = 0; k < per_group; ++k) {
            Trajectory traj;
            traj.person_id = pid++;
            traj.t_pas = t_pas;
            traj.t_fut = t_fut;
            traj.points.resize(static_cast<std::size_t>(t_total));
            double phase = 0.0;
            double gait = 0.0;
            double tilt = 0.0;
            if (noise_sigma > 0) {
                phase = detail::kPhaseScale * noise_sigma * unit_normal(rng) / step_len;
                gait = detail::kGaitScale * noise_sigma * unit_normal(rng) / step_len;
                tilt = detail::kTiltScale * noise_sigma * unit_normal(rng);
            }
            const double ct = std::cos(tilt), st = std::sin(tilt);
            const Vec2 pivot = tpl[static_cast<std::size_t>(t_pas / 2)];
            for (int i = 0; i < t_total; ++i) {
                const Vec2 s = detail::sample_polyline(tpl, (1.0 + gait) * i + phase);
                const Vec2 d = s - pivot;
                Vec2 q{pivot.x + ct * d.x - st * d.y,
                       pivot.y + st * d.x + ct * d.y};
                if (noise_sigma > 0) {
                    q.x += noise_sigma * unit_normal(rng);
                    q.y += noise_sigma * unit_normal(rng);
                }
                traj.points[i] = {i, q.x, q.y};
            }
            validate(traj);
            ds.trajectories.push_back(std::move(traj));
        }
    }
    ds.split.assign(ds.trajectories.size(), Split::kTrain);
    return ds;
}

}  // namespace shenet
