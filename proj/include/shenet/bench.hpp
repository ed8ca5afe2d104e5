#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "shenet/bank.hpp"
#include "shenet/types.hpp"

namespace shenet {

struct BenchPoint {
    std::size_t size{0};
    double search_mean_ns{0};
    double update_mean_ns{0};
};

struct BenchResult {
    std::vector<BenchPoint> points;
    double search_fit_r2{0};   // linear fit of search_mean_ns against size
    double update_ratio{0};    // max update_mean_ns / min update_mean_ns
};

namespace detail {

inline Path random_path(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> coord(12.0, 4.0);
    Path p(n);
    for (auto& v : p) v = {coord(rng), coord(rng)};
    return p;
}

inline TrajectoryBank random_bank(std::size_t n, int t_pas, int t_fut,
                                  std::mt19937_64& rng) {
    TrajectoryBank bank;
    bank.t_pas = t_pas;
    bank.t_fut = t_fut;
    bank.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        BankEntry e;
        e.past = random_path(static_cast<std::size_t>(t_pas), rng);
        e.future = random_path(static_cast<std::size_t>(t_fut), rng);
        e.origin = EntryOrigin::kInitialCluster;
        bank.entries.push_back(std::move(e));
    }
    return bank;
}

inline Trajectory random_trajectory(int t_pas, int t_fut, std::mt19937_64& rng) {
    Trajectory traj;
    traj.person_id = 0;
    traj.t_pas = t_pas;
    traj.t_fut = t_fut;
    const Path coords = random_path(static_cast<std::size_t>(t_pas + t_fut), rng);
    traj.points.reserve(coords.size());
    for (std::size_t t = 0; t < coords.size(); ++t)
        traj.points.push_back({static_cast<std::int64_t>(t), coords[t].x, coords[t].y});
    return traj;
}

/// R^2 of the least-squares line through (x_i, y_i).
inline double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0) return 0.0;
    const double slope = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean_y = sy / n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double fit = slope * x[i] + intercept;
        ss_res += (y[i] - fit) * (y[i] - fit);
        ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
    }
    if (ss_tot == 0) return 1.0;
    return 1.0 - ss_res / ss_tot;
}

}  // namespace detail

/// Times bank search and online update across bank sizes. Search should grow
/// linearly with the bank; a pure append should not depend on it.
inline BenchResult bench_search(const std::vector<std::size_t>& sizes = {100, 1000, 10000},
                                std::size_t n_queries = 1000, int t_pas = 8, int t_fut = 12,
                                std::uint64_t seed = 42) {
    using clock = std::chrono::steady_clock;
    std::mt19937_64 rng(seed);
    BenchResult result;

    for (const std::size_t size : sizes) {
        BenchPoint point;
        point.size = size;

        TrajectoryBank bank = detail::random_bank(size, t_pas, t_fut, rng);
        freeze(bank);
        std::vector<Path> queries;
        queries.reserve(n_queries);
        for (std::size_t i = 0; i < n_queries; ++i)
            queries.push_back(detail::random_path(static_cast<std::size_t>(t_pas), rng));

        double sink = 0.0;  // keeps the loop from being optimized away
        const auto t0 = clock::now();
        for (const auto& q : queries) sink += search(bank, q).score;
        const auto t1 = clock::now();
        point.search_mean_ns =
            static_cast<double>(
                std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()) /
            static_cast<double>(n_queries);
        if (!(sink > -1e300)) point.search_mean_ns = 0;  // never taken

        // theta = 0 with random data means every offer is added; beta at the
        // int64 ceiling means no merge ever triggers, so this times the append.
        TrajectoryBank grow = detail::random_bank(size, t_pas, t_fut, rng);
        grow.theta = 0.0;
        std::vector<Trajectory> offers;
        offers.reserve(n_queries);
        for (std::size_t i = 0; i < n_queries; ++i)
            offers.push_back(detail::random_trajectory(t_pas, t_fut, rng));
        const Path flat_pred(static_cast<std::size_t>(t_fut), Vec2{0.0, 0.0});
        const auto t2 = clock::now();
        for (const auto& offer : offers) maybe_update(grow, offer, flat_pred, 1, seed);
        const auto t3 = clock::now();
        point.update_mean_ns =
            static_cast<double>(
                std::chrono::duration_cast<std::chrono::nanoseconds>(t3 - t2).count()) /
            static_cast<double>(n_queries);

        result.points.push_back(point);
    }

    std::vector<double> xs, ys;
    double umin = result.points.front().update_mean_ns;
    double umax = umin;
    for (const auto& p : result.points) {
        xs.push_back(static_cast<double>(p.size));
        ys.push_back(p.search_mean_ns);
        umin = std::min(umin, p.update_mean_ns);
        umax = std::max(umax, p.update_mean_ns);
    }
    result.search_fit_r2 = detail::linear_fit_r2(xs, ys);
    result.update_ratio = umin > 0 ? umax / umin : 0.0;
    return result;
}

/// CSV of (size, mean_ns) for the search timings.
inline void write_bench_csv(const BenchResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("bench: cannot open '" + path + "'");
    out << "size,mean_ns\n";
    char buf[64];
    for (const auto& p : result.points) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g\n", p.size, p.search_mean_ns);
        out << buf;
    }
}

}  // namespace shenet
