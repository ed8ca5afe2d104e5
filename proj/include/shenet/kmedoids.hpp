#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "shenet/errors.hpp"

namespace shenet {

struct KMedoidsResult {
    std::vector<std::size_t> medoids;     // indices into the input, ascending
    std::vector<std::size_t> assignment;  // per point: position in `medoids`
    double cost{0};                       // sum of distances to assigned medoids
    std::vector<double> cost_history;     // cost after init and after each swap
    int iterations{0};                    // swap iterations performed
};

namespace detail {

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace detail

/// PAM-style K-medoids: seeded random initial medoids, then repeated
/// best-improvement (medoid, non-medoid) swaps until no swap lowers the total
/// distance or max_iter swaps were made. Deterministic for a fixed seed; swap
/// ties go to the lowest index pair. The objective never increases.
inline KMedoidsResult kmedoids(const std::vector<std::vector<double>>& points, std::size_t k,
                               int max_iter, std::uint64_t seed) {
    const std::size_t n = points.size();
    if (n == 0) throw ConfigError("kmedoids: empty input");
    if (k < 1 || k > n)
        throw ConfigError("kmedoids: k = " + std::to_string(k) + " outside [1, " +
                          std::to_string(n) + "]");
    for (const auto& p : points)
        if (p.size() != points[0].size())
            throw DataError("kmedoids: points have mixed dimensions");

    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = detail::euclidean(points[i], points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    auto d_of = [&](std::size_t i, std::size_t j) { return dist[i * n + j]; };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> medoids(order.begin(), order.begin() + k);
    std::sort(medoids.begin(), medoids.end());
    std::vector<char> is_medoid(n, 0);
    for (std::size_t m : medoids) is_medoid[m] = 1;

    // Cached nearest / second-nearest medoid distances per point; swap deltas
    // are then O(n) per candidate pair.
    std::vector<double> d1(n), d2(n);
    std::vector<std::size_t> n1(n);
    auto recache = [&]() {
        for (std::size_t p = 0; p < n; ++p) {
            double best = std::numeric_limits<double>::infinity();
            double second = std::numeric_limits<double>::infinity();
            std::size_t best_m = 0;
            for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
                const double d = d_of(p, medoids[mi]);
                if (d < best) {
                    second = best;
                    best = d;
                    best_m = mi;
                } else if (d < second) {
                    second = d;
                }
            }
            d1[p] = best;
            d2[p] = second;
            n1[p] = best_m;
        }
    };
    recache();

    KMedoidsResult result;
    result.cost = std::accumulate(d1.begin(), d1.end(), 0.0);
    result.cost_history.push_back(result.cost);

    for (int iter = 0; iter < max_iter; ++iter) {
        double best_delta = 0.0;
        std::size_t best_mi = 0, best_h = 0;
        bool found = false;
        for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
            for (std::size_t h = 0; h < n; ++h) {
                if (is_medoid[h]) continue;
                double delta = 0.0;
                for (std::size_t p = 0; p < n; ++p) {
                    const double dph = d_of(p, h);
                    if (n1[p] == mi)
                        delta += std::min(dph, d2[p]) - d1[p];
                    else if (dph < d1[p])
                        delta += dph - d1[p];
                }
                if (delta < best_delta - 1e-12) {
                    best_delta = delta;
                    best_mi = mi;
                    best_h = h;
                    found = true;
                }
            }
        }
        if (!found) break;
        is_medoid[medoids[best_mi]] = 0;
        is_medoid[best_h] = 1;
        medoids[best_mi] = best_h;
        recache();
        result.cost = std::accumulate(d1.begin(), d1.end(), 0.0);
        result.cost_history.push_back(result.cost);
        result.iterations = iter + 1;
    }

    // Canonical order plus lowest-index tie-breaking keeps results stable
    // across platforms.
    std::sort(medoids.begin(), medoids.end());
    result.medoids = medoids;
    result.assignment.resize(n);
    double final_cost = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best_mi = 0;
        double best = d_of(p, medoids[0]);
        for (std::size_t mi = 1; mi < medoids.size(); ++mi) {
            const double d = d_of(p, medoids[mi]);
            if (d < best) {
                best = d;
                best_mi = mi;
            }
        }
        result.assignment[p] = best_mi;
        final_cost += best;
    }
    result.cost = final_cost;
    return result;
}

/// Element-wise means of the points assigned to each medoid. Clusters that
/// attracted no points (possible when duplicate points are both medoids) are
/// dropped.
inline std::vector<std::vector<double>> cluster_averages(
    const std::vector<std::vector<double>>& points, const KMedoidsResult& result) {
    const std::size_t k = result.medoids.size();
    std::vector<std::vector<double>> sums(k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t p = 0; p < points.size(); ++p) {
        const std::size_t c = result.assignment[p];
        if (sums[c].empty()) sums[c].assign(points[p].size(), 0.0);
        for (std::size_t i = 0; i < points[p].size(); ++i) sums[c][i] += points[p][i];
        ++counts[c];
    }
    std::vector<std::vector<double>> out;
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
        out.push_back(std::move(sums[c]));
    }
    return out;
}

}  // namespace shenet
