#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "shenet/errors.hpp"
#include "shenet/smoothing.hpp"
#include "shenet/types.hpp"

namespace shenet {

/// Mean per-timestep L2 distance between two equally shaped point sequences.
inline double ade(const Path& pred, const Path& gt) {
    require_same_shape(pred, gt, "ade");
    if (pred.empty()) throw DataError("ade: empty trajectories");
    double sum = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t) sum += (pred[t] - gt[t]).norm();
    return sum / static_cast<double>(pred.size());
}

/// L2 distance at the final time step.
inline double fde(const Path& pred, const Path& gt) {
    require_same_shape(pred, gt, "fde");
    if (pred.empty()) throw DataError("fde: empty trajectories");
    return (pred.back() - gt.back()).norm();
}

/// ADE against the curve-smoothed ground truth. By default only the ground
/// truth is smoothed and the prediction is scored raw; `smooth_pred` smooths
/// both sides for ablation.
inline double cs_ade(const Path& pred, const Path& gt, ControlRule rule,
                     bool smooth_pred = false) {
    require_same_shape(pred, gt, "cs_ade");
    return ade(smooth_pred ? smooth_trajectory(pred, rule) : pred,
               smooth_trajectory(gt, rule));
}

/// FDE against the curve-smoothed ground truth.
inline double cs_fde(const Path& pred, const Path& gt, ControlRule rule,
                     bool smooth_pred = false) {
    require_same_shape(pred, gt, "cs_fde");
    return fde(smooth_pred ? smooth_trajectory(pred, rule) : pred,
               smooth_trajectory(gt, rule));
}

/// Minimum of `metric(pred, gt)` over a non-empty candidate list.
template <typename Metric>
double best_of_k(const std::vector<Path>& preds, const Path& gt, Metric&& metric) {
    if (preds.empty()) throw DataError("best_of_k: no predictions");
    double best = metric(preds[0], gt);
    for (std::size_t i = 1; i < preds.size(); ++i)
        best = std::min(best, metric(preds[i], gt));
    return best;
}

struct TrajectoryMetrics {
    double ade{0};
    double fde{0};
    double cs_ade{0};
    double cs_fde{0};
};

/// Per-trajectory displacement errors plus their arithmetic means.
struct EvalReport {
    std::vector<TrajectoryMetrics> per_trajectory;
    TrajectoryMetrics aggregate;
    int best_of_k{1};
    std::size_t n{0};
};

/// Observed/ground-truth/predicted polylines kept alongside the metrics so
/// reports can plot the trajectories the numbers came from.
struct EvalTrace {
    std::int64_t person_id{0};
    Path observed;
    Path gt;
    Path pred;  // best-scoring candidate
};

/// Maps an observed past and the scene raster to candidate futures.
using Predictor = std::function<std::vector<Path>(const Path&, const SceneRaster&)>;

/// Scores `predictor` on every trajectory, taking the best of its k candidates
/// per metric. Pass `traces` to also capture the plotted polylines.
inline EvalReport evaluate(const std::vector<Trajectory>& testset, const SceneRaster& scene,
                           const Predictor& predictor, int k, ControlRule rule,
                           std::vector<EvalTrace>* traces = nullptr) {
    if (k < 1) throw ConfigError("evaluate: k must be >= 1");
    EvalReport report;
    report.best_of_k = k;
    report.n = testset.size();
    for (std::size_t i = 0; i < testset.size(); ++i) {
        const auto& traj = testset[i];
        const Path gt = traj.future();
        std::vector<Path> preds = predictor(traj.past(), scene);
        const auto where = "evaluate: trajectory " + std::to_string(i) + " (person " +
                           std::to_string(traj.person_id) + ")";
        if (preds.empty()) throw DataError(where + ": predictor returned no candidates");
        if (preds.size() > static_cast<std::size_t>(k)) preds.resize(k);
        for (const auto& p : preds)
            if (p.size() != gt.size())
                throw DataError(where + ": prediction has " + std::to_string(p.size()) +
                                " steps, expected " + std::to_string(gt.size()));
        TrajectoryMetrics m;
        m.ade = best_of_k(preds, gt, [](const Path& a, const Path& b) { return ade(a, b); });
        m.fde = best_of_k(preds, gt, [](const Path& a, const Path& b) { return fde(a, b); });
        const Path smoothed = smooth_trajectory(gt, rule);
        m.cs_ade = best_of_k(preds, smoothed,
                             [](const Path& a, const Path& b) { return ade(a, b); });
        m.cs_fde = best_of_k(preds, smoothed,
                             [](const Path& a, const Path& b) { return fde(a, b); });
        report.per_trajectory.push_back(m);
        report.aggregate.ade += m.ade;
        report.aggregate.fde += m.fde;
        report.aggregate.cs_ade += m.cs_ade;
        report.aggregate.cs_fde += m.cs_fde;
        if (traces) traces->push_back({traj.person_id, traj.past(), gt, preds.front()});
    }
    if (report.n > 0) {
        const auto inv = 1.0 / static_cast<double>(report.n);
        report.aggregate.ade *= inv;
        report.aggregate.fde *= inv;
        report.aggregate.cs_ade *= inv;
        report.aggregate.cs_fde *= inv;
    }
    return report;
}

namespace detail {

inline std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string fmt_path(const Path& p) {
    std::string s;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) s += ' ';
        s += fmt_real(p[i].x);
        s += ':';
        s += fmt_real(p[i].y);
    }
    return s;
}

inline Path parse_path_cell(const std::string& cell, int line_no) {
    Path p;
    std::istringstream ss(cell);
    std::string pair;
    while (ss >> pair) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos)
            throw FormatError("eval csv line " + std::to_string(line_no) +
                              ": bad point '" + pair + "'");
        try {
            p.push_back({std::stod(pair.substr(0, colon)), std::stod(pair.substr(colon + 1))});
        } catch (const std::exception&) {
            throw FormatError("eval csv line " + std::to_string(line_no) +
                              ": bad point '" + pair + "'");
        }
    }
    return p;
}

}  // namespace detail

/// One CSV row per trajectory plus a final `aggregate` row. The optional
/// polyline columns carry space-separated x:y pairs for plotting.
inline void write_eval_csv(const EvalReport& report, const std::string& path,
                           const std::vector<EvalTrace>* traces = nullptr) {
    if (traces && traces->size() != report.per_trajectory.size())
        throw DataError("write_eval_csv: trace count does not match report");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_eval_csv: cannot open '" + path + "'");
    out << "index,person_id,ade,fde,cs_ade,cs_fde,observed,gt,pred\n";
    using detail::fmt_real;
    for (std::size_t i = 0; i < report.per_trajectory.size(); ++i) {
        const auto& m = report.per_trajectory[i];
        out << i << ',' << (traces ? std::to_string((*traces)[i].person_id) : std::string())
            << ',' << fmt_real(m.ade) << ',' << fmt_real(m.fde) << ',' << fmt_real(m.cs_ade)
            << ',' << fmt_real(m.cs_fde) << ',';
        if (traces) {
            const auto& t = (*traces)[i];
            out << detail::fmt_path(t.observed) << ',' << detail::fmt_path(t.gt) << ','
                << detail::fmt_path(t.pred);
        } else {
            out << ",,";
        }
        out << '\n';
    }
    const auto& a = report.aggregate;
    out << "aggregate,," << fmt_real(a.ade) << ',' << fmt_real(a.fde) << ','
        << fmt_real(a.cs_ade) << ',' << fmt_real(a.cs_fde) << ",,,\n";
    if (!out) throw DataError("write_eval_csv: write failed for '" + path + "'");
}

inline EvalReport read_eval_csv(const std::string& path,
                                std::vector<EvalTrace>* traces = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_eval_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("index,person_id,ade", 0) != 0)
        throw FormatError("read_eval_csv: '" + path + "' missing header");
    EvalReport report;
    bool saw_aggregate = false;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cell;
        std::string cur;
        std::istringstream ss(line);
        while (std::getline(ss, cur, ',')) cell.push_back(cur);
        cell.resize(9);
        TrajectoryMetrics m;
        try {
            m.ade = std::stod(cell[2]);
            m.fde = std::stod(cell[3]);
            m.cs_ade = std::stod(cell[4]);
            m.cs_fde = std::stod(cell[5]);
        } catch (const std::exception&) {
            throw FormatError("read_eval_csv: bad number at line " + std::to_string(line_no));
        }
        if (cell[0] == "aggregate") {
            report.aggregate = m;
            saw_aggregate = true;
            break;
        }
        report.per_trajectory.push_back(m);
        if (traces) {
            EvalTrace t;
            t.person_id = cell[1].empty() ? 0 : std::stoll(cell[1]);
            t.observed = detail::parse_path_cell(cell[6], line_no);
            t.gt = detail::parse_path_cell(cell[7], line_no);
            t.pred = detail::parse_path_cell(cell[8], line_no);
            traces->push_back(std::move(t));
        }
    }
    if (!saw_aggregate) throw FormatError("read_eval_csv: '" + path + "' has no aggregate row");
    report.n = report.per_trajectory.size();
    return report;
}

inline void write_eval_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["n"] = report.n;
    j["best_of_k"] = report.best_of_k;
    j["aggregate"] = {{"ade", report.aggregate.ade},
                      {"fde", report.aggregate.fde},
                      {"cs_ade", report.aggregate.cs_ade},
                      {"cs_fde", report.aggregate.cs_fde}};
    auto rows = nlohmann::json::array();
    for (const auto& m : report.per_trajectory)
        rows.push_back({{"ade", m.ade}, {"fde", m.fde}, {"cs_ade", m.cs_ade},
                        {"cs_fde", m.cs_fde}});
    j["per_trajectory"] = std::move(rows);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_eval_json: cannot open '" + path + "'");
    out << j.dump(2) << "\n";
}

}  // namespace shenet
