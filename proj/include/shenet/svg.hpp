#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "shenet/errors.hpp"
#include "shenet/metrics.hpp"
#include "shenet/types.hpp"

namespace shenet {

namespace detail {

inline std::string svg_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

struct PlotBox {
    double x0, y0, width, height;   // pixel area
    double min_x, min_y, span_x, span_y;  // data window

    [[nodiscard]] double px(double x) const {
        return x0 + (x - min_x) / span_x * width;
    }
    [[nodiscard]] double py(double y) const {
        // SVG y grows downward; data y grows upward.
        return y0 + height - (y - min_y) / span_y * height;
    }
};

inline void svg_polyline(std::string& out, const PlotBox& box, const Path& path,
                         const char* color) {
    if (path.empty()) return;
    out += "  <polyline fill=\"none\" stroke=\"";
    out += color;
    out += "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += ' ';
        out += svg_num(box.px(path[i].x)) + "," + svg_num(box.py(path[i].y));
    }
    out += "\"/>\n";
    // Mark the start so direction is readable.
    out += "  <circle cx=\"" + svg_num(box.px(path[0].x)) + "\" cy=\"" +
           svg_num(box.py(path[0].y)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
}

}  // namespace detail

/// Writes a self-contained SVG: sampled trajectories on the left (observed
/// blue, prediction red, ground truth green) and aggregate metric bars on the
/// right. Output bytes depend only on the inputs.
inline void write_report_svg(const EvalReport& report, const std::vector<EvalTrace>& traces,
                             const std::string& path, const std::string& units = "units") {
    const double width = 960, height = 560;
    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           detail::svg_num(width) + "\" height=\"" + detail::svg_num(height) +
           "\" viewBox=\"0 0 " + detail::svg_num(width) + " " + detail::svg_num(height) +
           "\">\n";
    out += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "  <text x=\"24\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\">"
           "Trajectories (observed: blue, prediction: red, ground truth: green)</text>\n";

    detail::PlotBox box{48, 48, 540, 460, 0, 0, 1, 1};
    double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
    double min_y = min_x, max_y = -min_x;
    for (const auto& t : traces)
        for (const Path* p : {&t.observed, &t.gt, &t.pred})
            for (const auto& q : *p) {
                min_x = std::min(min_x, q.x);
                max_x = std::max(max_x, q.x);
                min_y = std::min(min_y, q.y);
                max_y = std::max(max_y, q.y);
            }
    if (traces.empty() || !(max_x > -std::numeric_limits<double>::infinity())) {
        min_x = min_y = 0;
        max_x = max_y = 1;
    }
    const double pad_x = std::max(1e-9, (max_x - min_x) * 0.05 + 1e-9);
    const double pad_y = std::max(1e-9, (max_y - min_y) * 0.05 + 1e-9);
    box.min_x = min_x - pad_x;
    box.min_y = min_y - pad_y;
    box.span_x = (max_x - min_x) + 2 * pad_x;
    box.span_y = (max_y - min_y) + 2 * pad_y;

    out += "  <rect x=\"" + detail::svg_num(box.x0) + "\" y=\"" + detail::svg_num(box.y0) +
           "\" width=\"" + detail::svg_num(box.width) + "\" height=\"" +
           detail::svg_num(box.height) + "\" fill=\"none\" stroke=\"#888\"/>\n";
    out += "  <text x=\"" + detail::svg_num(box.x0) + "\" y=\"" +
           detail::svg_num(box.y0 + box.height + 20) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">x (" + units +
           "), window [" + detail::svg_num(box.min_x) + ", " +
           detail::svg_num(box.min_x + box.span_x) + "] / y [" + detail::svg_num(box.min_y) +
           ", " + detail::svg_num(box.min_y + box.span_y) + "]</text>\n";

    for (const auto& t : traces) {
        detail::svg_polyline(out, box, t.observed, "#1f77b4");
        detail::svg_polyline(out, box, t.gt, "#2ca02c");
        detail::svg_polyline(out, box, t.pred, "#d62728");
    }

    // Aggregate metric bars.
    const double bar_x0 = 660, bar_y0 = 48, bar_w = 60, bar_gap = 12, bar_area_h = 380;
    const char* names[4] = {"ADE", "FDE", "CS-ADE", "CS-FDE"};
    const double values[4] = {report.aggregate.ade, report.aggregate.fde,
                              report.aggregate.cs_ade, report.aggregate.cs_fde};
    double vmax = 0;
    for (double v : values) vmax = std::max(vmax, v);
    if (!(vmax > 0)) vmax = 1;
    out += "  <text x=\"" + detail::svg_num(bar_x0) +
           "\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\">Aggregate over " +
           std::to_string(report.n) + " trajectories (best of " +
           std::to_string(report.best_of_k) + ")</text>\n";
    out += "  <line x1=\"" + detail::svg_num(bar_x0 - 8) + "\" y1=\"" +
           detail::svg_num(bar_y0 + bar_area_h) + "\" x2=\"" +
           detail::svg_num(bar_x0 + 4 * (bar_w + bar_gap)) + "\" y2=\"" +
           detail::svg_num(bar_y0 + bar_area_h) + "\" stroke=\"#888\"/>\n";
    for (int i = 0; i < 4; ++i) {
        const double h = values[i] / vmax * (bar_area_h - 30);
        const double x = bar_x0 + i * (bar_w + bar_gap);
        const double y = bar_y0 + bar_area_h - h;
        out += "  <rect x=\"" + detail::svg_num(x) + "\" y=\"" + detail::svg_num(y) +
               "\" width=\"" + detail::svg_num(bar_w) + "\" height=\"" + detail::svg_num(h) +
               "\" fill=\"#4c72b0\"/>\n";
        out += "  <text x=\"" + detail::svg_num(x + bar_w / 2) + "\" y=\"" +
               detail::svg_num(y - 6) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
               detail::svg_num(values[i]) + "</text>\n";
        out += "  <text x=\"" + detail::svg_num(x + bar_w / 2) + "\" y=\"" +
               detail::svg_num(bar_y0 + bar_area_h + 16) +
               "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
               names[i] + "</text>\n";
    }
    out += "</svg>\n";

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_report_svg: cannot open '" + path + "'");
    f << out;
    if (!f) throw DataError("write_report_svg: write failed for '" + path + "'");
}

}  // namespace shenet
