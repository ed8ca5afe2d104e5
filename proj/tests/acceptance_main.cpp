// Acceptance checks for the trajectory bank pipeline. Each numbered check
// prints one [PASS]/[FAIL] line with its measured numbers; the process exits
// nonzero if any check fails.

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "shenet/bench.hpp"
#include "shenet/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Failure {
    std::string detail;
};

void expect(bool ok, const std::string& detail) {
    if (!ok) throw Failure{detail};
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return buf;
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

shenet::Path random_path(std::size_t n, std::mt19937_64& rng, double spread = 10.0) {
    std::uniform_real_distribution<double> start(-spread, spread);
    std::normal_distribution<double> step(0.0, 1.0);
    shenet::Path p(n);
    p[0] = {start(rng), start(rng)};
    for (std::size_t i = 1; i < n; ++i)
        p[i] = p[i - 1] + shenet::Vec2{step(rng), step(rng)};
    return p;
}

shenet::Trajectory random_trajectory(int t_pas, int t_fut, std::mt19937_64& rng) {
    shenet::Trajectory traj;
    traj.t_pas = t_pas;
    traj.t_fut = t_fut;
    const shenet::Path p = random_path(static_cast<std::size_t>(t_pas + t_fut), rng);
    for (std::size_t i = 0; i < p.size(); ++i)
        traj.points.push_back({static_cast<std::int64_t>(i), p[i].x, p[i].y});
    return traj;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    expect(in.good(), "cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path out_root() {
    static const fs::path root = [] {
        const fs::path r = fs::temp_directory_path() / "shenet_acceptance";
        fs::remove_all(r);
        fs::create_directories(r);
        return r;
    }();
    return root;
}

// ---- 1: clustering against the exhaustive two-medoid optimum -------------------

std::string check_clustering() {
    std::mt19937_64 rng(101);
    std::vector<std::vector<double>> points;
    std::uniform_real_distribution<double> coord(-10.0, 10.0);
    for (int i = 0; i < 10; ++i) {
        std::vector<double> p(16);
        for (auto& v : p) v = coord(rng);
        points.push_back(std::move(p));
    }

    const auto t0 = Clock::now();
    const shenet::KMedoidsResult result = shenet::kmedoids(points, 2, 100, 7);
    const double elapsed = seconds_since(t0);

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            double cost = 0;
            for (const auto& p : points)
                cost += std::min(euclid(p, points[i]), euclid(p, points[j]));
            best = std::min(best, cost);
        }

    expect(std::abs(result.cost - best) <= 1e-9,
           fmt("cost %.12g differs from exhaustive optimum %.12g", result.cost, best));
    expect(elapsed < 1.0, fmt("took %.2fs, limit 1s", elapsed));
    return fmt("cost diff %.3g, %.0f ms", std::abs(result.cost - best), elapsed * 1e3);
}

// ---- 2: retrieval against a brute-force cosine loop -----------------------------

std::string check_retrieval() {
    std::mt19937_64 rng(202);
    std::vector<shenet::Trajectory> trajs;
    for (int i = 0; i < 32; ++i) trajs.push_back(random_trajectory(8, 12, rng));
    shenet::TrajectoryBank bank = shenet::init_bank(trajs, 32, 100, 9);
    shenet::freeze(bank);
    expect(bank.entries.size() == 32, "expected a 32-entry bank");

    auto cosine = [](const shenet::Path& a, const shenet::Path& b) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i].x * b[i].x + a[i].y * b[i].y;
            na += a[i].x * a[i].x + a[i].y * a[i].y;
            nb += b[i].x * b[i].x + b[i].y * b[i].y;
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    double max_self_err = 0;
    for (const auto& entry : bank.entries) {
        const shenet::SearchResult hit = shenet::search(bank, entry.past, false);
        max_self_err = std::max(max_self_err, std::abs(hit.score - 1.0));
    }
    expect(max_self_err <= 1e-9,
           fmt("self-query score off by %.3g, limit 1e-9", max_self_err));

    double max_score_err = 0;
    for (int q = 0; q < 1000; ++q) {
        const shenet::Path query = random_path(8, rng);
        std::size_t best_i = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < bank.entries.size(); ++i) {
            const double s = cosine(query, bank.entries[i].past);
            if (s > best_score) {
                best_score = s;
                best_i = i;
            }
        }
        const shenet::SearchResult hit = shenet::search(bank, query, false);
        expect(hit.index == best_i,
               fmt("query %d: argmax %zu, brute force %zu", q, hit.index, best_i));
        max_score_err = std::max(max_score_err, std::abs(hit.score - best_score));
    }
    expect(max_score_err <= 1e-12,
           fmt("score error %.3g, limit 1e-12", max_score_err));
    return fmt("1000 queries, max score err %.2g, max self err %.2g", max_score_err,
               max_self_err);
}

// ---- 3: reverse-mode gradients against central differences ----------------------

std::string check_gradients() {
    const auto t0 = Clock::now();
    shenet::ModelConfig cfg;  // full desk-scale graph
    cfg.d_model = 32;
    cfg.n_heads = 4;
    cfg.n_tra = 2;
    cfg.n_cro = 2;
    cfg.t_pas = 8;
    cfg.t_fut = 12;
    cfg.n_cls = 8;
    cfg.grid_h = 16;
    cfg.grid_w = 16;

    shenet::ShenetParams params = shenet::init_params(cfg, 303);
    std::mt19937_64 rng(304);
    std::uniform_real_distribution<double> small(-0.2, 0.2);
    // The output layer starts at zero, which would zero most upstream
    // gradients; give it real values so every path is exercised.
    for (auto& v : params.head_out.w->data) v = small(rng);
    for (auto& v : params.head_out.b->data) v = small(rng);

    const shenet::Path past = random_path(8, rng, 5.0);
    shenet::SceneRaster raster;
    raster.n_cls = 8;
    raster.h = 16;
    raster.w = 16;
    raster.grid.resize(8 * 16 * 16);
    std::uniform_real_distribution<double> cell(0.0, 1.0);
    for (auto& v : raster.grid) v = cell(rng);
    const shenet::Path gt = random_path(12, rng, 5.0);

    auto loss = [&] {
        return shenet::nn::loss_tra(shenet::forward_offsets(params, cfg, past, raster),
                                    gt);
    };
    const std::vector<shenet::ag::NodePtr> all = shenet::all_params(params);
    shenet::ag::zero_grad(all);
    shenet::ag::backward(loss());

    std::vector<std::pair<shenet::ag::NodePtr, std::size_t>> coords;
    for (const auto& p : all)
        for (std::size_t i = 0; i < p->data.size(); ++i) coords.emplace_back(p, i);
    std::shuffle(coords.begin(), coords.end(), rng);

    const double eps = 1e-5;
    double max_rel = 0;
    for (int s = 0; s < 100; ++s) {
        auto& [param, i] = coords[s];
        const double keep = param->data[i];
        param->data[i] = keep + eps;
        const double up = loss()->data[0];
        param->data[i] = keep - eps;
        const double down = loss()->data[0];
        param->data[i] = keep;
        const double fd = (up - down) / (2.0 * eps);
        const double an = param->grad[i];
        const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
        max_rel = std::max(max_rel, rel);
    }
    const double elapsed = seconds_since(t0);
    expect(max_rel < 1e-4, fmt("max relative error %.3g, limit 1e-4", max_rel));
    expect(elapsed < 60.0, fmt("took %.1fs, limit 60s", elapsed));
    return fmt("100 coords, max rel err %.2g, %.1fs", max_rel, elapsed);
}

// ---- 4: smoothing invariants -----------------------------------------------------

bool in_triangle(shenet::Vec2 p, shenet::Vec2 a, shenet::Vec2 b, shenet::Vec2 c,
                 double tol) {
    const double d = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
    if (std::abs(d) < 1e-12) {
        // Degenerate triangle: accept points near any edge segment.
        auto near_segment = [&](shenet::Vec2 s, shenet::Vec2 e) {
            const shenet::Vec2 se = e - s;
            const double len2 = se.x * se.x + se.y * se.y;
            double t = len2 > 0 ? ((p.x - s.x) * se.x + (p.y - s.y) * se.y) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            return (p - (s + t * se)).norm() <= 1e-7;
        };
        return near_segment(a, b) || near_segment(b, c) || near_segment(a, c);
    }
    const double l1 = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / d;
    const double l2 = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / d;
    const double l3 = 1.0 - l1 - l2;
    return l1 >= -tol && l2 >= -tol && l3 >= -tol;
}

std::string check_smoothing() {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> length(5, 14);
    std::uniform_real_distribution<double> angle(0.0, 6.28318530717958647692);
    std::uniform_real_distribution<double> scale(0.5, 2.0);
    std::uniform_real_distribution<double> shift(-20.0, 20.0);
    const std::vector<shenet::ControlRule> rules = {
        shenet::ControlRule::mid(), shenet::ControlRule::lsq(),
        shenet::ControlRule::chord(0.3)};

    double max_equiv_err = 0;
    for (int it = 0; it < 100; ++it) {
        const shenet::Path raw = random_path(static_cast<std::size_t>(length(rng)), rng);
        const double th = angle(rng), s = scale(rng);
        const shenet::Vec2 t{shift(rng), shift(rng)};
        auto affine = [&](shenet::Vec2 p) {
            return shenet::Vec2{s * (std::cos(th) * p.x - std::sin(th) * p.y) + t.x,
                                s * (std::sin(th) * p.x + std::cos(th) * p.y) + t.y};
        };
        shenet::Path mapped(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) mapped[i] = affine(raw[i]);

        for (const auto& rule : rules) {
            const shenet::Path smooth = shenet::smooth_trajectory(raw, rule);
            expect(smooth.front() == raw.front() && smooth.back() == raw.back(),
                   fmt("case %d: endpoints moved", it));

            const shenet::Path smooth_mapped = shenet::smooth_trajectory(mapped, rule);
            for (std::size_t i = 0; i < raw.size(); ++i) {
                const shenet::Vec2 expected = affine(smooth[i]);
                max_equiv_err = std::max(max_equiv_err,
                                         (smooth_mapped[i] - expected).norm());
            }
        }

        for (const auto& rule : {shenet::ControlRule::mid(), shenet::ControlRule::lsq()}) {
            const shenet::BezierSpec spec = shenet::make_bezier_spec(raw, rule);
            for (const auto& p : shenet::smooth_trajectory(raw, rule))
                expect(in_triangle(p, spec.start, spec.control, spec.end, 1e-9),
                       fmt("case %d: smoothed point outside control triangle", it));
        }
    }
    expect(max_equiv_err <= 1e-9,
           fmt("affine equivariance error %.3g, limit 1e-9", max_equiv_err));
    return fmt("100 trajectories, 3 rules, max equivariance err %.2g", max_equiv_err);
}

// ---- 5: metric hand cases --------------------------------------------------------

std::string check_metric_hand_cases() {
    // Integer coordinates keep the offset arithmetic exact, so the expected
    // constants hold bitwise.
    std::mt19937_64 rng(505);
    std::uniform_int_distribution<int> step(-3, 3);
    shenet::Path gt(12);
    gt[0] = {2.0, 7.0};
    for (std::size_t i = 1; i < gt.size(); ++i)
        gt[i] = gt[i - 1] + shenet::Vec2{static_cast<double>(step(rng)),
                                         static_cast<double>(step(rng))};
    shenet::Path pred = gt;
    for (auto& p : pred) p = p + shenet::Vec2{3.0, 4.0};

    const double a = shenet::ade(pred, gt);
    expect(a == 5.0, fmt("ADE %.17g, expected exactly 5", a));
    const double lt = shenet::nn::loss_tra(shenet::nn::path_constant(pred), gt)->data[0];
    expect(lt == 25.0, fmt("L_tra %.17g, expected exactly 25", lt));

    const auto rule = shenet::ControlRule::mid();
    const shenet::Path zig = random_path(9, rng);
    const shenet::Path smoothed = shenet::smooth_trajectory(zig, rule);
    const double cs_a = shenet::cs_ade(smoothed, zig, rule);
    const double cs_f = shenet::cs_fde(smoothed, zig, rule);
    expect(cs_a == 0.0 && cs_f == 0.0,
           fmt("CS-ADE %.3g CS-FDE %.3g, expected exactly 0", cs_a, cs_f));
    return "offset (3,4) gives ADE 5 and L_tra 25; smoothed GT scores 0";
}

// ---- 6-8: the synthetic experiment ----------------------------------------------

shenet::Config synthetic_config(const std::string& subdir) {
    shenet::Config config;  // 3 groups x 200, sigma 0.05, 500/100 split, fixed seeds
    config.eval.out_dir = (out_root() / subdir).string();
    return config;
}

struct Experiments {
    std::optional<shenet::ExperimentResult> cv, raw, model;
    std::optional<shenet::ExperimentResult> theta025, theta100;
    std::optional<shenet::ExperimentResult> k24, k28, k36;
    double c6_seconds{0};

    void ensure_baselines() {
        if (cv && raw && model) return;
        const auto t0 = Clock::now();
        shenet::Config config = synthetic_config("cv");
        config.eval.predictor = "constant_velocity";
        std::fprintf(stderr, "  [experiment] constant velocity baseline\n");
        cv = shenet::run_experiment(config);

        config = synthetic_config("raw");
        config.eval.predictor = "raw_retrieval";
        std::fprintf(stderr, "  [experiment] raw retrieval baseline\n");
        raw = shenet::run_experiment(config);

        config = synthetic_config("model");
        std::fprintf(stderr, "  [experiment] trained model (theta auto)\n");
        model = shenet::run_experiment(config);
        c6_seconds = seconds_since(t0);
    }

    double converged_error() {
        ensure_baselines();
        // theta_used = theta_fraction * converged probe error.
        return model->theta_used / shenet::Config{}.bank.theta_fraction;
    }

    void ensure_theta_sweep() {
        if (theta025 && theta100) return;
        ensure_baselines();  // the 0.75x point
        for (const auto& [fraction, slot, name] :
             {std::tuple<double, std::optional<shenet::ExperimentResult>*, const char*>{
                  0.25, &theta025, "theta025"},
              {1.0, &theta100, "theta100"}}) {
            shenet::Config config = synthetic_config(name);
            config.bank.theta_fraction = fraction;
            std::fprintf(stderr, "  [experiment] theta = %.2f x converged error\n",
                         fraction);
            *slot = shenet::run_experiment(config);
        }
    }

    void ensure_k_sweep() {
        if (k24 && k28 && k36) return;
        ensure_baselines();  // the K=32 point
        for (const auto& [k, slot, name] :
             {std::tuple<int, std::optional<shenet::ExperimentResult>*, const char*>{
                  24, &k24, "k24"},
              {28, &k28, "k28"},
              {36, &k36, "k36"}}) {
            shenet::Config config = synthetic_config(name);
            config.bank.k = k;
            std::fprintf(stderr, "  [experiment] K = %d\n", k);
            *slot = shenet::run_experiment(config);
        }
    }
};

std::string check_end_to_end(Experiments& ex) {
    ex.ensure_baselines();
    const double cv_fde = ex.cv->report.aggregate.fde;
    const double raw_fde = ex.raw->report.aggregate.fde;
    const double raw_ade = ex.raw->report.aggregate.ade;
    const double model_ade = ex.model->report.aggregate.ade;

    expect(ex.cv->report.n == 100, fmt("test split has %zu, expected 100",
                                       ex.cv->report.n));
    expect(raw_fde <= 0.5 * cv_fde,
           fmt("raw retrieval FDE %.4g vs constant velocity %.4g: above 50%%", raw_fde,
               cv_fde));
    expect(model_ade <= raw_ade,
           fmt("trained ADE %.4g above raw retrieval %.4g", model_ade, raw_ade));
    expect(ex.c6_seconds < 300.0, fmt("took %.0fs, limit 300s", ex.c6_seconds));
    const double improvement = 100.0 * (raw_ade - model_ade) / raw_ade;
    return fmt("FDE %.3g vs CV %.3g (%.0f%%), ADE %.3g vs raw %.3g (%.1f%% better, "
               "target 10%%), %.0fs",
               raw_fde, cv_fde, 100.0 * raw_fde / cv_fde, model_ade, raw_ade,
               improvement, ex.c6_seconds);
}

std::string check_theta_sweep(Experiments& ex) {
    ex.ensure_theta_sweep();
    const double mid = ex.model->report.aggregate.ade;
    const double low = ex.theta025->report.aggregate.ade;
    const double high = ex.theta100->report.aggregate.ade;
    expect(mid <= low, fmt("ADE at 0.75x (%.4g) above 0.25x (%.4g)", mid, low));
    expect(mid <= high, fmt("ADE at 0.75x (%.4g) above 1.0x (%.4g)", mid, high));
    return fmt("ADE 0.25x %.4g / 0.75x %.4g / 1.0x %.4g", low, mid, high);
}

std::string check_k_sweep(Experiments& ex) {
    ex.ensure_k_sweep();
    const double a24 = ex.k24->report.aggregate.ade;
    const double a28 = ex.k28->report.aggregate.ade;
    const double a32 = ex.model->report.aggregate.ade;
    const double a36 = ex.k36->report.aggregate.ade;
    const double lo = std::min(std::min(a24, a28), std::min(a32, a36));
    const double hi = std::max(std::max(a24, a28), std::max(a32, a36));
    const double spread = (hi - lo) / lo;
    expect(spread < 0.10, fmt("ADE spread %.1f%% across K, limit 10%%", spread * 100));
    return fmt("ADE %.4g/%.4g/%.4g/%.4g for K=24/28/32/36, spread %.1f%%", a24, a28,
               a32, a36, spread * 100);
}

// ---- 9: search and update complexity --------------------------------------------

std::string check_complexity() {
    const shenet::BenchResult result = shenet::bench_search({100, 1000, 10000}, 1000);
    expect(result.search_fit_r2 > 0.9,
           fmt("linear fit R^2 %.4f, limit 0.9", result.search_fit_r2));
    expect(result.update_ratio >= 0.5 && result.update_ratio <= 2.0,
           fmt("update time ratio %.2f outside [0.5, 2.0]", result.update_ratio));
    return fmt("R^2 %.4f, update ratio %.2f", result.search_fit_r2,
               result.update_ratio);
}

// ---- 10: byte-identical reruns ---------------------------------------------------

std::string check_determinism() {
    shenet::Config config;
    config.data.per_group = 50;
    config.train.epochs = 3;
    config.eval.out_dir = (out_root() / "determinism").string();

    shenet::run_experiment(config);
    const std::string csv_first = slurp(fs::path(config.eval.out_dir) / "eval.csv");
    const std::string svg_first = slurp(fs::path(config.eval.out_dir) / "report.svg");

    shenet::run_experiment(config);
    const std::string csv_second = slurp(fs::path(config.eval.out_dir) / "eval.csv");
    const std::string svg_second = slurp(fs::path(config.eval.out_dir) / "report.svg");

    expect(csv_first == csv_second, "eval.csv differs between identical runs");
    expect(svg_first == svg_second, "report.svg differs between identical runs");
    return fmt("eval.csv (%zu bytes) and report.svg (%zu bytes) byte-identical",
               csv_first.size(), svg_first.size());
}

}  // namespace

int main() {
    Experiments ex;
    int failed = 0;

    auto run = [&](int id, const char* name, const std::function<std::string()>& fn) {
        const auto t0 = Clock::now();
        try {
            const std::string detail = fn();
            std::printf("[PASS] %2d %s: %s (%.1fs)\n", id, name, detail.c_str(),
                        seconds_since(t0));
        } catch (const Failure& f) {
            ++failed;
            std::printf("[FAIL] %2d %s: %s\n", id, name, f.detail.c_str());
        } catch (const std::exception& e) {
            ++failed;
            std::printf("[FAIL] %2d %s: unexpected error: %s\n", id, name, e.what());
        }
        std::fflush(stdout);
    };

    run(1, "clustering equals the exhaustive optimum", check_clustering);
    run(2, "retrieval matches brute-force cosine", check_retrieval);
    run(3, "gradients match finite differences", check_gradients);
    run(4, "smoothing invariants hold", check_smoothing);
    run(5, "metric hand cases are exact", check_metric_hand_cases);
    run(6, "synthetic end-to-end beats its baselines",
        [&] { return check_end_to_end(ex); });
    run(7, "theta sweep bottoms out at 0.75x", [&] { return check_theta_sweep(ex); });
    run(8, "ADE is insensitive to K", [&] { return check_k_sweep(ex); });
    run(9, "search scales linearly, update stays flat", check_complexity);
    run(10, "identical configs give identical bytes", check_determinism);

    if (failed) {
        std::printf("%d of 10 checks failed\n", failed);
        return 1;
    }
    std::printf("all 10 checks passed\n");
    return 0;
}
