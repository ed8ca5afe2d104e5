// shenet: command-line front end for the trajectory bank pipeline.
//
// Verbs: cluster, synth, train, evaluate, predict, bench-search, report.
// Every verb accepts --config <json> plus positional section.key=value
// overrides; --help lists all configuration keys with their defaults.
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shenet/bank.hpp"
#include "shenet/bench.hpp"
#include "shenet/config.hpp"
#include "shenet/metrics.hpp"
#include "shenet/model.hpp"
#include "shenet/pipeline.hpp"
#include "shenet/svg.hpp"
#include "shenet/trajdata.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

shenet::Config resolve_config(const CommonArgs& args) {
    shenet::Config config;
    if (!args.config_path.empty()) config = shenet::load_config(args.config_path);
    for (const auto& o : args.overrides) shenet::apply_override(config, o);
    shenet::validate(config);
    return config;
}

std::string artifact_path(const shenet::Config& config, const char* name) {
    std::filesystem::create_directories(config.eval.out_dir);
    return (std::filesystem::path(config.eval.out_dir) / name).string();
}

void print_aggregate(const shenet::EvalReport& report) {
    std::printf("n=%zu best_of_k=%d ade=%.6g fde=%.6g cs_ade=%.6g cs_fde=%.6g\n",
                report.n, report.best_of_k, report.aggregate.ade, report.aggregate.fde,
                report.aggregate.cs_ade, report.aggregate.cs_fde);
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

int cmd_cluster(const CommonArgs& args) {
    const shenet::Config config = resolve_config(args);
    shenet::Dataset ds = shenet::detail::build_dataset(config);
    const std::vector<shenet::Trajectory> trainset = ds.subset(shenet::Split::kTrain);
    if (trainset.empty()) throw shenet::ConfigError("cluster: empty train split");

    shenet::KMedoidsResult clustering;
    const shenet::TrajectoryBank bank =
        shenet::init_bank(trainset, static_cast<std::size_t>(config.bank.k),
                          config.bank.max_iter, config.bank.seed, &clustering);
    shenet::save_bank(bank, artifact_path(config, "bank.json"));

    std::vector<std::vector<double>> flat;
    flat.reserve(trainset.size());
    for (const auto& traj : trainset) flat.push_back(shenet::flatten(traj.full()));
    std::vector<std::size_t> sizes(clustering.medoids.size(), 0);
    std::vector<double> dist_sums(clustering.medoids.size(), 0.0);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const std::size_t c = clustering.assignment[i];
        sizes[c] += 1;
        dist_sums[c] += euclid(flat[i], flat[clustering.medoids[c]]);
    }
    const std::string csv_path = artifact_path(config, "clusters.csv");
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw shenet::DataError("cluster: cannot open '" + csv_path + "'");
    csv << "cluster,size,mean_distance\n";
    char buf[96];
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        const double mean = sizes[c] ? dist_sums[c] / static_cast<double>(sizes[c]) : 0.0;
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.12g\n", c, sizes[c], mean);
        csv << buf;
    }
    std::printf("K=%d entries=%zu cost=%.12g\n", config.bank.k, bank.entries.size(),
                clustering.cost);
    return 0;
}

int cmd_synth(const CommonArgs& args) {
    const shenet::Config config = resolve_config(args);
    shenet::Dataset ds = shenet::generate_synthetic_scene(
        config.data.n_groups, config.data.per_group, config.data.noise_sigma,
        config.data.seed, config.data.t_pas, config.data.t_fut, config.data.n_cls,
        config.data.grid_h, config.data.grid_w);
    const std::string traj_path = artifact_path(config, "trajectories.txt");
    shenet::dump_trajectory_file(ds, traj_path);
    const std::string raster_path = artifact_path(config, "raster.json");
    shenet::save_raster(ds.scene, raster_path);
    std::printf("trajectories=%zu raster=%dx%dx%d wrote %s and %s\n",
                ds.trajectories.size(), ds.scene.n_cls, ds.scene.h, ds.scene.w,
                traj_path.c_str(), raster_path.c_str());
    return 0;
}

int cmd_train(const CommonArgs& args) {
    shenet::Config config = resolve_config(args);
    config.eval.predictor = "model";
    const shenet::ExperimentResult result = shenet::run_experiment(config);
    std::printf("epochs=%d steps=%lld theta=%.6g bank=%zu additions=%lld merges=%lld\n",
                result.train_state.epochs_run,
                static_cast<long long>(result.train_state.steps), result.theta_used,
                result.bank_size, static_cast<long long>(result.train_state.bank_additions),
                static_cast<long long>(result.train_state.bank_merges));
    print_aggregate(result.report);
    std::printf("artifacts in %s\n", result.out_dir.c_str());
    return 0;
}

int cmd_evaluate(const CommonArgs& args) {
    const shenet::Config config = resolve_config(args);
    const shenet::ExperimentResult result = shenet::run_experiment(config);
    std::printf("predictor=%s\n", config.eval.predictor.c_str());
    print_aggregate(result.report);
    std::printf("artifacts in %s\n", result.out_dir.c_str());
    return 0;
}

int cmd_predict(const CommonArgs& args, std::string bank_path, std::string ckpt_path,
                std::string input_path, std::string out_path) {
    const shenet::Config config = resolve_config(args);
    if (bank_path.empty()) bank_path = artifact_path(config, "bank.json");
    if (ckpt_path.empty()) ckpt_path = artifact_path(config, "checkpoint.json");
    if (out_path.empty()) out_path = artifact_path(config, "predictions.csv");

    shenet::ShenetModel model;
    model.bank = shenet::load_bank(bank_path);
    shenet::freeze(model.bank);
    auto [params, mcfg] = shenet::load_checkpoint(ckpt_path);
    model.params = std::move(params);
    model.mcfg = mcfg;
    model.translate_origin = config.bank.translate_origin;

    shenet::Dataset input;
    if (!input_path.empty() || config.data.source == "file") {
        const std::string path = input_path.empty() ? config.data.path : input_path;
        if (path.empty())
            throw shenet::ConfigError("predict: no input file (--input or data.path)");
        input = shenet::load_trajectory_file(path, model.bank.t_pas, model.bank.t_fut,
                                             config.data.stride);
        if (!config.data.raster_path.empty())
            input.scene = shenet::load_raster(config.data.raster_path);
        else {
            input.scene.n_cls = mcfg.n_cls;
            input.scene.h = mcfg.grid_h;
            input.scene.w = mcfg.grid_w;
            input.scene.grid.assign(
                static_cast<std::size_t>(mcfg.n_cls * mcfg.grid_h * mcfg.grid_w), 1.0);
        }
    } else {
        input = shenet::detail::build_dataset(config);
    }

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw shenet::DataError("predict: cannot open '" + out_path + "'");
    out << "index,person_id,candidate,score,pred\n";
    char buf[64];
    for (std::size_t i = 0; i < input.trajectories.size(); ++i) {
        const auto& traj = input.trajectories[i];
        const auto hits = shenet::topk_search(model.bank, traj.past(),
                                              static_cast<std::size_t>(config.eval.top_k),
                                              model.translate_origin);
        const shenet::Path offsets = shenet::to_path(
            shenet::forward_offsets(model.params, model.mcfg, traj.past(), input.scene));
        for (std::size_t c = 0; c < hits.size(); ++c) {
            shenet::Path pred = hits[c].candidate_future;
            for (std::size_t t = 0; t < pred.size(); ++t) pred[t] = pred[t] + offsets[t];
            std::snprintf(buf, sizeof(buf), "%zu,%lld,%zu,%.12g,", i,
                          static_cast<long long>(traj.person_id), c, hits[c].score);
            out << buf;
            for (std::size_t t = 0; t < pred.size(); ++t) {
                if (t) out << ' ';
                char pt[64];
                std::snprintf(pt, sizeof(pt), "%.12g:%.12g", pred[t].x, pred[t].y);
                out << pt;
            }
            out << '\n';
        }
    }
    std::printf("predicted %zu trajectories, top_k=%d, wrote %s\n",
                input.trajectories.size(), config.eval.top_k, out_path.c_str());
    return 0;
}

int cmd_bench_search(const CommonArgs& args, std::string out_path) {
    const shenet::Config config = resolve_config(args);
    if (out_path.empty()) out_path = artifact_path(config, "bench.csv");
    const shenet::BenchResult result =
        shenet::bench_search({100, 1000, 10000}, 1000, config.data.t_pas,
                             config.data.t_fut, config.bank.seed);
    for (const auto& p : result.points)
        std::printf("size=%zu search_mean_ns=%.0f update_mean_ns=%.0f\n", p.size,
                    p.search_mean_ns, p.update_mean_ns);
    std::printf("linear_fit_r2=%.6f update_ratio=%.3f\n", result.search_fit_r2,
                result.update_ratio);
    shenet::write_bench_csv(result, out_path);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_report(const std::string& eval_csv, const std::string& out_svg, int samples) {
    std::vector<shenet::EvalTrace> traces;
    const shenet::EvalReport report = shenet::read_eval_csv(eval_csv, &traces);
    if (samples >= 0 && traces.size() > static_cast<std::size_t>(samples))
        traces.resize(static_cast<std::size_t>(samples));
    shenet::write_report_svg(report, traces, out_svg);
    std::printf("wrote %s (%zu trajectories)\n", out_svg.c_str(), traces.size());
    return 0;
}

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "JSON configuration file")
        ->check(CLI::ExistingFile);
    sub->add_option("overrides", args.overrides,
                    "section.key=value pairs applied after the config file");
    sub->footer("Configuration keys:\n" + shenet::config_help());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group trajectory bank pipeline: cluster, train, predict, evaluate"};
    app.require_subcommand(1);
    app.footer("Configuration keys:\n" + shenet::config_help());

    CommonArgs cluster_args, synth_args, train_args, eval_args, predict_args, bench_args;
    std::string predict_bank, predict_ckpt, predict_input, predict_out;
    std::string bench_out;
    std::string report_csv, report_svg;
    int report_samples = -1;

    CLI::App* cluster = app.add_subcommand("cluster", "Build the trajectory bank");
    add_common(cluster, cluster_args);

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    add_common(synth, synth_args);

    CLI::App* train = app.add_subcommand("train", "Train the offset network end to end");
    add_common(train, train_args);

    CLI::App* evaluate = app.add_subcommand("evaluate", "Run the configured predictor");
    add_common(evaluate, eval_args);

    CLI::App* predict = app.add_subcommand("predict", "Predict futures for a file");
    add_common(predict, predict_args);
    predict->add_option("--bank", predict_bank, "bank JSON (default <out_dir>/bank.json)");
    predict->add_option("--checkpoint", predict_ckpt,
                        "checkpoint JSON (default <out_dir>/checkpoint.json)");
    predict->add_option("--input", predict_input, "trajectory text file to predict from");
    predict->add_option("--out", predict_out,
                        "predictions CSV (default <out_dir>/predictions.csv)");

    CLI::App* bench = app.add_subcommand("bench-search", "Time search and update");
    add_common(bench, bench_args);
    bench->add_option("--out", bench_out, "timing CSV (default <out_dir>/bench.csv)");

    CLI::App* report = app.add_subcommand("report", "Render an evaluation CSV as SVG");
    report->add_option("eval_csv", report_csv, "CSV written by evaluate")
        ->required()
        ->check(CLI::ExistingFile);
    report->add_option("out_svg", report_svg, "output SVG path")->required();
    report->add_option("--samples", report_samples,
                       "trajectories to draw (default: all in the CSV)");
    report->footer("Configuration keys:\n" + shenet::config_help());

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(cluster)) return cmd_cluster(cluster_args);
        if (app.got_subcommand(synth)) return cmd_synth(synth_args);
        if (app.got_subcommand(train)) return cmd_train(train_args);
        if (app.got_subcommand(evaluate)) return cmd_evaluate(eval_args);
        if (app.got_subcommand(predict))
            return cmd_predict(predict_args, predict_bank, predict_ckpt, predict_input,
                               predict_out);
        if (app.got_subcommand(bench))
            return cmd_bench_search(bench_args, bench_out);
        if (app.got_subcommand(report))
            return cmd_report(report_csv, report_svg, report_samples);
    } catch (const shenet::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const shenet::StateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const shenet::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const shenet::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const shenet::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const shenet::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
