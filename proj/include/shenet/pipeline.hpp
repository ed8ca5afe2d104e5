#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "shenet/bank.hpp"
#include "shenet/config.hpp"
#include "shenet/metrics.hpp"
#include "shenet/model.hpp"
#include "shenet/svg.hpp"
#include "shenet/trajdata.hpp"
#include "shenet/types.hpp"

namespace shenet {

/// Bank + network + the knobs both share.
struct ShenetModel {
    TrajectoryBank bank;
    ShenetParams params;
    ModelConfig mcfg;
    std::string loss{"mse"};  // mse | cs
    ControlRule cs_rule{ControlRule::mid()};
    int k_recluster{1};
    bool translate_origin{false};
};

/// Retrieves the k best bank candidates and adds the network offsets to each.
/// Candidates keep their retrieval-score order.
inline std::vector<Path> predict(const ShenetModel& model, const Path& past,
                                 const SceneRaster& raster, int k) {
    if (!model.bank.frozen)
        throw StateError("predict: bank must be frozen for inference");
    const auto candidates = topk_search(model.bank, past, static_cast<std::size_t>(k),
                                        model.translate_origin);
    const Path offsets =
        to_path(forward_offsets(model.params, model.mcfg, past, raster));
    std::vector<Path> preds;
    preds.reserve(candidates.size());
    for (const auto& c : candidates) {
        Path p = c.candidate_future;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = p[i] + offsets[i];
        preds.push_back(std::move(p));
    }
    return preds;
}

struct TrainState {
    int epochs_run{0};
    std::int64_t steps{0};
    std::vector<double> epoch_mean_loss;
    std::int64_t bank_additions{0};
    std::int64_t bank_merges{0};
    std::optional<double> converged_train_error;
};

namespace detail {

/// Mean ADE of top-1 retrieval + offsets over a set, without touching the bank.
inline double mean_train_ade(const ShenetModel& model, const std::vector<Trajectory>& set,
                             const SceneRaster& scene) {
    double sum = 0.0;
    for (const auto& traj : set) {
        const SearchResult hit = search(model.bank, traj.past(), model.translate_origin);
        const Path offsets =
            to_path(forward_offsets(model.params, model.mcfg, traj.past(), scene));
        Path pred = hit.candidate_future;
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = pred[i] + offsets[i];
        sum += ade(pred, traj.future());
    }
    return sum / static_cast<double>(set.size());
}

}  // namespace detail

/// Per-example training: retrieve top-1, add offsets, step Adam on the chosen
/// loss, then offer the example to the bank using the post-step prediction.
/// After the final epoch converged_train_error holds the mean train ADE.
inline TrainState train(ShenetModel& model, const std::vector<Trajectory>& trainset,
                        const SceneRaster& scene, int epochs, double lr,
                        std::uint64_t seed) {
    if (model.bank.frozen) throw StateError("train: bank is frozen");
    if (trainset.empty()) throw ConfigError("train: empty trainset");
    TrainState state;
    if (epochs == 0) return state;

    const std::vector<ag::NodePtr> params = all_params(model.params);
    ag::AdamState adam;
    ag::AdamConfig adam_cfg;
    adam_cfg.lr = lr;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(trainset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const Trajectory& traj = trainset[order[oi]];
            const Path past = traj.past();
            const Path gt = traj.future();
            const SearchResult hit = search(model.bank, past, model.translate_origin);

            nn::ForwardCtx ctx;
            ctx.dropout = model.mcfg.dropout;
            ctx.rng = &rng;
            const ag::NodePtr offsets =
                forward_offsets(model.params, model.mcfg, past, scene, ctx);
            const ag::NodePtr pred =
                ag::add(offsets, nn::path_constant(hit.candidate_future));
            const ag::NodePtr loss = model.loss == "cs"
                                         ? nn::loss_cs(pred, gt, model.cs_rule)
                                         : nn::loss_tra(pred, gt);
            if (!std::isfinite(loss->data[0]))
                throw NumericError("train: non-finite loss at step " +
                                   std::to_string(state.steps));
            ag::zero_grad(params);
            ag::backward(loss);
            ag::adam_step(params, adam, adam_cfg);
            loss_sum += loss->data[0];
            ++state.steps;

            // The bank sees the post-step prediction for the same candidate.
            const Path new_offsets =
                to_path(forward_offsets(model.params, model.mcfg, past, scene));
            Path post_pred = hit.candidate_future;
            for (std::size_t i = 0; i < post_pred.size(); ++i)
                post_pred[i] = post_pred[i] + new_offsets[i];
            const UpdateOutcome outcome =
                maybe_update(model.bank, traj, post_pred, model.k_recluster,
                             seed + static_cast<std::uint64_t>(state.steps));
            if (outcome != UpdateOutcome::kUnchanged) ++state.bank_additions;
            if (outcome == UpdateOutcome::kAddedAndMerged) ++state.bank_merges;
        }
        state.epoch_mean_loss.push_back(loss_sum / static_cast<double>(order.size()));
        state.epochs_run = epoch + 1;
    }
    state.converged_train_error = detail::mean_train_ade(model, trainset, scene);
    return state;
}

// -- Baseline predictors --------------------------------------------------------

/// Continues at the mean observed velocity for t_fut steps.
inline Predictor constant_velocity_predictor(int t_fut) {
    return [t_fut](const Path& past, const SceneRaster&) {
        if (past.size() < 2)
            throw DataError("constant_velocity: need at least 2 observed points");
        const Vec2 v = (1.0 / static_cast<double>(past.size() - 1)) *
                       (past.back() - past.front());
        Path pred(static_cast<std::size_t>(t_fut));
        for (int t = 0; t < t_fut; ++t)
            pred[t] = past.back() + static_cast<double>(t + 1) * v;
        return std::vector<Path>{pred};
    };
}

/// Returns the top-k retrieved futures unchanged.
inline Predictor raw_retrieval_predictor(const TrajectoryBank& bank, int k,
                                         bool translate_origin) {
    return [&bank, k, translate_origin](const Path& past, const SceneRaster&) {
        std::vector<Path> preds;
        for (const auto& r :
             topk_search(bank, past, static_cast<std::size_t>(k), translate_origin))
            preds.push_back(r.candidate_future);
        return preds;
    };
}

inline Predictor model_predictor(const ShenetModel& model, int k) {
    return [&model, k](const Path& past, const SceneRaster& raster) {
        return predict(model, past, raster, k);
    };
}

// -- Full experiment --------------------------------------------------------------

struct ExperimentResult {
    EvalReport report;
    TrainState train_state;
    std::vector<EvalTrace> traces;
    double theta_used{0};
    std::size_t bank_size{0};
    std::string out_dir;
};

namespace detail {

inline Dataset build_dataset(const Config& config) {
    Dataset ds;
    if (config.data.source == "synthetic") {
        ds = generate_synthetic_scene(config.data.n_groups, config.data.per_group,
                                      config.data.noise_sigma, config.data.seed,
                                      config.data.t_pas, config.data.t_fut,
                                      config.data.n_cls, config.data.grid_h,
                                      config.data.grid_w);
    } else {
        ds = load_trajectory_file(config.data.path, config.data.t_pas, config.data.t_fut,
                                  config.data.stride);
        if (!config.data.raster_path.empty()) {
            ds.scene = load_raster(config.data.raster_path);
        } else {
            // Without scene data, a single uniform class keeps shapes valid.
            ds.scene.n_cls = 1;
            ds.scene.h = 1;
            ds.scene.w = 1;
            ds.scene.grid = {1.0};
        }
    }
    assign_split(ds, config.data.train_fraction, config.data.split_seed);
    return ds;
}

inline ModelConfig model_config_for(const Config& config, const SceneRaster& scene) {
    ModelConfig mcfg;
    mcfg.d_model = config.model.d_model;
    mcfg.n_heads = config.model.n_heads;
    mcfg.n_tra = config.model.n_tra;
    mcfg.n_cro = config.model.n_cro;
    mcfg.t_pas = config.data.t_pas;
    mcfg.t_fut = config.data.t_fut;
    mcfg.n_cls = scene.n_cls;
    mcfg.grid_h = scene.h;
    mcfg.grid_w = scene.w;
    mcfg.dropout = config.model.dropout;
    mcfg.positional_encoding = config.model.positional_encoding;
    mcfg.gpl_max = config.model.gpl == "max";
    return mcfg;
}

inline ShenetModel build_model(const Config& config, const Dataset& ds,
                               const std::vector<Trajectory>& trainset) {
    ShenetModel model;
    model.bank = init_bank(trainset, static_cast<std::size_t>(config.bank.k),
                           config.bank.max_iter, config.bank.seed);
    model.bank.beta = config.bank.beta;
    model.mcfg = model_config_for(config, ds.scene);
    model.params = init_params(model.mcfg, config.model.seed);
    model.loss = config.train.loss;
    model.cs_rule = parse_control_rule(config.eval.cs_control);
    model.k_recluster = effective_k_recluster(config.bank);
    model.translate_origin = config.bank.translate_origin;
    return model;
}

/// Folds a follow-up training pass into an existing state; the loss curve is
/// concatenated and the converged error tracks the latest pass that ran.
inline void append_train_state(TrainState& base, const TrainState& next) {
    base.epochs_run += next.epochs_run;
    base.steps += next.steps;
    base.bank_additions += next.bank_additions;
    base.bank_merges += next.bank_merges;
    base.epoch_mean_loss.insert(base.epoch_mean_loss.end(), next.epoch_mean_loss.begin(),
                                next.epoch_mean_loss.end());
    if (next.converged_train_error) base.converged_train_error = next.converged_train_error;
}

inline void write_loss_curve(const TrainState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("loss curve: cannot open '" + path + "'");
    out << "epoch,mean_loss\n";
    char buf[48];
    for (std::size_t i = 0; i < state.epoch_mean_loss.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g\n", i, state.epoch_mean_loss[i]);
        out << buf;
    }
}

}  // namespace detail

/// Runs the configured experiment end to end and writes every artifact
/// (resolved config, bank, checkpoint, metrics CSV/JSON, loss curve, SVG
/// report) under eval.out_dir. Deterministic: a config maps to exact bytes.
inline ExperimentResult run_experiment(const Config& config) {
    validate(config);
    Dataset ds = detail::build_dataset(config);
    const std::vector<Trajectory> trainset = ds.subset(Split::kTrain);
    const std::vector<Trajectory> testset = ds.subset(Split::kTest);
    const ControlRule cs_rule = parse_control_rule(config.eval.cs_control);

    const std::filesystem::path out_dir(config.eval.out_dir);
    std::filesystem::create_directories(out_dir);
    auto artifact = [&](const char* name) { return (out_dir / name).string(); };

    ExperimentResult result;
    result.out_dir = out_dir.string();

    if (config.eval.predictor == "constant_velocity") {
        const Predictor baseline = constant_velocity_predictor(config.data.t_fut);
        result.report = evaluate(testset, ds.scene, baseline, 1, cs_rule, &result.traces);
    } else if (config.eval.predictor == "raw_retrieval") {
        if (trainset.empty()) throw ConfigError("run_experiment: empty train split");
        TrajectoryBank bank = init_bank(trainset, static_cast<std::size_t>(config.bank.k),
                                        config.bank.max_iter, config.bank.seed);
        freeze(bank);
        result.bank_size = bank.entries.size();
        const Predictor baseline = raw_retrieval_predictor(bank, config.eval.top_k,
                                                           config.bank.translate_origin);
        result.report =
            evaluate(testset, ds.scene, baseline, config.eval.top_k, cs_rule, &result.traces);
        save_bank(bank, artifact("bank.json"));
    } else {
        if (trainset.empty()) throw ConfigError("run_experiment: empty train split");
        ShenetModel model = detail::build_model(config, ds, trainset);
        double theta = config.bank.theta;
        TrainState state;
        if (config.bank.theta_auto) {
            // Calibration pass: converge with an infinite threshold (the bank
            // never grows), set theta to the requested fraction of the
            // converged train error, then re-train the warm model so bank
            // additions are judged against converged-level errors rather than
            // warm-up noise.
            model.bank.theta = std::numeric_limits<double>::infinity();
            state = train(model, trainset, ds.scene, config.train.epochs,
                          config.train.lr, config.train.seed);
            theta = config.bank.theta_fraction *
                    state.converged_train_error.value_or(0.0);
            model.bank.theta = theta;
            const TrainState retrain =
                train(model, trainset, ds.scene, config.train.retrain_epochs,
                      config.train.lr, config.train.seed + 1);
            detail::append_train_state(state, retrain);
        } else {
            model.bank.theta = theta;
            state = train(model, trainset, ds.scene, config.train.epochs,
                          config.train.lr, config.train.seed);
        }
        result.theta_used = theta;
        result.train_state = std::move(state);
        freeze(model.bank);
        result.bank_size = model.bank.entries.size();
        result.report = evaluate(testset, ds.scene, model_predictor(model, config.eval.top_k),
                                 config.eval.top_k, cs_rule, &result.traces);
        save_bank(model.bank, artifact("bank.json"));
        save_checkpoint(model.params, model.mcfg, artifact("checkpoint.json"));
        detail::write_loss_curve(result.train_state, artifact("loss_curve.csv"));
    }

    {
        std::ofstream out(artifact("config_resolved.json"), std::ios::binary);
        out << config_to_json(config).dump(2) << "\n";
    }
    write_eval_csv(result.report, artifact("eval.csv"), &result.traces);
    write_eval_json(result.report, artifact("eval.json"));
    std::vector<EvalTrace> sampled = result.traces;
    if (sampled.size() > static_cast<std::size_t>(config.eval.report_samples))
        sampled.resize(static_cast<std::size_t>(config.eval.report_samples));
    write_report_svg(result.report, sampled, artifact("report.svg"), ds.units);
    return result;
}

inline ExperimentResult run_experiment_file(const std::string& config_path,
                                            const std::vector<std::string>& overrides = {}) {
    Config config = load_config(config_path);
    for (const auto& o : overrides) apply_override(config, o);
    validate(config);
    return run_experiment(config);
}

}  // namespace shenet
