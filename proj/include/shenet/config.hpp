#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "shenet/errors.hpp"
#include "shenet/smoothing.hpp"

namespace shenet {

/// Experiment configuration, grouped the way the config file is.
struct Config {
    struct Data {
        std::string source{"synthetic"};  // synthetic | file
        std::string path;                 // trajectory text file (source = file)
        std::string raster_path;          // raster JSON (source = file)
        int t_pas{8};
        int t_fut{12};
        int stride{1};
        int n_groups{3};
        int per_group{200};
        double noise_sigma{0.05};
        int n_cls{8};
        int grid_h{16};
        int grid_w{16};
        double train_fraction{5.0 / 6.0};
        std::uint64_t seed{1};
        std::uint64_t split_seed{2};
    } data;

    struct Bank {
        int k{32};
        int max_iter{100};
        bool theta_auto{true};  // theta = theta_fraction * converged train error
        double theta{0.0};      // used when theta_auto is false
        double theta_fraction{0.75};
        std::int64_t beta{32};  // int64 max = never merge
        int k_recluster{0};     // 0 = max(1, round(beta / 4))
        std::uint64_t seed{3};
        bool translate_origin{false};
    } bank;

    struct Model {
        int d_model{32};
        int n_heads{4};
        int n_tra{2};
        int n_cro{2};
        double dropout{0.0};
        bool positional_encoding{true};
        std::string gpl{"mean"};  // mean | max
        std::uint64_t seed{4};
    } model;

    struct Train {
        int epochs{10};
        // Epochs for the second pass when bank.theta is "auto": the converged
        // model is re-trained with the calibrated threshold so bank additions
        // reflect converged-level errors rather than warm-up noise.
        int retrain_epochs{2};
        double lr{1e-3};
        std::string loss{"mse"};  // mse | cs
        std::uint64_t seed{5};
    } train;

    struct Eval {
        int top_k{1};
        std::string cs_control{"mid"};   // mid | literal:<t0> | lsq
        std::string predictor{"model"};  // model | constant_velocity | raw_retrieval
        int report_samples{8};
        std::string out_dir{"out"};
    } eval;
};

/// Parses a cs_control value: "mid", "lsq", or "literal:<t0>" / "chord:<t0>".
inline ControlRule parse_control_rule(const std::string& s) {
    if (s == "mid") return ControlRule::mid();
    if (s == "lsq") return ControlRule::lsq();
    for (const char* prefix : {"literal:", "chord:"}) {
        if (s.rfind(prefix, 0) == 0) {
            try {
                return ControlRule::chord(std::stod(s.substr(std::string(prefix).size())));
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception&) {
                throw ConfigError("cs_control: bad t0 in '" + s + "'");
            }
        }
    }
    throw ConfigError("cs_control: expected mid, lsq, or literal:<t0>, got '" + s + "'");
}

inline int effective_k_recluster(const Config::Bank& bank) {
    if (bank.k_recluster > 0) return bank.k_recluster;
    if (bank.beta == std::numeric_limits<std::int64_t>::max()) return 1;
    return std::max<int>(1, static_cast<int>(std::llround(static_cast<double>(bank.beta) / 4.0)));
}

namespace detail {

struct FieldSpec {
    std::string section;
    std::string key;
    std::string type_text;  // for --help
    std::string default_text;
    std::string doc;
    std::function<void(Config&, const nlohmann::json&)> apply;
};

inline std::string field_name(const FieldSpec& f) { return f.section + "." + f.key; }

inline int get_int(const nlohmann::json& j, const std::string& name) {
    if (!j.is_number_integer())
        throw ConfigError("config key " + name + ": expected an integer");
    return j.get<int>();
}

inline std::uint64_t get_u64(const nlohmann::json& j, const std::string& name) {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() &&
                                   j.get<std::int64_t>() < 0))
        throw ConfigError("config key " + name + ": expected a non-negative integer");
    return j.get<std::uint64_t>();
}

inline double get_real(const nlohmann::json& j, const std::string& name) {
    if (!j.is_number()) throw ConfigError("config key " + name + ": expected a number");
    return j.get<double>();
}

inline bool get_bool(const nlohmann::json& j, const std::string& name) {
    if (!j.is_boolean()) throw ConfigError("config key " + name + ": expected a boolean");
    return j.get<bool>();
}

inline std::string get_string(const nlohmann::json& j, const std::string& name) {
    if (!j.is_string()) throw ConfigError("config key " + name + ": expected a string");
    return j.get<std::string>();
}

inline const std::vector<FieldSpec>& config_schema() {
    static const std::vector<FieldSpec> fields = {
        {"data", "source", "string", "synthetic", "synthetic | file",
         [](Config& c, const nlohmann::json& j) {
             c.data.source = get_string(j, "data.source");
         }},
        {"data", "path", "string", "", "trajectory text file when source = file",
         [](Config& c, const nlohmann::json& j) { c.data.path = get_string(j, "data.path"); }},
        {"data", "raster_path", "string", "", "scene raster JSON when source = file",
         [](Config& c, const nlohmann::json& j) {
             c.data.raster_path = get_string(j, "data.raster_path");
         }},
        {"data", "t_pas", "int", "8", "observed steps per window",
         [](Config& c, const nlohmann::json& j) { c.data.t_pas = get_int(j, "data.t_pas"); }},
        {"data", "t_fut", "int", "12", "future steps per window",
         [](Config& c, const nlohmann::json& j) { c.data.t_fut = get_int(j, "data.t_fut"); }},
        {"data", "stride", "int", "1", "window advance when cutting tracks",
         [](Config& c, const nlohmann::json& j) {
             c.data.stride = get_int(j, "data.stride");
         }},
        {"data", "n_groups", "int", "3", "synthetic: movement pattern count",
         [](Config& c, const nlohmann::json& j) {
             c.data.n_groups = get_int(j, "data.n_groups");
         }},
        {"data", "per_group", "int", "200", "synthetic: instances per pattern",
         [](Config& c, const nlohmann::json& j) {
             c.data.per_group = get_int(j, "data.per_group");
         }},
        {"data", "noise_sigma", "real", "0.05", "synthetic: per-point noise std dev",
         [](Config& c, const nlohmann::json& j) {
             c.data.noise_sigma = get_real(j, "data.noise_sigma");
         }},
        {"data", "n_cls", "int", "8", "synthetic: raster class count",
         [](Config& c, const nlohmann::json& j) { c.data.n_cls = get_int(j, "data.n_cls"); }},
        {"data", "grid_h", "int", "16", "synthetic: raster rows",
         [](Config& c, const nlohmann::json& j) {
             c.data.grid_h = get_int(j, "data.grid_h");
         }},
        {"data", "grid_w", "int", "16", "synthetic: raster cols",
         [](Config& c, const nlohmann::json& j) {
             c.data.grid_w = get_int(j, "data.grid_w");
         }},
        {"data", "train_fraction", "real", "0.8333333333333334",
         "fraction of trajectories labeled train",
         [](Config& c, const nlohmann::json& j) {
             c.data.train_fraction = get_real(j, "data.train_fraction");
         }},
        {"data", "seed", "uint", "1", "generation seed",
         [](Config& c, const nlohmann::json& j) { c.data.seed = get_u64(j, "data.seed"); }},
        {"data", "split_seed", "uint", "2", "train/test shuffle seed",
         [](Config& c, const nlohmann::json& j) {
             c.data.split_seed = get_u64(j, "data.split_seed");
         }},

        {"bank", "k", "int", "32", "initial cluster count",
         [](Config& c, const nlohmann::json& j) { c.bank.k = get_int(j, "bank.k"); }},
        {"bank", "max_iter", "int", "100", "K-medoids swap iteration cap",
         [](Config& c, const nlohmann::json& j) {
             c.bank.max_iter = get_int(j, "bank.max_iter");
         }},
        {"bank", "theta", "real or \"auto\"", "auto",
         "addition threshold; auto = theta_fraction * converged train error",
         [](Config& c, const nlohmann::json& j) {
             if (j.is_string()) {
                 if (j.get<std::string>() != "auto")
                     throw ConfigError("config key bank.theta: expected a number or \"auto\"");
                 c.bank.theta_auto = true;
             } else {
                 c.bank.theta = get_real(j, "bank.theta");
                 c.bank.theta_auto = false;
             }
         }},
        {"bank", "theta_fraction", "real", "0.75", "auto theta multiplier",
         [](Config& c, const nlohmann::json& j) {
             c.bank.theta_fraction = get_real(j, "bank.theta_fraction");
         }},
        {"bank", "beta", "int or \"inf\"", "32", "additions that trigger a merge",
         [](Config& c, const nlohmann::json& j) {
             if (j.is_string()) {
                 if (j.get<std::string>() != "inf")
                     throw ConfigError("config key bank.beta: expected an integer or \"inf\"");
                 c.bank.beta = std::numeric_limits<std::int64_t>::max();
             } else if (j.is_number_integer()) {
                 c.bank.beta = j.get<std::int64_t>();
             } else {
                 throw ConfigError("config key bank.beta: expected an integer or \"inf\"");
             }
         }},
        {"bank", "k_recluster", "int", "0", "merge cluster count; 0 = max(1, beta/4)",
         [](Config& c, const nlohmann::json& j) {
             c.bank.k_recluster = get_int(j, "bank.k_recluster");
         }},
        {"bank", "seed", "uint", "3", "clustering seed",
         [](Config& c, const nlohmann::json& j) { c.bank.seed = get_u64(j, "bank.seed"); }},
        {"bank", "translate_origin", "bool", "false",
         "translate pasts to the origin before cosine search",
         [](Config& c, const nlohmann::json& j) {
             c.bank.translate_origin = get_bool(j, "bank.translate_origin");
         }},

        {"model", "d_model", "int", "32", "token width",
         [](Config& c, const nlohmann::json& j) {
             c.model.d_model = get_int(j, "model.d_model");
         }},
        {"model", "n_heads", "int", "4", "attention heads",
         [](Config& c, const nlohmann::json& j) {
             c.model.n_heads = get_int(j, "model.n_heads");
         }},
        {"model", "n_tra", "int", "2", "trajectory encoder layers",
         [](Config& c, const nlohmann::json& j) {
             c.model.n_tra = get_int(j, "model.n_tra");
         }},
        {"model", "n_cro", "int", "2", "cross-modal layers",
         [](Config& c, const nlohmann::json& j) {
             c.model.n_cro = get_int(j, "model.n_cro");
         }},
        {"model", "dropout", "real", "0", "dropout probability while training",
         [](Config& c, const nlohmann::json& j) {
             c.model.dropout = get_real(j, "model.dropout");
         }},
        {"model", "positional_encoding", "bool", "true",
         "add sinusoidal time encodings to trajectory tokens",
         [](Config& c, const nlohmann::json& j) {
             c.model.positional_encoding = get_bool(j, "model.positional_encoding");
         }},
        {"model", "gpl", "string", "mean", "scene token pooling: mean | max",
         [](Config& c, const nlohmann::json& j) { c.model.gpl = get_string(j, "model.gpl"); }},
        {"model", "seed", "uint", "4", "weight initialization seed",
         [](Config& c, const nlohmann::json& j) { c.model.seed = get_u64(j, "model.seed"); }},

        {"train", "epochs", "int", "10", "training epochs",
         [](Config& c, const nlohmann::json& j) {
             c.train.epochs = get_int(j, "train.epochs");
         }},
        {"train", "retrain_epochs", "int", "2",
         "re-training epochs after auto theta calibration",
         [](Config& c, const nlohmann::json& j) {
             c.train.retrain_epochs = get_int(j, "train.retrain_epochs");
         }},
        {"train", "lr", "real", "0.001", "Adam learning rate",
         [](Config& c, const nlohmann::json& j) { c.train.lr = get_real(j, "train.lr"); }},
        {"train", "loss", "string", "mse", "training loss: mse | cs",
         [](Config& c, const nlohmann::json& j) {
             c.train.loss = get_string(j, "train.loss");
         }},
        {"train", "seed", "uint", "5", "shuffle/dropout seed",
         [](Config& c, const nlohmann::json& j) { c.train.seed = get_u64(j, "train.seed"); }},

        {"eval", "top_k", "int", "1", "candidates per prediction (best-of-k)",
         [](Config& c, const nlohmann::json& j) {
             c.eval.top_k = get_int(j, "eval.top_k");
         }},
        {"eval", "cs_control", "string", "mid",
         "smoothing control rule: mid | literal:<t0> | lsq",
         [](Config& c, const nlohmann::json& j) {
             c.eval.cs_control = get_string(j, "eval.cs_control");
         }},
        {"eval", "predictor", "string", "model",
         "model | constant_velocity | raw_retrieval",
         [](Config& c, const nlohmann::json& j) {
             c.eval.predictor = get_string(j, "eval.predictor");
         }},
        {"eval", "report_samples", "int", "8", "trajectories drawn in the SVG report",
         [](Config& c, const nlohmann::json& j) {
             c.eval.report_samples = get_int(j, "eval.report_samples");
         }},
        {"eval", "out_dir", "string", "out", "artifact output directory",
         [](Config& c, const nlohmann::json& j) {
             c.eval.out_dir = get_string(j, "eval.out_dir");
         }},
    };
    return fields;
}

inline const FieldSpec* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : config_schema())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

}  // namespace detail

/// Checks cross-field constraints after all keys are applied.
inline void validate(const Config& c) {
    auto one_of = [](const std::string& v, std::initializer_list<const char*> allowed,
                     const char* key) {
        for (const char* a : allowed)
            if (v == a) return;
        std::string msg = std::string("config key ") + key + ": '" + v + "' is not one of {";
        bool first = true;
        for (const char* a : allowed) {
            if (!first) msg += ", ";
            msg += a;
            first = false;
        }
        throw ConfigError(msg + "}");
    };
    one_of(c.data.source, {"synthetic", "file"}, "data.source");
    one_of(c.model.gpl, {"mean", "max"}, "model.gpl");
    one_of(c.train.loss, {"mse", "cs"}, "train.loss");
    one_of(c.eval.predictor, {"model", "constant_velocity", "raw_retrieval"},
           "eval.predictor");
    parse_control_rule(c.eval.cs_control);
    if (c.data.source == "file" && c.data.path.empty())
        throw ConfigError("config key data.path: required when data.source = file");
    if (c.data.t_pas < 2) throw ConfigError("config key data.t_pas: must be >= 2");
    if (c.data.t_fut < 1) throw ConfigError("config key data.t_fut: must be >= 1");
    if (c.data.stride < 1) throw ConfigError("config key data.stride: must be >= 1");
    if (c.data.n_groups < 1) throw ConfigError("config key data.n_groups: must be >= 1");
    if (c.data.per_group < 1) throw ConfigError("config key data.per_group: must be >= 1");
    if (!(c.data.noise_sigma >= 0))
        throw ConfigError("config key data.noise_sigma: must be >= 0");
    if (!(c.data.train_fraction >= 0 && c.data.train_fraction <= 1))
        throw ConfigError("config key data.train_fraction: must be in [0, 1]");
    if (c.bank.k < 1) throw ConfigError("config key bank.k: must be >= 1");
    if (c.bank.max_iter < 0) throw ConfigError("config key bank.max_iter: must be >= 0");
    if (!c.bank.theta_auto && !(c.bank.theta >= 0))
        throw ConfigError("config key bank.theta: must be >= 0");
    if (!(c.bank.theta_fraction >= 0))
        throw ConfigError("config key bank.theta_fraction: must be >= 0");
    if (c.bank.beta < 1) throw ConfigError("config key bank.beta: must be >= 1");
    if (c.bank.k_recluster < 0)
        throw ConfigError("config key bank.k_recluster: must be >= 0");
    if (c.train.epochs < 0) throw ConfigError("config key train.epochs: must be >= 0");
    if (c.train.retrain_epochs < 0)
        throw ConfigError("config key train.retrain_epochs: must be >= 0");
    if (!(c.train.lr > 0)) throw ConfigError("config key train.lr: must be > 0");
    if (c.eval.top_k < 1) throw ConfigError("config key eval.top_k: must be >= 1");
    if (c.eval.report_samples < 0)
        throw ConfigError("config key eval.report_samples: must be >= 0");
    if (c.model.d_model < 1 || c.model.n_heads < 1 ||
        c.model.d_model % c.model.n_heads != 0)
        throw ConfigError("config key model.d_model: must be a positive multiple of n_heads");
    if (c.model.n_tra < 1) throw ConfigError("config key model.n_tra: must be >= 1");
    if (c.model.n_cro < 1) throw ConfigError("config key model.n_cro: must be >= 1");
    if (!(c.model.dropout >= 0 && c.model.dropout < 1))
        throw ConfigError("config key model.dropout: must be in [0, 1)");
}

/// Applies a parsed JSON document onto `config`. Unknown sections and keys
/// are rejected by name.
inline void apply_config_json(Config& config, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config file: top level must be an object");
    for (const auto& [section, body] : j.items()) {
        if (!body.is_object())
            throw ConfigError("config section '" + section + "' must be an object");
        for (const auto& [key, value] : body.items()) {
            const detail::FieldSpec* f = detail::find_field(section, key);
            if (!f)
                throw ConfigError("unknown config key " + section + "." + key);
            f->apply(config, value);
        }
    }
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
    }
    Config config;
    apply_config_json(config, j);
    validate(config);
    return config;
}

/// Applies one `section.key=value` override on top of a loaded config.
inline void apply_override(Config& config, const std::string& text) {
    const auto eq = text.find('=');
    const auto dot = text.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("override '" + text + "': expected section.key=value");
    const std::string section = text.substr(0, dot);
    const std::string key = text.substr(dot + 1, eq - dot - 1);
    const std::string value = text.substr(eq + 1);
    const detail::FieldSpec* f = detail::find_field(section, key);
    if (!f) throw ConfigError("unknown config key " + section + "." + key);
    // Interpret the raw text: JSON scalar if it parses as one, string otherwise.
    nlohmann::json v = nlohmann::json::parse(value, nullptr, false);
    if (v.is_discarded() || v.is_object() || v.is_array()) v = value;
    f->apply(config, v);
}

/// One line per key: name, type, default, and what it does.
inline std::string config_help() {
    std::string out;
    for (const auto& f : detail::config_schema()) {
        out += detail::field_name(f);
        out += " (" + f.type_text + ", default " +
               (f.default_text.empty() ? "\"\"" : f.default_text) + "): " + f.doc + "\n";
    }
    return out;
}

/// The fully resolved configuration as ordered JSON, for artifact dumps.
inline nlohmann::json config_to_json(const Config& c) {
    nlohmann::json j;
    j["data"] = {{"source", c.data.source},
                 {"path", c.data.path},
                 {"raster_path", c.data.raster_path},
                 {"t_pas", c.data.t_pas},
                 {"t_fut", c.data.t_fut},
                 {"stride", c.data.stride},
                 {"n_groups", c.data.n_groups},
                 {"per_group", c.data.per_group},
                 {"noise_sigma", c.data.noise_sigma},
                 {"n_cls", c.data.n_cls},
                 {"grid_h", c.data.grid_h},
                 {"grid_w", c.data.grid_w},
                 {"train_fraction", c.data.train_fraction},
                 {"seed", c.data.seed},
                 {"split_seed", c.data.split_seed}};
    j["bank"] = {{"k", c.bank.k},
                 {"max_iter", c.bank.max_iter},
                 {"theta_fraction", c.bank.theta_fraction},
                 {"k_recluster", c.bank.k_recluster},
                 {"seed", c.bank.seed},
                 {"translate_origin", c.bank.translate_origin}};
    if (c.bank.theta_auto)
        j["bank"]["theta"] = "auto";
    else
        j["bank"]["theta"] = c.bank.theta;
    if (c.bank.beta == std::numeric_limits<std::int64_t>::max())
        j["bank"]["beta"] = "inf";
    else
        j["bank"]["beta"] = c.bank.beta;
    j["model"] = {{"d_model", c.model.d_model},
                  {"n_heads", c.model.n_heads},
                  {"n_tra", c.model.n_tra},
                  {"n_cro", c.model.n_cro},
                  {"dropout", c.model.dropout},
                  {"positional_encoding", c.model.positional_encoding},
                  {"gpl", c.model.gpl},
                  {"seed", c.model.seed}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"retrain_epochs", c.train.retrain_epochs},
                  {"lr", c.train.lr},
                  {"loss", c.train.loss},
                  {"seed", c.train.seed}};
    j["eval"] = {{"top_k", c.eval.top_k},
                 {"cs_control", c.eval.cs_control},
                 {"predictor", c.eval.predictor},
                 {"report_samples", c.eval.report_samples},
                 {"out_dir", c.eval.out_dir}};
    return j;
}

}  // namespace shenet
