#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "shenet/errors.hpp"
#include "shenet/nn.hpp"
#include "shenet/tensor.hpp"
#include "shenet/types.hpp"

namespace shenet {

struct ModelConfig {
    int d_model{32};
    int n_heads{4};
    int n_tra{2};  // trajectory self-attention layers
    int n_cro{2};  // cross-modal layers
    int t_pas{8};
    int t_fut{12};
    int n_cls{8};
    int grid_h{16};
    int grid_w{16};
    double dropout{0.0};
    bool positional_encoding{true};
    bool gpl_max{false};  // pool scene tokens by max instead of mean

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void validate(const ModelConfig& cfg) {
    if (cfg.d_model < 1 || cfg.n_heads < 1 || cfg.d_model % cfg.n_heads != 0)
        throw ConfigError("model: d_model must be a positive multiple of n_heads");
    if (cfg.n_tra < 1 || cfg.n_cro < 1)
        throw ConfigError("model: layer counts must be >= 1");
    if (cfg.t_pas < 1 || cfg.t_fut < 1)
        throw ConfigError("model: t_pas and t_fut must be >= 1");
    if (cfg.n_cls < 1 || cfg.grid_h < 1 || cfg.grid_w < 1)
        throw ConfigError("model: scene dimensions must be >= 1");
    if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
        throw ConfigError("model: dropout must be in [0, 1)");
}

/// Per-token input features fed to the trajectory embedding. Each token
/// carries its position relative to the segment mean and its step velocity,
/// plus window-level aggregates repeated on every token: the mean velocity,
/// the least-squares drift of the centered positions, and the scaled segment
/// mean. The aggregates average the per-point noise down, so pace, heading
/// trend, and scene placement reach the head at full strength no matter how
/// the attention stack pools the tokens. The aggregates also appear
/// multiplied by the mean step length and its square, together with those
/// two scalars themselves: how a deviation in the observed window continues
/// into the future depends on which movement pattern the walker follows, and
/// pattern identity shows up in the pace, so the speed-weighted copies let
/// even a plain linear readout apply a pace-conditioned correction instead
/// of one shared across patterns.
constexpr int kTokenFeatures = 24;

/// Scale applied to the absolute segment mean before it enters the token. It
/// brings scene coordinates to the same order of magnitude as the other
/// features, so no single channel dominates the token norm.
constexpr double kMeanFeatureScale = 0.1;

/// Scale applied to every token feature after assembly, keeping the
/// positional encoding dominant in each token's norm so the per-token layer
/// norms divide by a nearly example-independent sigma.
constexpr double kFeatureScale = 0.2;

/// The speed scalar that weights the aggregate copies enters as
/// kPaceSpread * (pace - kPaceCenter). Walking paces sit in a narrow band
/// around one distance unit per step, so the raw first and second powers of
/// pace would be almost collinear with the unweighted copy; centering on a
/// nominal pace and stretching the deviation keeps the three copies distinct
/// through the random embedding.
constexpr double kPaceCenter = 1.0;
constexpr double kPaceSpread = 4.0;

/// Initial value for the head's hidden-layer bias; see init_params.
constexpr double kHeadBiasInit = 0.25;

/// Every trainable tensor of the network, grouped by block.
struct ShenetParams {
    nn::Linear embed;                           // kTokenFeatures -> d
    std::vector<nn::EncoderLayer> traj_layers;  // n_tra
    nn::Linear traj_proj;                       // n_tra*d -> d
    nn::Linear scene_proj;                      // h*w -> d
    std::vector<nn::CrossStream> cross_traj;    // n_cro, trajectory stream
    std::vector<nn::CrossStream> cross_scene;   // n_cro, scene stream
    nn::Linear head_hidden;                     // 2d -> d
    nn::Linear head_out;                        // d -> t_fut*2, zero-initialized
};

namespace detail {

inline void collect_linear(std::vector<std::pair<std::string, ag::NodePtr>>& out,
                           const std::string& name, const nn::Linear& l) {
    out.push_back({name + ".w", l.w});
    out.push_back({name + ".b", l.b});
}

inline void collect_norm(std::vector<std::pair<std::string, ag::NodePtr>>& out,
                         const std::string& name, const nn::LayerNorm& ln) {
    out.push_back({name + ".gamma", ln.gamma});
    out.push_back({name + ".beta", ln.beta});
}

inline void collect_mha(std::vector<std::pair<std::string, ag::NodePtr>>& out,
                        const std::string& name, const nn::MultiHeadAttention& mha) {
    collect_linear(out, name + ".q", mha.q);
    collect_linear(out, name + ".k", mha.k);
    collect_linear(out, name + ".v", mha.v);
    collect_linear(out, name + ".out", mha.out);
}

inline void collect_stream(std::vector<std::pair<std::string, ag::NodePtr>>& out,
                           const std::string& name, const nn::CrossStream& s) {
    collect_mha(out, name + ".ca", s.ca);
    collect_norm(out, name + ".ln1", s.ln1);
    collect_mha(out, name + ".sa", s.sa);
    collect_norm(out, name + ".ln2", s.ln2);
    collect_linear(out, name + ".ff.in", s.ff.in);
    collect_linear(out, name + ".ff.out", s.ff.out);
    collect_norm(out, name + ".ln3", s.ln3);
}

}  // namespace detail

/// Stable name -> tensor listing; the order fixes serialization and Adam
/// state layout.
inline std::vector<std::pair<std::string, ag::NodePtr>> named_params(
    const ShenetParams& p) {
    std::vector<std::pair<std::string, ag::NodePtr>> out;
    detail::collect_linear(out, "embed", p.embed);
    for (std::size_t i = 0; i < p.traj_layers.size(); ++i) {
        const std::string base = "traj." + std::to_string(i);
        const auto& layer = p.traj_layers[i];
        detail::collect_mha(out, base + ".sa", layer.sa);
        detail::collect_norm(out, base + ".ln1", layer.ln1);
        detail::collect_linear(out, base + ".ff.in", layer.ff.in);
        detail::collect_linear(out, base + ".ff.out", layer.ff.out);
        detail::collect_norm(out, base + ".ln2", layer.ln2);
    }
    detail::collect_linear(out, "traj_proj", p.traj_proj);
    detail::collect_linear(out, "scene_proj", p.scene_proj);
    for (std::size_t i = 0; i < p.cross_traj.size(); ++i) {
        detail::collect_stream(out, "cross." + std::to_string(i) + ".traj", p.cross_traj[i]);
        detail::collect_stream(out, "cross." + std::to_string(i) + ".scene",
                               p.cross_scene[i]);
    }
    detail::collect_linear(out, "head.hidden", p.head_hidden);
    detail::collect_linear(out, "head.out", p.head_out);
    return out;
}

inline std::vector<ag::NodePtr> all_params(const ShenetParams& p) {
    std::vector<ag::NodePtr> out;
    for (auto& [name, node] : named_params(p)) out.push_back(node);
    return out;
}

inline std::size_t param_count(const ShenetParams& p) {
    std::size_t n = 0;
    for (const auto& t : all_params(p)) n += t->size();
    return n;
}

/// Closed-form parameter count for a config; tests pin it against
/// param_count of a real instance.
inline std::size_t expected_param_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d_model;
    const std::size_t mha = 4 * (d * d + d);
    const std::size_t ff = d * (2 * d) + 2 * d + (2 * d) * d + d;
    const std::size_t ln = 2 * d;
    const std::size_t traj_layer = mha + ff + 2 * ln;
    const std::size_t stream = 2 * mha + ff + 3 * ln;
    return (kTokenFeatures * d + d)                                     // embed
           + cfg.n_tra * traj_layer                                     //
           + (cfg.n_tra * d * d + d)                                    // traj_proj
           + (static_cast<std::size_t>(cfg.grid_h) * cfg.grid_w * d + d)  // scene_proj
           + cfg.n_cro * 2 * stream                                     //
           + (2 * d * d + d)                                            // head.hidden
           + (d * 2 * cfg.t_fut + 2 * cfg.t_fut);                       // head.out
}

namespace detail {

inline nn::Linear init_linear(int in, int out, std::mt19937_64& rng, bool zero = false,
                              double scale = 1.0) {
    std::vector<double> w(static_cast<std::size_t>(in) * out, 0.0);
    if (!zero) {
        const double a = scale * std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& v : w) v = dist(rng);
    }
    return {ag::tensor(in, out, std::move(w), true), ag::zeros(1, out, true)};
}

inline nn::LayerNorm init_norm(int d) {
    return {ag::tensor(1, d, std::vector<double>(d, 1.0), true), ag::zeros(1, d, true)};
}

// Residual-exit projections start small so each block is near-identity at
// initialization; the token stream then still carries the embedded input when
// the head starts learning, instead of a random mix of it.
constexpr double kResidualInitScale = 0.1;

inline nn::MultiHeadAttention init_mha(int d, int n_heads, std::mt19937_64& rng) {
    return {init_linear(d, d, rng), init_linear(d, d, rng), init_linear(d, d, rng),
            init_linear(d, d, rng, false, kResidualInitScale), n_heads};
}

inline nn::FeedForward init_ff(int d, std::mt19937_64& rng) {
    return {init_linear(d, 2 * d, rng),
            init_linear(2 * d, d, rng, false, kResidualInitScale)};
}

inline nn::CrossStream init_stream(int d, int n_heads, std::mt19937_64& rng) {
    return {init_mha(d, n_heads, rng), init_norm(d), init_mha(d, n_heads, rng),
            init_norm(d), init_ff(d, rng), init_norm(d)};
}

}  // namespace detail

/// Seeded uniform (Xavier-style) initialization. The final offset layer
/// starts at exactly zero so an untrained model reproduces the retrieved
/// candidate unchanged.
inline ShenetParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    std::mt19937_64 rng(seed);
    const int d = cfg.d_model;
    ShenetParams p;
    p.embed = detail::init_linear(kTokenFeatures, d, rng);
    for (int i = 0; i < cfg.n_tra; ++i)
        p.traj_layers.push_back({detail::init_mha(d, cfg.n_heads, rng), detail::init_norm(d),
                                 detail::init_ff(d, rng), detail::init_norm(d)});
    p.traj_proj = detail::init_linear(cfg.n_tra * d, d, rng);
    p.scene_proj = detail::init_linear(cfg.grid_h * cfg.grid_w, d, rng);
    for (int i = 0; i < cfg.n_cro; ++i) {
        p.cross_traj.push_back(detail::init_stream(d, cfg.n_heads, rng));
        p.cross_scene.push_back(detail::init_stream(d, cfg.n_heads, rng));
    }
    p.head_hidden = detail::init_linear(2 * d, d, rng);
    // A positive hidden bias keeps the head's relu units alive through the
    // first optimizer steps; with a zero final layer the early gradient
    // pressure otherwise drives the biases negative and freezes the head.
    for (double& b : p.head_hidden.b->data) b = kHeadBiasInit;
    p.head_out = detail::init_linear(d, cfg.t_fut * 2, rng, /*zero=*/true);
    return p;
}

/// Fixed sinusoidal positional encoding, one row per time step.
inline ag::NodePtr positional_encoding(int t_steps, int d) {
    std::vector<double> pe(static_cast<std::size_t>(t_steps) * d);
    for (int pos = 0; pos < t_steps; ++pos)
        for (int j = 0; j < d; ++j) {
            const double angle =
                pos / std::pow(10000.0, 2.0 * (j / 2) / static_cast<double>(d));
            pe[static_cast<std::size_t>(pos) * d + j] =
                (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return ag::constant(t_steps, d, std::move(pe));
}

/// Embeds the observed track and runs the self-attention stack; the outputs
/// of all stack layers are concatenated per time step and projected back to
/// d_model.
inline ag::NodePtr encode_trajectory(const ShenetParams& p, const ModelConfig& cfg,
                                     const Path& past, const nn::ForwardCtx& ctx = {}) {
    if (past.size() != static_cast<std::size_t>(cfg.t_pas))
        throw DataError("encode_trajectory: past has " + std::to_string(past.size()) +
                        " steps, config expects " + std::to_string(cfg.t_pas));
    for (const auto& q : past)
        if (!std::isfinite(q.x) || !std::isfinite(q.y))
            throw NumericError("encode_trajectory: non-finite input");
    // Tokens are built in the segment's own frame so their magnitudes reflect
    // the walk's shape and pace; the scaled segment mean rides along so the
    // head can still condition on where in the scene the walk happens.
    const double n_pts = static_cast<double>(past.size());
    Vec2 mean{0, 0};
    for (const auto& q : past) mean = mean + q;
    mean = (1.0 / n_pts) * mean;
    Vec2 vbar{0, 0};
    if (past.size() > 1)
        vbar = (1.0 / (n_pts - 1.0)) * (past.back() - past.front());
    Vec2 drift{0, 0};
    double lever = 0.0;
    for (std::size_t i = 0; i < past.size(); ++i) {
        const double w = static_cast<double>(i) - 0.5 * (n_pts - 1.0);
        drift = drift + w * (past[i] - mean);
        lever += w * w;
    }
    if (lever > 0.0) drift = (1.0 / lever) * drift;
    const double pace = std::sqrt(vbar.x * vbar.x + vbar.y * vbar.y);
    std::vector<double> feats(past.size() * kTokenFeatures);
    for (std::size_t i = 0; i < past.size(); ++i) {
        const Vec2 c = past[i] - mean;
        const Vec2 v = past.size() < 2 ? Vec2{0, 0}
                       : i == 0        ? past[1] - past[0]
                                       : past[i] - past[i - 1];
        double* f = &feats[i * kTokenFeatures];
        f[0] = c.x;
        f[1] = c.y;
        f[2] = v.x;
        f[3] = v.y;
        f[4] = vbar.x;
        f[5] = vbar.y;
        f[6] = drift.x;
        f[7] = drift.y;
        f[8] = kMeanFeatureScale * mean.x;
        f[9] = kMeanFeatureScale * mean.y;
        const double ps = kPaceSpread * (pace - kPaceCenter);
        for (int j = 0; j < 6; ++j) {
            f[10 + j] = ps * f[4 + j];
            f[16 + j] = ps * ps * f[4 + j];
        }
        f[22] = ps;
        f[23] = ps * ps;
        for (int j = 0; j < kTokenFeatures; ++j) f[j] *= kFeatureScale;
    }
    ag::NodePtr x = nn::linear(
        p.embed, ag::constant(cfg.t_pas, kTokenFeatures, std::move(feats)));
    if (cfg.positional_encoding)
        x = ag::add(x, positional_encoding(cfg.t_pas, cfg.d_model));
    std::vector<ag::NodePtr> layer_outs;
    layer_outs.reserve(p.traj_layers.size());
    for (std::size_t i = 0; i < p.traj_layers.size(); ++i) {
        x = nn::encoder_layer(p.traj_layers[i], x, ctx,
                              "trajectory encoder layer " + std::to_string(i));
        layer_outs.push_back(x);
    }
    ag::NodePtr cat = layer_outs.size() == 1 ? layer_outs[0] : ag::concat_cols(layer_outs);
    ag::NodePtr tokens = nn::linear(p.traj_proj, cat);
    nn::check_finite(tokens, "trajectory encoder output");
    return tokens;
}

/// Flattens each semantic class grid to a row and projects it to d_model.
/// Rows stay independent: class c only ever influences token c here.
inline ag::NodePtr encode_scene(const ShenetParams& p, const ModelConfig& cfg,
                                const SceneRaster& raster) {
    if (raster.n_cls != cfg.n_cls || raster.h != cfg.grid_h || raster.w != cfg.grid_w)
        throw DataError("encode_scene: raster shape does not match config");
    ag::NodePtr flat = ag::constant(raster.n_cls, raster.h * raster.w, raster.grid);
    ag::NodePtr tokens = nn::linear(p.scene_proj, flat);
    nn::check_finite(tokens, "scene encoder output");
    return tokens;
}

/// Runs the two parallel streams for each cross-modal layer. Both streams of
/// layer l read layer l-1's token pair.
inline std::pair<ag::NodePtr, ag::NodePtr> cross_modal_forward(
    const ShenetParams& p, const ModelConfig& cfg, ag::NodePtr traj_tokens,
    ag::NodePtr scene_tokens, const nn::ForwardCtx& ctx = {}) {
    (void)cfg;
    for (std::size_t i = 0; i < p.cross_traj.size(); ++i) {
        const std::string where = "cross-modal layer " + std::to_string(i);
        ag::NodePtr t_next = nn::cross_stream(p.cross_traj[i], traj_tokens, scene_tokens,
                                              ctx, where + " (trajectory stream)");
        ag::NodePtr s_next = nn::cross_stream(p.cross_scene[i], scene_tokens, traj_tokens,
                                              ctx, where + " (scene stream)");
        traj_tokens = std::move(t_next);
        scene_tokens = std::move(s_next);
    }
    return {traj_tokens, scene_tokens};
}

/// Concatenates the last trajectory token with the pooled scene tokens and
/// maps the pair to per-step offsets.
inline ag::NodePtr offset_head(const ShenetParams& p, const ModelConfig& cfg,
                               const ag::NodePtr& traj_tokens,
                               const ag::NodePtr& scene_tokens) {
    const ag::NodePtr last = ag::slice_rows(traj_tokens, traj_tokens->rows - 1,
                                            traj_tokens->rows);
    const ag::NodePtr pooled =
        cfg.gpl_max ? ag::max_rows(scene_tokens) : ag::mean_rows(scene_tokens);
    const ag::NodePtr h = ag::concat_cols({last, pooled});
    const ag::NodePtr hidden = ag::relu(nn::linear(p.head_hidden, h));
    return ag::reshape(nn::linear(p.head_out, hidden), cfg.t_fut, 2);
}

/// Whole-network forward: past + scene raster -> T_fut x 2 offset tensor.
inline ag::NodePtr forward_offsets(const ShenetParams& p, const ModelConfig& cfg,
                                   const Path& past, const SceneRaster& raster,
                                   const nn::ForwardCtx& ctx = {}) {
    auto [traj_ref, scene_ref] =
        cross_modal_forward(p, cfg, encode_trajectory(p, cfg, past, ctx),
                            encode_scene(p, cfg, raster), ctx);
    return offset_head(p, cfg, traj_ref, scene_ref);
}

inline Path to_path(const ag::NodePtr& t) {
    if (t->cols != 2) throw GraphError("to_path: tensor is not Nx2");
    Path p(static_cast<std::size_t>(t->rows));
    for (int i = 0; i < t->rows; ++i) p[i] = {t->at(i, 0), t->at(i, 1)};
    return p;
}

// -- Checkpoint I/O -------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    return {{"d_model", cfg.d_model},
            {"n_heads", cfg.n_heads},
            {"n_tra", cfg.n_tra},
            {"n_cro", cfg.n_cro},
            {"t_pas", cfg.t_pas},
            {"t_fut", cfg.t_fut},
            {"n_cls", cfg.n_cls},
            {"grid_h", cfg.grid_h},
            {"grid_w", cfg.grid_w},
            {"dropout", cfg.dropout},
            {"positional_encoding", cfg.positional_encoding},
            {"gpl_max", cfg.gpl_max}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.n_tra = j.at("n_tra").get<int>();
    cfg.n_cro = j.at("n_cro").get<int>();
    cfg.t_pas = j.at("t_pas").get<int>();
    cfg.t_fut = j.at("t_fut").get<int>();
    cfg.n_cls = j.at("n_cls").get<int>();
    cfg.grid_h = j.at("grid_h").get<int>();
    cfg.grid_w = j.at("grid_w").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.positional_encoding = j.at("positional_encoding").get<bool>();
    cfg.gpl_max = j.at("gpl_max").get<bool>();
    return cfg;
}

}  // namespace detail

inline void save_checkpoint(const ShenetParams& params, const ModelConfig& cfg,
                            const std::string& path) {
    nlohmann::json j;
    j["version"] = kCheckpointVersion;
    j["config"] = detail::config_to_json(cfg);
    nlohmann::json tensors;
    for (const auto& [name, node] : named_params(params))
        tensors[name] = {{"rows", node->rows}, {"cols", node->cols}, {"data", node->data}};
    j["tensors"] = std::move(tensors);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_checkpoint: cannot open '" + path + "'");
    out << j.dump() << "\n";
    if (!out) throw DataError("save_checkpoint: write failed for '" + path + "'");
}

/// Loads a checkpoint. When `expect` is given, a differing stored config is
/// rejected instead of silently reshaping the model.
inline std::pair<ShenetParams, ModelConfig> load_checkpoint(
    const std::string& path, const ModelConfig* expect = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_checkpoint: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_checkpoint: invalid JSON in '" + path + "': " + e.what());
    }
    ModelConfig cfg;
    try {
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw FormatError("load_checkpoint: unsupported version in '" + path + "'");
        cfg = detail::config_from_json(j.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_checkpoint: bad config in '" + path + "': " + e.what());
    }
    if (expect && !(cfg == *expect))
        throw ConfigError("load_checkpoint: stored config does not match expected config");
    ShenetParams params = init_params(cfg, 0);
    try {
        const auto& tensors = j.at("tensors");
        for (auto& [name, node] : named_params(params)) {
            const auto& t = tensors.at(name);
            if (t.at("rows").get<int>() != node->rows ||
                t.at("cols").get<int>() != node->cols)
                throw FormatError("load_checkpoint: tensor '" + name + "' has wrong shape");
            const auto data = t.at("data").get<std::vector<double>>();
            if (data.size() != node->size())
                throw FormatError("load_checkpoint: tensor '" + name + "' has wrong size");
            node->data = data;
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_checkpoint: missing tensor in '" + path + "': " + e.what());
    }
    return {std::move(params), cfg};
}

}  // namespace shenet
