#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "shenet/errors.hpp"
#include "shenet/smoothing.hpp"
#include "shenet/tensor.hpp"
#include "shenet/types.hpp"

namespace shenet::nn {

using ag::NodePtr;

/// Options threaded through a forward pass: dropout is active only while a
/// training RNG is supplied; `attn` collects every attention matrix built.
struct ForwardCtx {
    double dropout{0.0};
    std::mt19937_64* rng{nullptr};
    std::vector<NodePtr>* attn{nullptr};
};

inline void check_finite(const NodePtr& x, const std::string& what) {
    for (double v : x->data)
        if (!std::isfinite(v)) throw NumericError(what + ": non-finite value");
}

namespace detail {

inline NodePtr maybe_dropout(const NodePtr& x, const ForwardCtx& ctx) {
    if (ctx.rng && ctx.dropout > 0.0) return ag::dropout(x, ctx.dropout, *ctx.rng);
    return x;
}

}  // namespace detail

struct Linear {
    NodePtr w;  // in x out
    NodePtr b;  // 1 x out
};

inline NodePtr linear(const Linear& l, const NodePtr& x) {
    return ag::add_rowvec(ag::matmul(x, l.w), l.b);
}

struct LayerNorm {
    NodePtr gamma;  // 1 x d
    NodePtr beta;   // 1 x d
};

inline NodePtr layer_norm(const LayerNorm& ln, const NodePtr& x) {
    return ag::layer_norm_rows(x, ln.gamma, ln.beta);
}

struct MultiHeadAttention {
    Linear q, k, v, out;
    int n_heads{1};
};

/// Scaled dot-product attention. Queries come from `query_in`, keys and
/// values from `kv_in` (pass the same tensor for self-attention).
inline NodePtr attention(const MultiHeadAttention& mha, const NodePtr& query_in,
                         const NodePtr& kv_in, const ForwardCtx& ctx = {}) {
    const int d = mha.q.w->cols;
    if (d % mha.n_heads != 0)
        throw GraphError("attention: d_model not divisible by head count");
    const int dh = d / mha.n_heads;
    const NodePtr q = linear(mha.q, query_in);
    const NodePtr k = linear(mha.k, kv_in);
    const NodePtr v = linear(mha.v, kv_in);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<NodePtr> heads;
    heads.reserve(mha.n_heads);
    for (int h = 0; h < mha.n_heads; ++h) {
        const NodePtr qh = ag::slice_cols(q, h * dh, (h + 1) * dh);
        const NodePtr kh = ag::slice_cols(k, h * dh, (h + 1) * dh);
        const NodePtr vh = ag::slice_cols(v, h * dh, (h + 1) * dh);
        const NodePtr scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
        const NodePtr weights = ag::softmax_rows(scores);
        if (ctx.attn) ctx.attn->push_back(weights);
        heads.push_back(ag::matmul(weights, vh));
    }
    const NodePtr cat = mha.n_heads == 1 ? heads[0] : ag::concat_cols(heads);
    return detail::maybe_dropout(linear(mha.out, cat), ctx);
}

struct FeedForward {
    Linear in;   // d -> hidden
    Linear out;  // hidden -> d
};

inline NodePtr feed_forward(const FeedForward& ff, const NodePtr& x, const ForwardCtx& ctx = {}) {
    return linear(ff.out, detail::maybe_dropout(ag::relu(linear(ff.in, x)), ctx));
}

/// Post-norm transformer encoder layer:
/// x = LN(x + SA(x)); x = LN(x + FF(x)).
struct EncoderLayer {
    MultiHeadAttention sa;
    LayerNorm ln1;
    FeedForward ff;
    LayerNorm ln2;
};

inline NodePtr encoder_layer(const EncoderLayer& layer, const NodePtr& x,
                             const ForwardCtx& ctx, const std::string& where) {
    NodePtr h = layer_norm(layer.ln1, ag::add(x, attention(layer.sa, x, x, ctx)));
    h = layer_norm(layer.ln2, ag::add(h, feed_forward(layer.ff, h, ctx)));
    check_finite(h, where);
    return h;
}

/// One stream of a cross-modal layer: cross-attend to the other modality,
/// self-attend, feed forward, each wrapped in residual + layer norm.
struct CrossStream {
    MultiHeadAttention ca;
    LayerNorm ln1;
    MultiHeadAttention sa;
    LayerNorm ln2;
    FeedForward ff;
    LayerNorm ln3;
};

inline NodePtr cross_stream(const CrossStream& s, const NodePtr& x, const NodePtr& other,
                            const ForwardCtx& ctx, const std::string& where) {
    NodePtr h = layer_norm(s.ln1, ag::add(x, attention(s.ca, x, other, ctx)));
    h = layer_norm(s.ln2, ag::add(h, attention(s.sa, h, h, ctx)));
    h = layer_norm(s.ln3, ag::add(h, feed_forward(s.ff, h, ctx)));
    check_finite(h, where);
    return h;
}

// -- Losses --------------------------------------------------------------------

inline NodePtr path_constant(const Path& p) {
    return ag::constant(static_cast<int>(p.size()), 2, flatten(p));
}

/// Mean over time of the squared L2 displacement: (1/T) sum_t |pred_t - gt_t|^2.
inline NodePtr loss_tra(const NodePtr& pred, const Path& gt) {
    if (pred->rows != static_cast<int>(gt.size()) || pred->cols != 2)
        throw GraphError("loss_tra: prediction shape does not match ground truth");
    if (gt.empty()) throw GraphError("loss_tra: empty ground truth");
    const NodePtr diff = ag::sub(pred, path_constant(gt));
    return ag::scale(ag::sum_all(ag::mul(diff, diff)), 1.0 / static_cast<double>(gt.size()));
}

/// loss_tra against the curve-smoothed ground truth. The smoothed target is a
/// constant, so gradients reach the prediction only.
inline NodePtr loss_cs(const NodePtr& pred, const Path& gt, ControlRule rule) {
    return loss_tra(pred, smooth_trajectory(gt, rule));
}

}  // namespace shenet::nn
