#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "shenet/errors.hpp"

namespace shenet::ag {

/// One value in a reverse-mode computation graph. All tensors are 2-D
/// (scalars are 1x1); data and grad are row-major doubles.
struct Node {
    int rows{0};
    int cols{0};
    std::vector<double> data;
    std::vector<double> grad;  // sized only when requires_grad
    bool requires_grad{false};
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;  // accumulates this->grad into parents

    [[nodiscard]] std::size_t size() const { return data.size(); }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    [[nodiscard]] double at(int r, int c) const {
        return data[static_cast<std::size_t>(r) * cols + c];
    }
};

using NodePtr = std::shared_ptr<Node>;

inline NodePtr tensor(int rows, int cols, std::vector<double> data, bool requires_grad) {
    if (rows < 1 || cols < 1)
        throw GraphError("tensor: dimensions must be positive");
    if (data.size() != static_cast<std::size_t>(rows) * cols)
        throw GraphError("tensor: data size does not match shape");
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->data.size(), 0.0);
    return n;
}

inline NodePtr constant(int rows, int cols, std::vector<double> data) {
    return tensor(rows, cols, std::move(data), false);
}

inline NodePtr zeros(int rows, int cols, bool requires_grad) {
    return tensor(rows, cols,
                  std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0),
                  requires_grad);
}

namespace detail {

inline NodePtr result_node(int rows, int cols, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->data.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) n->grad.assign(n->data.size(), 0.0);
    n->parents = std::move(parents);
    return n;
}

inline void check_same_shape(const NodePtr& a, const NodePtr& b, const char* what) {
    if (a->rows != b->rows || a->cols != b->cols)
        throw GraphError(std::string(what) + ": shape mismatch (" +
                         std::to_string(a->rows) + "x" + std::to_string(a->cols) + " vs " +
                         std::to_string(b->rows) + "x" + std::to_string(b->cols) + ")");
}

}  // namespace detail

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
    detail::check_same_shape(a, b, "add");
    auto out = detail::result_node(a->rows, a->cols, {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, b]() {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += o->grad[i];
        };
    }
    return out;
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
    detail::check_same_shape(a, b, "sub");
    auto out = detail::result_node(a->rows, a->cols, {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, b]() {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] -= o->grad[i];
        };
    }
    return out;
}

/// Element-wise (Hadamard) product.
inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
    detail::check_same_shape(a, b, "mul");
    auto out = detail::result_node(a->rows, a->cols, {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, b]() {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->grad.size(); ++i)
                    a->grad[i] += o->grad[i] * b->data[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->grad.size(); ++i)
                    b->grad[i] += o->grad[i] * a->data[i];
        };
    }
    return out;
}

inline NodePtr scale(const NodePtr& a, double s) {
    auto out = detail::result_node(a->rows, a->cols, {a});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = s * a->data[i];
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, s]() {
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += s * o->grad[i];
        };
    }
    return out;
}

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    if (a->cols != b->rows)
        throw GraphError("matmul: inner dimensions differ (" + std::to_string(a->cols) +
                         " vs " + std::to_string(b->rows) + ")");
    auto out = detail::result_node(a->rows, b->cols, {a, b});
    const int m = a->rows, k = a->cols, n = b->cols;
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
            const double av = a->at(i, kk);
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) out->at(i, j) += av * b->at(kk, j);
        }
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, b, m, k, n]() {
            if (a->requires_grad)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double g = o->grad[static_cast<std::size_t>(i) * n + j];
                        if (g == 0.0) continue;
                        for (int kk = 0; kk < k; ++kk)
                            a->grad[static_cast<std::size_t>(i) * k + kk] += g * b->at(kk, j);
                    }
            if (b->requires_grad)
                for (int i = 0; i < m; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        const double av = a->at(i, kk);
                        if (av == 0.0) continue;
                        for (int j = 0; j < n; ++j)
                            b->grad[static_cast<std::size_t>(kk) * n + j] +=
                                av * o->grad[static_cast<std::size_t>(i) * n + j];
                    }
        };
    }
    return out;
}

/// Adds a 1xN row vector to every row of an MxN matrix.
inline NodePtr add_rowvec(const NodePtr& a, const NodePtr& v) {
    if (v->rows != 1 || v->cols != a->cols)
        throw GraphError("add_rowvec: vector must be 1x" + std::to_string(a->cols));
    auto out = detail::result_node(a->rows, a->cols, {a, v});
    for (int i = 0; i < a->rows; ++i)
        for (int j = 0; j < a->cols; ++j) out->at(i, j) = a->at(i, j) + v->data[j];
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, v]() {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i];
            if (v->requires_grad)
                for (int i = 0; i < o->rows; ++i)
                    for (int j = 0; j < o->cols; ++j)
                        v->grad[j] += o->grad[static_cast<std::size_t>(i) * o->cols + j];
        };
    }
    return out;
}

inline NodePtr transpose(const NodePtr& a) {
    auto out = detail::result_node(a->cols, a->rows, {a});
    for (int i = 0; i < a->rows; ++i)
        for (int j = 0; j < a->cols; ++j) out->at(j, i) = a->at(i, j);
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a]() {
            for (int i = 0; i < a->rows; ++i)
                for (int j = 0; j < a->cols; ++j)
                    a->grad[static_cast<std::size_t>(i) * a->cols + j] +=
                        o->grad[static_cast<std::size_t>(j) * o->cols + i];
        };
    }
    return out;
}

inline NodePtr relu(const NodePtr& a) {
    auto out = detail::result_node(a->rows, a->cols, {a});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = std::max(0.0, a->data[i]);
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a]() {
            for (std::size_t i = 0; i < a->grad.size(); ++i)
                if (a->data[i] > 0.0) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

/// Row-wise softmax with max subtraction for stability.
inline NodePtr softmax_rows(const NodePtr& a) {
    auto out = detail::result_node(a->rows, a->cols, {a});
    for (int i = 0; i < a->rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < a->cols; ++j) mx = std::max(mx, a->at(i, j));
        double sum = 0.0;
        for (int j = 0; j < a->cols; ++j) {
            const double e = std::exp(a->at(i, j) - mx);
            out->at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < a->cols; ++j) out->at(i, j) /= sum;
    }
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a]() {
            for (int i = 0; i < o->rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < o->cols; ++j)
                    dot += o->grad[static_cast<std::size_t>(i) * o->cols + j] * o->at(i, j);
                for (int j = 0; j < o->cols; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * o->cols + j;
                    a->grad[idx] += o->at(i, j) * (o->grad[idx] - dot);
                }
            }
        };
    }
    return out;
}

/// Row-wise layer normalization with learned 1xN gain/shift.
inline NodePtr layer_norm_rows(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                               double eps = 1e-5) {
    if (gamma->rows != 1 || gamma->cols != x->cols || beta->rows != 1 ||
        beta->cols != x->cols)
        throw GraphError("layer_norm_rows: gain/shift must be 1x" + std::to_string(x->cols));
    auto out = detail::result_node(x->rows, x->cols, {x, gamma, beta});
    const int n = x->cols;
    // Cache per-row statistics and normalized values for the backward pass.
    auto xhat = std::make_shared<std::vector<double>>(x->size());
    auto inv_std = std::make_shared<std::vector<double>>(x->rows);
    for (int i = 0; i < x->rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += x->at(i, j);
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = x->at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (int j = 0; j < n; ++j) {
            const double h = (x->at(i, j) - mean) * is;
            (*xhat)[static_cast<std::size_t>(i) * n + j] = h;
            out->at(i, j) = gamma->data[j] * h + beta->data[j];
        }
    }
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, x, gamma, beta, xhat, inv_std, n]() {
            for (int i = 0; i < o->rows; ++i) {
                const std::size_t row = static_cast<std::size_t>(i) * n;
                if (x->requires_grad) {
                    double sum_dh = 0.0, sum_dh_h = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double dh = o->grad[row + j] * gamma->data[j];
                        sum_dh += dh;
                        sum_dh_h += dh * (*xhat)[row + j];
                    }
                    for (int j = 0; j < n; ++j) {
                        const double dh = o->grad[row + j] * gamma->data[j];
                        x->grad[row + j] += (*inv_std)[i] *
                                            (dh - sum_dh / n - (*xhat)[row + j] * sum_dh_h / n);
                    }
                }
                if (gamma->requires_grad)
                    for (int j = 0; j < n; ++j)
                        gamma->grad[j] += o->grad[row + j] * (*xhat)[row + j];
                if (beta->requires_grad)
                    for (int j = 0; j < n; ++j) beta->grad[j] += o->grad[row + j];
            }
        };
    }
    return out;
}

/// Side-by-side column concatenation of same-height matrices.
inline NodePtr concat_cols(const std::vector<NodePtr>& xs) {
    if (xs.empty()) throw GraphError("concat_cols: nothing to concatenate");
    int cols = 0;
    for (const auto& x : xs) {
        if (x->rows != xs[0]->rows) throw GraphError("concat_cols: row counts differ");
        cols += x->cols;
    }
    auto out = detail::result_node(xs[0]->rows, cols, xs);
    int off = 0;
    for (const auto& x : xs) {
        for (int i = 0; i < x->rows; ++i)
            for (int j = 0; j < x->cols; ++j) out->at(i, off + j) = x->at(i, j);
        off += x->cols;
    }
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, xs]() {
            int off = 0;
            for (const auto& x : xs) {
                if (x->requires_grad)
                    for (int i = 0; i < x->rows; ++i)
                        for (int j = 0; j < x->cols; ++j)
                            x->grad[static_cast<std::size_t>(i) * x->cols + j] +=
                                o->grad[static_cast<std::size_t>(i) * o->cols + off + j];
                off += x->cols;
            }
        };
    }
    return out;
}

inline NodePtr slice_cols(const NodePtr& a, int c0, int c1) {
    if (c0 < 0 || c1 <= c0 || c1 > a->cols) throw GraphError("slice_cols: bad range");
    auto out = detail::result_node(a->rows, c1 - c0, {a});
    for (int i = 0; i < a->rows; ++i)
        for (int j = c0; j < c1; ++j) out->at(i, j - c0) = a->at(i, j);
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, c0]() {
            for (int i = 0; i < o->rows; ++i)
                for (int j = 0; j < o->cols; ++j)
                    a->grad[static_cast<std::size_t>(i) * a->cols + c0 + j] +=
                        o->grad[static_cast<std::size_t>(i) * o->cols + j];
        };
    }
    return out;
}

inline NodePtr slice_rows(const NodePtr& a, int r0, int r1) {
    if (r0 < 0 || r1 <= r0 || r1 > a->rows) throw GraphError("slice_rows: bad range");
    auto out = detail::result_node(r1 - r0, a->cols, {a});
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < a->cols; ++j) out->at(i - r0, j) = a->at(i, j);
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, r0]() {
            for (int i = 0; i < o->rows; ++i)
                for (int j = 0; j < o->cols; ++j)
                    a->grad[static_cast<std::size_t>(r0 + i) * a->cols + j] +=
                        o->grad[static_cast<std::size_t>(i) * o->cols + j];
        };
    }
    return out;
}

/// Column means: MxN -> 1xN.
inline NodePtr mean_rows(const NodePtr& a) {
    auto out = detail::result_node(1, a->cols, {a});
    for (int i = 0; i < a->rows; ++i)
        for (int j = 0; j < a->cols; ++j) out->data[j] += a->at(i, j);
    for (int j = 0; j < a->cols; ++j) out->data[j] /= a->rows;
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a]() {
            const double inv = 1.0 / a->rows;
            for (int i = 0; i < a->rows; ++i)
                for (int j = 0; j < a->cols; ++j)
                    a->grad[static_cast<std::size_t>(i) * a->cols + j] += o->grad[j] * inv;
        };
    }
    return out;
}

/// Column-wise max: MxN -> 1xN; gradient flows to the first maximal row.
inline NodePtr max_rows(const NodePtr& a) {
    auto out = detail::result_node(1, a->cols, {a});
    auto argmax = std::make_shared<std::vector<int>>(a->cols, 0);
    for (int j = 0; j < a->cols; ++j) {
        double best = a->at(0, j);
        for (int i = 1; i < a->rows; ++i)
            if (a->at(i, j) > best) {
                best = a->at(i, j);
                (*argmax)[j] = i;
            }
        out->data[j] = best;
    }
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, argmax]() {
            for (int j = 0; j < o->cols; ++j)
                a->grad[static_cast<std::size_t>((*argmax)[j]) * a->cols + j] += o->grad[j];
        };
    }
    return out;
}

/// Same data, new shape (row-major order preserved).
inline NodePtr reshape(const NodePtr& a, int rows, int cols) {
    if (static_cast<std::size_t>(rows) * cols != a->size())
        throw GraphError("reshape: element count changes");
    auto out = detail::result_node(rows, cols, {a});
    out->data = a->data;
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a]() {
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

inline NodePtr sum_all(const NodePtr& a) {
    auto out = detail::result_node(1, 1, {a});
    for (double v : a->data) out->data[0] += v;
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a]() {
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[0];
        };
    }
    return out;
}

/// Inverted dropout: keeps each element with probability 1-p and rescales by
/// 1/(1-p). Call only while training with p > 0.
inline NodePtr dropout(const NodePtr& a, double p, std::mt19937_64& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw GraphError("dropout: p must be in [0, 1)");
    if (p == 0.0) return a;
    auto out = detail::result_node(a->rows, a->cols, {a});
    auto mask = std::make_shared<std::vector<double>>(a->size());
    std::bernoulli_distribution keep(1.0 - p);
    const double inv_keep = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < a->size(); ++i) {
        (*mask)[i] = keep(rng) ? inv_keep : 0.0;
        out->data[i] = a->data[i] * (*mask)[i];
    }
    if (out->requires_grad) {
        Node* o = out.get();
        out->backward_fn = [o, a, mask]() {
            for (std::size_t i = 0; i < a->grad.size(); ++i)
                a->grad[i] += o->grad[i] * (*mask)[i];
        };
    }
    return out;
}

/// Reverse-mode differentiation from a scalar loss. Gradients accumulate
/// into every reachable requires_grad node; call zero_grad on parameters
/// between steps.
inline void backward(const NodePtr& loss) {
    if (loss->rows != 1 || loss->cols != 1)
        throw GraphError("backward: loss must be a 1x1 scalar");
    if (!loss->requires_grad)
        throw GraphError("backward: loss does not depend on any parameter");

    // Iterative post-order topological sort over the parent DAG.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second)
                stack.push_back({parent, 0});
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    loss->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn();
}

inline void zero_grad(const std::vector<NodePtr>& params) {
    for (const auto& p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

// -- Adam ---------------------------------------------------------------------

struct AdamConfig {
    double lr{1e-3};
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
};

struct AdamState {
    std::int64_t t{0};
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update over the parameter list, reading each
/// parameter's accumulated gradient.
inline void adam_step(const std::vector<NodePtr>& params, AdamState& state,
                      const AdamConfig& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->size(), 0.0);
            state.v[i].assign(params[i]->size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw GraphError("adam_step: state does not match parameter list");
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        if (!p.requires_grad || p.grad.size() != p.size())
            throw GraphError("adam_step: parameter " + std::to_string(i) + " has no gradient");
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = p.grad[j];
            state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g;
            state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            p.data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace shenet::ag
