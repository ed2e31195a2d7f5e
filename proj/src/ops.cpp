#include "textgraph/ops.hpp"
#include "textgraph/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace textgraph::ops {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

void record(std::function<void()> fn) { Tape::active()->record(std::move(fn)); }

MatMap gmat(const NodePtr& n, index_t r, index_t c) { return MatMap(n->ensure_grad().data(), r, c); }
ConstMatMap vmat(const NodePtr& n, index_t r, index_t c) { return ConstMatMap(n->value.data(), r, c); }
ConstMatMap ograd(const NodePtr& n, index_t r, index_t c) { return ConstMatMap(n->grad.data(), r, c); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

void require_rank2(const char* op, const Tensor& a) {
    if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + a.shape_str());
}

void check_index(const char* op, std::span<const index_t> index, index_t bound) {
    for (auto i : index) {
        if (i < 0 || i >= bound) {
            throw IndexError(std::string(op) + ": index " + std::to_string(i) + " out of range [0, " +
                             std::to_string(bound) + ")");
        }
    }
}

// Elementwise map y = f(x) with dy/dx = df(x, y).
template <class F, class D>
Tensor unary(const Tensor& x, F f, D df) {
    auto out = Tensor::zeros(x.shape());
    const auto n = static_cast<std::size_t>(x.numel());
    const real* xv = x.data();
    real* yv = out.data();
    for (std::size_t i = 0; i < n; ++i) yv[i] = f(xv[i]);
    if (needs_grad({&x})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), Y = out.node();
        record([X, Y, df, n] {
            if (Y->grad.empty()) return;
            auto& gx = X->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) gx[i] += Y->grad[i] * df(X->value[i], Y->value[i]);
        });
    }
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    }
    const auto n = a.dim(0), k = a.dim(1), m = b.dim(1);
    auto out = Tensor::zeros({n, m});
    out.mat().noalias() = a.mat() * b.mat();
    if (needs_grad({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr A = a.node(), B = b.node(), Y = out.node();
        record([A, B, Y, n, k, m] {
            if (Y->grad.empty()) return;
            auto dy = ograd(Y, n, m);
            if (A->requires_grad) gmat(A, n, k).noalias() += dy * vmat(B, k, m).transpose();
            if (B->requires_grad) gmat(B, k, m).noalias() += vmat(A, n, k).transpose() * dy;
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
        throw ShapeError("linear: incompatible input " + x.shape_str() + " and weight " + w.shape_str());
    }
    const auto n = x.dim(0), in = x.dim(1), o = w.dim(0);
    if (b.defined() && b.numel() != o) {
        throw ShapeError("linear: bias " + b.shape_str() + " for weight " + w.shape_str());
    }
    auto out = Tensor::zeros({n, o});
    auto y = out.mat();
    y.noalias() = x.mat() * w.mat().transpose();
    if (b.defined()) {
        Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>> bv(b.data(), o);
        y.rowwise() += bv;
    }
    if (needs_grad({&x, &w, &b})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), W = w.node(), Y = out.node();
        NodePtr B = b.defined() ? b.node() : nullptr;
        record([X, W, B, Y, n, in, o] {
            if (Y->grad.empty()) return;
            auto dy = ograd(Y, n, o);
            if (X->requires_grad) gmat(X, n, in).noalias() += dy * vmat(W, o, in);
            if (W->requires_grad) gmat(W, o, in).noalias() += dy.transpose() * vmat(X, n, in);
            if (B && B->requires_grad) gmat(B, 1, o) += dy.colwise().sum();
        });
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    require_rank2("transpose", x);
    const auto r = x.dim(0), c = x.dim(1);
    auto out = Tensor::zeros({c, r});
    out.mat() = x.mat().transpose();
    if (needs_grad({&x})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), Y = out.node();
        record([X, Y, r, c] {
            if (Y->grad.empty()) return;
            gmat(X, r, c) += ograd(Y, c, r).transpose();
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    auto out = Tensor::zeros(a.shape());
    const auto n = static_cast<std::size_t>(a.numel());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (needs_grad({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr A = a.node(), B = b.node(), Y = out.node();
        record([A, B, Y, n] {
            if (Y->grad.empty()) return;
            for (auto* t : {A.get(), B.get()}) {
                if (!t->requires_grad) continue;
                auto& g = t->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += Y->grad[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    auto out = Tensor::zeros(a.shape());
    const auto n = static_cast<std::size_t>(a.numel());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (needs_grad({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr A = a.node(), B = b.node(), Y = out.node();
        record([A, B, Y, n] {
            if (Y->grad.empty()) return;
            if (A->requires_grad) {
                auto& g = A->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += Y->grad[i];
            }
            if (B->requires_grad) {
                auto& g = B->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] -= Y->grad[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    auto out = Tensor::zeros(a.shape());
    const auto n = static_cast<std::size_t>(a.numel());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (needs_grad({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr A = a.node(), B = b.node(), Y = out.node();
        record([A, B, Y, n] {
            if (Y->grad.empty()) return;
            if (A->requires_grad) {
                auto& g = A->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += Y->grad[i] * B->value[i];
            }
            if (B->requires_grad) {
                auto& g = B->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += Y->grad[i] * A->value[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, real s) {
    return unary(a, [s](real x) { return x * s; }, [s](real, real) { return s; });
}

Tensor add_row(const Tensor& x, const Tensor& b) {
    require_rank2("add_row", x);
    if (b.numel() != x.dim(1)) throw ShapeError("add_row: row " + b.shape_str() + " for matrix " + x.shape_str());
    const auto n = x.dim(0), d = x.dim(1);
    auto out = x.detach();
    Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>> bv(b.data(), d);
    out.mat().rowwise() += bv;
    if (needs_grad({&x, &b})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), B = b.node(), Y = out.node();
        record([X, B, Y, n, d] {
            if (Y->grad.empty()) return;
            auto dy = ograd(Y, n, d);
            if (X->requires_grad) gmat(X, n, d) += dy;
            if (B->requires_grad) gmat(B, 1, d) += dy.colwise().sum();
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    return unary(x, [](real v) { return v > 0 ? v : real(0); }, [](real v, real) { return v > 0 ? real(1) : real(0); });
}

Tensor leaky_relu(const Tensor& x, real slope) {
    return unary(
        x, [slope](real v) { return v > 0 ? v : slope * v; },
        [slope](real v, real) { return v > 0 ? real(1) : slope; });
}

Tensor elu(const Tensor& x, real alpha) {
    return unary(
        x, [alpha](real v) { return v > 0 ? v : alpha * std::expm1(v); },
        [alpha](real v, real y) { return v > 0 ? real(1) : y + alpha; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, [](real v) { return real(1) / (real(1) + std::exp(-v)); }, [](real, real y) { return y * (real(1) - y); });
}

Tensor sin(const Tensor& x) {
    return unary(x, [](real v) { return std::sin(v); }, [](real v, real) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
    return unary(x, [](real v) { return std::cos(v); }, [](real v, real) { return -std::sin(v); });
}

Tensor exp(const Tensor& x) {
    return unary(x, [](real v) { return std::exp(v); }, [](real, real y) { return y; });
}

Tensor sqrt(const Tensor& x) {
    return unary(x, [](real v) { return std::sqrt(v); }, [](real, real y) { return real(0.5) / y; });
}

Tensor dropout(const Tensor& x, real p, bool training, Rng& rng) {
    if (p < 0 || p >= 1) throw ArgumentError("dropout: p must be in [0, 1)");
    if (!training || p == 0) return x;
    const auto n = static_cast<std::size_t>(x.numel());
    const real keep_scale = real(1) / (real(1) - p);
    std::vector<real> mask(n);
    for (auto& m : mask) m = rng.uniform() < static_cast<double>(p) ? real(0) : keep_scale;
    auto out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * mask[i];
    if (needs_grad({&x})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), Y = out.node();
        record([X, Y, mask = std::move(mask), n] {
            if (Y->grad.empty()) return;
            auto& g = X->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) g[i] += Y->grad[i] * mask[i];
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const auto n = parts[0].rows();
    index_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != n) {
            throw ShapeError("concat_cols: row mismatch " + parts[0].shape_str() + " vs " + p.shape_str());
        }
        total += p.cols();
    }
    auto out = Tensor::zeros({n, total});
    auto y = out.mat();
    index_t c = 0;
    std::vector<index_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(c);
        y.middleCols(c, p.cols()) = p.mat();
        c += p.cols();
    }
    std::vector<const Tensor*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    bool track = false;
    if (Tape::active()) {
        for (const auto& p : parts) track = track || p.requires_grad();
    }
    if (track) {
        out.set_requires_grad(true);
        std::vector<NodePtr> nodes;
        std::vector<index_t> widths;
        for (const auto& p : parts) {
            nodes.push_back(p.node());
            widths.push_back(p.cols());
        }
        NodePtr Y = out.node();
        record([nodes, widths, offsets, Y, n, total] {
            if (Y->grad.empty()) return;
            auto dy = ograd(Y, n, total);
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (!nodes[i]->requires_grad) continue;
                gmat(nodes[i], n, widths[i]) += dy.middleCols(offsets[i], widths[i]);
            }
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, index_t begin, index_t end) {
    const auto n = x.rows(), c = x.cols();
    if (begin < 0 || end > c || begin >= end) {
        throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + x.shape_str());
    }
    const auto w = end - begin;
    auto out = Tensor::zeros({n, w});
    out.mat() = x.mat().middleCols(begin, w);
    if (needs_grad({&x})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), Y = out.node();
        record([X, Y, n, c, begin, w] {
            if (Y->grad.empty()) return;
            gmat(X, n, c).middleCols(begin, w) += ograd(Y, n, w);
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, index_t begin, index_t end) {
    const auto n = x.rows(), c = x.cols();
    if (begin < 0 || end > n || begin >= end) {
        throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + x.shape_str());
    }
    const auto h = end - begin;
    auto out = Tensor::zeros({h, c});
    out.mat() = x.mat().middleRows(begin, h);
    if (needs_grad({&x})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), Y = out.node();
        record([X, Y, n, c, begin, h] {
            if (Y->grad.empty()) return;
            gmat(X, n, c).middleRows(begin, h) += ograd(Y, h, c);
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& x, std::span<const index_t> index) {
    const auto n = x.rows(), c = x.cols();
    check_index("gather_rows", index, n);
    const auto m = static_cast<index_t>(index.size());
    auto out = x.rank() == 1 ? Tensor::zeros({m}) : Tensor::zeros({m, c});
    auto y = MatMap(out.data(), m, c);
    auto xv = x.mat();
    for (index_t i = 0; i < m; ++i) y.row(i) = xv.row(index[static_cast<std::size_t>(i)]);
    if (needs_grad({&x})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), Y = out.node();
        std::vector<index_t> idx(index.begin(), index.end());
        record([X, Y, idx = std::move(idx), n, c, m] {
            if (Y->grad.empty()) return;
            auto gx = gmat(X, n, c);
            auto dy = ograd(Y, m, c);
            for (index_t i = 0; i < m; ++i) gx.row(idx[static_cast<std::size_t>(i)]) += dy.row(i);
        });
    }
    return out;
}

Tensor scatter_reduce(const Tensor& x, std::span<const index_t> index, index_t n_out, Reduce mode) {
    const auto m = x.rows(), c = x.cols();
    if (static_cast<index_t>(index.size()) != m) {
        throw ShapeError("scatter_reduce: " + std::to_string(index.size()) + " indices for " + x.shape_str());
    }
    check_index("scatter_reduce", index, n_out);
    auto out = x.rank() == 1 ? Tensor::zeros({n_out}) : Tensor::zeros({n_out, c});
    auto y = MatMap(out.data(), n_out, c);
    auto xv = x.mat();
    std::vector<index_t> count(static_cast<std::size_t>(n_out), 0);
    std::vector<index_t> argmax;
    if (mode == Reduce::max) {
        argmax.assign(static_cast<std::size_t>(n_out * c), -1);
        for (index_t i = 0; i < m; ++i) {
            const auto b = index[static_cast<std::size_t>(i)];
            for (index_t j = 0; j < c; ++j) {
                auto& am = argmax[static_cast<std::size_t>(b * c + j)];
                if (am < 0 || xv(i, j) > y(b, j)) {
                    am = i;
                    y(b, j) = xv(i, j);
                }
            }
        }
    } else {
        for (index_t i = 0; i < m; ++i) {
            const auto b = index[static_cast<std::size_t>(i)];
            y.row(b) += xv.row(i);
            ++count[static_cast<std::size_t>(b)];
        }
        if (mode == Reduce::mean) {
            for (index_t b = 0; b < n_out; ++b) {
                if (count[static_cast<std::size_t>(b)] > 0) y.row(b) /= static_cast<real>(count[static_cast<std::size_t>(b)]);
            }
        }
    }
    if (needs_grad({&x})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), Y = out.node();
        std::vector<index_t> idx(index.begin(), index.end());
        record([X, Y, idx = std::move(idx), count = std::move(count), argmax = std::move(argmax), m, c, n_out, mode] {
            if (Y->grad.empty()) return;
            auto gx = gmat(X, m, c);
            auto dy = ograd(Y, n_out, c);
            if (mode == Reduce::max) {
                for (index_t b = 0; b < n_out; ++b) {
                    for (index_t j = 0; j < c; ++j) {
                        const auto am = argmax[static_cast<std::size_t>(b * c + j)];
                        if (am >= 0) gx(am, j) += dy(b, j);
                    }
                }
                return;
            }
            for (index_t i = 0; i < m; ++i) {
                const auto b = idx[static_cast<std::size_t>(i)];
                if (mode == Reduce::mean) {
                    gx.row(i) += dy.row(b) / static_cast<real>(count[static_cast<std::size_t>(b)]);
                } else {
                    gx.row(i) += dy.row(b);
                }
            }
        });
    }
    return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    const auto n = x.rows(), c = x.cols();
    if (s.numel() != n) throw ShapeError("scale_rows: scales " + s.shape_str() + " for " + x.shape_str());
    auto out = Tensor::zeros(x.shape());
    auto y = out.mat();
    auto xv = x.mat();
    for (index_t i = 0; i < n; ++i) y.row(i) = xv.row(i) * s[i];
    if (needs_grad({&x, &s})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), S = s.node(), Y = out.node();
        record([X, S, Y, n, c] {
            if (Y->grad.empty()) return;
            auto dy = ograd(Y, n, c);
            if (X->requires_grad) {
                auto gx = gmat(X, n, c);
                for (index_t i = 0; i < n; ++i) gx.row(i) += dy.row(i) * S->value[static_cast<std::size_t>(i)];
            }
            if (S->requires_grad) {
                auto& gs = S->ensure_grad();
                auto xv = vmat(X, n, c);
                for (index_t i = 0; i < n; ++i) gs[static_cast<std::size_t>(i)] += dy.row(i).dot(xv.row(i));
            }
        });
    }
    return out;
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
    require_same_shape("row_dot", a, b);
    const auto n = a.rows(), c = a.cols();
    auto out = Tensor::zeros({n});
    auto av = a.mat();
    auto bv = b.mat();
    for (index_t i = 0; i < n; ++i) out.data()[i] = av.row(i).dot(bv.row(i));
    if (needs_grad({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr A = a.node(), B = b.node(), Y = out.node();
        record([A, B, Y, n, c] {
            if (Y->grad.empty()) return;
            if (A->requires_grad) {
                auto ga = gmat(A, n, c);
                auto bv = vmat(B, n, c);
                for (index_t i = 0; i < n; ++i) ga.row(i) += Y->grad[static_cast<std::size_t>(i)] * bv.row(i);
            }
            if (B->requires_grad) {
                auto gb = gmat(B, n, c);
                auto av = vmat(A, n, c);
                for (index_t i = 0; i < n; ++i) gb.row(i) += Y->grad[static_cast<std::size_t>(i)] * av.row(i);
            }
        });
    }
    return out;
}

Tensor segment_softmax(const Tensor& scores, std::span<const index_t> segment_of, index_t n_segments, real scale) {
    const auto E = scores.numel();
    if (static_cast<index_t>(segment_of.size()) != E) {
        throw ShapeError("segment_softmax: " + std::to_string(segment_of.size()) + " segment ids for " +
                         scores.shape_str());
    }
    check_index("segment_softmax", segment_of, n_segments);
    const auto ns = static_cast<std::size_t>(n_segments);
    std::vector<real> seg_max(ns, -std::numeric_limits<real>::infinity());
    std::vector<real> seg_sum(ns, real(0));
    const real* s = scores.data();
    for (index_t e = 0; e < E; ++e) {
        auto& mx = seg_max[static_cast<std::size_t>(segment_of[static_cast<std::size_t>(e)])];
        mx = std::max(mx, s[e]);
    }
    // Unscaled probabilities are kept for the backward pass.
    std::vector<real> prob(static_cast<std::size_t>(E));
    for (index_t e = 0; e < E; ++e) {
        const auto g = static_cast<std::size_t>(segment_of[static_cast<std::size_t>(e)]);
        prob[static_cast<std::size_t>(e)] = std::exp(s[e] - seg_max[g]);
        seg_sum[g] += prob[static_cast<std::size_t>(e)];
    }
    auto out = Tensor::zeros({E});
    for (index_t e = 0; e < E; ++e) {
        const auto g = static_cast<std::size_t>(segment_of[static_cast<std::size_t>(e)]);
        prob[static_cast<std::size_t>(e)] /= seg_sum[g];
        out.data()[e] = prob[static_cast<std::size_t>(e)] * scale;
    }
    if (needs_grad({&scores})) {
        out.set_requires_grad(true);
        NodePtr S = scores.node(), Y = out.node();
        std::vector<index_t> seg(segment_of.begin(), segment_of.end());
        record([S, Y, seg = std::move(seg), prob = std::move(prob), ns, E, scale] {
            if (Y->grad.empty()) return;
            std::vector<real> dot(ns, real(0));
            for (index_t e = 0; e < E; ++e) {
                dot[static_cast<std::size_t>(seg[static_cast<std::size_t>(e)])] +=
                    prob[static_cast<std::size_t>(e)] * Y->grad[static_cast<std::size_t>(e)];
            }
            auto& gs = S->ensure_grad();
            for (index_t e = 0; e < E; ++e) {
                const auto i = static_cast<std::size_t>(e);
                gs[i] += scale * prob[i] * (Y->grad[i] - dot[static_cast<std::size_t>(seg[i])]);
            }
        });
    }
    return out;
}

Tensor feature_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    require_rank2("feature_norm", x);
    const auto n = x.dim(0), d = x.dim(1);
    if (n < 1) throw ShapeError("feature_norm: no rows");
    if (gamma.numel() != d || beta.numel() != d) {
        throw ShapeError("feature_norm: gamma " + gamma.shape_str() + " / beta " + beta.shape_str() + " for " +
                         x.shape_str());
    }
    auto xv = x.mat();
    Eigen::Matrix<real, 1, Eigen::Dynamic> mu = xv.colwise().mean();
    Matrix xhat = xv.rowwise() - mu;
    Eigen::Matrix<real, 1, Eigen::Dynamic> var = xhat.array().square().colwise().sum() / static_cast<real>(n);
    Eigen::Matrix<real, 1, Eigen::Dynamic> inv_std = (var.array() + eps).rsqrt();
    xhat.array().rowwise() *= inv_std.array();
    Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>> g(gamma.data(), d);
    Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>> b(beta.data(), d);
    auto out = Tensor::zeros({n, d});
    out.mat() = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
    if (needs_grad({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), G = gamma.node(), B = beta.node(), Y = out.node();
        record([X, G, B, Y, xhat = std::move(xhat), inv_std, n, d] {
            if (Y->grad.empty()) return;
            auto dy = ograd(Y, n, d);
            if (G->requires_grad) gmat(G, 1, d) += (dy.array() * xhat.array()).colwise().sum().matrix();
            if (B->requires_grad) gmat(B, 1, d) += dy.colwise().sum();
            if (X->requires_grad) {
                Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>> gv(G->value.data(), d);
                Matrix dxhat = dy.array().rowwise() * gv.array();
                Eigen::Matrix<real, 1, Eigen::Dynamic> s1 = dxhat.colwise().sum();
                Eigen::Matrix<real, 1, Eigen::Dynamic> s2 = (dxhat.array() * xhat.array()).colwise().sum();
                const real inv_n = real(1) / static_cast<real>(n);
                auto gx = gmat(X, n, d);
                for (index_t i = 0; i < n; ++i) {
                    gx.row(i).array() += inv_std.array() *
                                         (dxhat.row(i).array() - s1.array() * inv_n - xhat.row(i).array() * s2.array() * inv_n);
                }
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    real total = 0;
    for (auto v : x.values()) total += v;
    auto out = Tensor::scalar(total);
    if (needs_grad({&x})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), Y = out.node();
        record([X, Y] {
            if (Y->grad.empty()) return;
            auto& g = X->ensure_grad();
            for (auto& v : g) v += Y->grad[0];
        });
    }
    return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), real(1) / static_cast<real>(std::max<index_t>(1, x.numel()))); }

Matrix softmax_rows(const Tensor& logits) {
    Matrix p = logits.mat();
    for (index_t i = 0; i < p.rows(); ++i) {
        p.row(i).array() -= p.row(i).maxCoeff();
        p.row(i) = p.row(i).array().exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_rank2("cross_entropy", logits);
    const auto n = logits.dim(0), C = logits.dim(1);
    if (static_cast<index_t>(labels.size()) != n) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + logits.shape_str());
    }
    for (auto l : labels) {
        if (l < 0 || l >= C) throw IndexError("cross_entropy: label " + std::to_string(l) + " out of range");
    }
    Matrix p = softmax_rows(logits);
    auto lv = logits.mat();
    real loss = 0;
    for (index_t i = 0; i < n; ++i) {
        const auto y = labels[static_cast<std::size_t>(i)];
        const real mx = lv.row(i).maxCoeff();
        const real lse = mx + std::log((lv.row(i).array() - mx).exp().sum());
        loss += lse - lv(i, y);
    }
    auto out = Tensor::scalar(loss / static_cast<real>(n));
    if (needs_grad({&logits})) {
        out.set_requires_grad(true);
        NodePtr L = logits.node(), Y = out.node();
        std::vector<int> lab(labels.begin(), labels.end());
        record([L, Y, p = std::move(p), lab = std::move(lab), n, C] {
            if (Y->grad.empty()) return;
            const real g = Y->grad[0] / static_cast<real>(n);
            auto gl = gmat(L, n, C);
            for (index_t i = 0; i < n; ++i) {
                gl.row(i) += g * p.row(i);
                gl(i, lab[static_cast<std::size_t>(i)]) -= g;
            }
        });
    }
    return out;
}

}  // namespace textgraph::ops
