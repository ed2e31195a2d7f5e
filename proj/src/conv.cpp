#include "textgraph/ops.hpp"

#include <algorithm>

namespace textgraph::ops {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

struct RowRange {
    index_t begin;
    index_t len;
};

// Output rows [i0, i0 + len) read input rows shifted by `off` without leaving
// their segment.
std::vector<RowRange> tap_ranges(index_t n, index_t off, std::span<const index_t> segment_lower) {
    std::vector<RowRange> out;
    auto add = [&](index_t a, index_t b) {
        const auto lo = std::max(a, a - off);
        const auto hi = std::min(b, b - off);
        if (hi > lo) out.push_back({lo, hi - lo});
    };
    if (segment_lower.empty()) {
        add(0, n);
    } else {
        for (std::size_t s = 0; s < segment_lower.size(); ++s) {
            const auto a = segment_lower[s];
            const auto b = s + 1 < segment_lower.size() ? segment_lower[s + 1] : n;
            add(a, b);
        }
    }
    return out;
}

void check_conv_weight(const char* op, const Tensor& w, const Tensor& bias, index_t c_in) {
    if (w.rank() != 3 || w.dim(1) != c_in) {
        throw ShapeError(std::string(op) + ": weight " + w.shape_str() + " does not match " + std::to_string(c_in) +
                         " input channels");
    }
    if (bias.defined() && bias.numel() != w.dim(0)) {
        throw ShapeError(std::string(op) + ": bias " + bias.shape_str() + " for weight " + w.shape_str());
    }
}

}  // namespace

index_t conv_out_length(index_t n, index_t k, index_t padding, index_t stride) {
    if (k < 1 || stride < 1 || padding < 0) throw ShapeError("conv: invalid kernel, stride or padding");
    if (n + 2 * padding < k) {
        throw ShapeError("conv: input length " + std::to_string(n) + " with padding " + std::to_string(padding) +
                         " is shorter than kernel " + std::to_string(k));
    }
    return (n + 2 * padding - k) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, index_t stride, index_t padding) {
    if (x.rank() != 2) throw ShapeError("conv1d: expected [C_in x n] input, got " + x.shape_str());
    const auto c_in = x.dim(0), n = x.dim(1);
    check_conv_weight("conv1d", w, bias, c_in);
    const auto c_out = w.dim(0), k = w.dim(2);
    const auto n_out = conv_out_length(n, k, padding, stride);
    auto out = Tensor::zeros({c_out, n_out});
    const real* xv = x.data();
    const real* wv = w.data();
    real* yv = out.data();
    for (index_t o = 0; o < c_out; ++o) {
        for (index_t t = 0; t < n_out; ++t) {
            real acc = bias.defined() ? bias[o] : real(0);
            for (index_t c = 0; c < c_in; ++c) {
                for (index_t u = 0; u < k; ++u) {
                    const auto pos = t * stride + u - padding;
                    if (pos < 0 || pos >= n) continue;
                    acc += wv[(o * c_in + c) * k + u] * xv[c * n + pos];
                }
            }
            yv[o * n_out + t] = acc;
        }
    }
    if (needs_grad({&x, &w, &bias})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), W = w.node(), Y = out.node();
        NodePtr B = bias.defined() ? bias.node() : nullptr;
        Tape::active()->record([X, W, B, Y, c_in, c_out, n, n_out, k, stride, padding] {
            if (Y->grad.empty()) return;
            const auto& dy = Y->grad;
            std::vector<real>* gx = X->requires_grad ? &X->ensure_grad() : nullptr;
            std::vector<real>* gw = W->requires_grad ? &W->ensure_grad() : nullptr;
            std::vector<real>* gb = B && B->requires_grad ? &B->ensure_grad() : nullptr;
            for (index_t o = 0; o < c_out; ++o) {
                for (index_t t = 0; t < n_out; ++t) {
                    const real g = dy[static_cast<std::size_t>(o * n_out + t)];
                    if (gb) (*gb)[static_cast<std::size_t>(o)] += g;
                    for (index_t c = 0; c < c_in; ++c) {
                        for (index_t u = 0; u < k; ++u) {
                            const auto pos = t * stride + u - padding;
                            if (pos < 0 || pos >= n) continue;
                            const auto wi = static_cast<std::size_t>((o * c_in + c) * k + u);
                            const auto xi = static_cast<std::size_t>(c * n + pos);
                            if (gx) (*gx)[xi] += g * W->value[wi];
                            if (gw) (*gw)[wi] += g * X->value[xi];
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, index_t stride, index_t padding) {
    if (x.rank() != 2) throw ShapeError("depthwise_conv1d: expected [C x n] input, got " + x.shape_str());
    const auto C = x.dim(0), n = x.dim(1);
    if (w.rank() != 3 || w.dim(0) != C || w.dim(1) != 1) {
        throw ShapeError("depthwise_conv1d: weight " + w.shape_str() + " for input " + x.shape_str());
    }
    if (bias.defined() && bias.numel() != C) throw ShapeError("depthwise_conv1d: bias " + bias.shape_str());
    const auto k = w.dim(2);
    const auto n_out = conv_out_length(n, k, padding, stride);
    auto out = Tensor::zeros({C, n_out});
    for (index_t c = 0; c < C; ++c) {
        for (index_t t = 0; t < n_out; ++t) {
            real acc = bias.defined() ? bias[c] : real(0);
            for (index_t u = 0; u < k; ++u) {
                const auto pos = t * stride + u - padding;
                if (pos >= 0 && pos < n) acc += w[c * k + u] * x[c * n + pos];
            }
            out.data()[c * n_out + t] = acc;
        }
    }
    if (needs_grad({&x, &w, &bias})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), W = w.node(), Y = out.node();
        NodePtr B = bias.defined() ? bias.node() : nullptr;
        Tape::active()->record([X, W, B, Y, C, n, n_out, k, stride, padding] {
            if (Y->grad.empty()) return;
            std::vector<real>* gx = X->requires_grad ? &X->ensure_grad() : nullptr;
            std::vector<real>* gw = W->requires_grad ? &W->ensure_grad() : nullptr;
            std::vector<real>* gb = B && B->requires_grad ? &B->ensure_grad() : nullptr;
            for (index_t c = 0; c < C; ++c) {
                for (index_t t = 0; t < n_out; ++t) {
                    const real g = Y->grad[static_cast<std::size_t>(c * n_out + t)];
                    if (gb) (*gb)[static_cast<std::size_t>(c)] += g;
                    for (index_t u = 0; u < k; ++u) {
                        const auto pos = t * stride + u - padding;
                        if (pos < 0 || pos >= n) continue;
                        const auto wi = static_cast<std::size_t>(c * k + u);
                        const auto xi = static_cast<std::size_t>(c * n + pos);
                        if (gx) (*gx)[xi] += g * W->value[wi];
                        if (gw) (*gw)[wi] += g * X->value[xi];
                    }
                }
            }
        });
    }
    return out;
}

Tensor depthwise_separable_conv1d(const Tensor& x, const Tensor& depth_w, const Tensor& point_w,
                                  const Tensor& bias, index_t stride, index_t padding) {
    if (point_w.rank() != 3 || point_w.dim(2) != 1) {
        throw ShapeError("depthwise_separable_conv1d: pointwise weight must be [C_out x C x 1], got " +
                         point_w.shape_str());
    }
    auto depth = depthwise_conv1d(x, depth_w, Tensor(), stride, padding);
    return conv1d(depth, point_w, bias, 1, 0);
}

Tensor conv1d_nc(const Tensor& x, const Tensor& w, const Tensor& bias, index_t padding,
                 std::span<const index_t> segment_lower, bool fuse_relu) {
    if (x.rank() != 2) throw ShapeError("conv1d_nc: expected [n x C_in] input, got " + x.shape_str());
    const auto n = x.dim(0), c_in = x.dim(1);
    check_conv_weight("conv1d_nc", w, bias, c_in);
    const auto c_out = w.dim(0), k = w.dim(2);
    if (k != 2 * padding + 1) {
        throw ShapeError("conv1d_nc: kernel " + std::to_string(k) + " with padding " + std::to_string(padding) +
                         " is not length preserving");
    }
    // One [C_out x C_in] matrix per tap.
    std::vector<Matrix> taps(static_cast<std::size_t>(k), Matrix(c_out, c_in));
    for (index_t o = 0; o < c_out; ++o) {
        for (index_t c = 0; c < c_in; ++c) {
            for (index_t u = 0; u < k; ++u) taps[static_cast<std::size_t>(u)](o, c) = w[(o * c_in + c) * k + u];
        }
    }
    auto out = Tensor::zeros({n, c_out});
    auto y = out.mat();
    if (bias.defined()) {
        Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>> bv(bias.data(), c_out);
        y.rowwise() = bv;
    }
    auto xv = x.mat();
    std::vector<std::vector<RowRange>> ranges;
    for (index_t u = 0; u < k; ++u) {
        const auto off = u - padding;
        ranges.push_back(tap_ranges(n, off, segment_lower));
        for (const auto& r : ranges.back()) {
            y.middleRows(r.begin, r.len).noalias() +=
                xv.middleRows(r.begin + off, r.len) * taps[static_cast<std::size_t>(u)].transpose();
        }
    }
    if (fuse_relu) y = y.cwiseMax(real(0));

    if (needs_grad({&x, &w, &bias})) {
        out.set_requires_grad(true);
        NodePtr X = x.node(), W = w.node(), Y = out.node();
        NodePtr B = bias.defined() ? bias.node() : nullptr;
        Tape::active()->record([X, W, B, Y, taps = std::move(taps), ranges = std::move(ranges), n, c_in, c_out, k,
                                padding, fuse_relu] {
            if (Y->grad.empty()) return;
            ConstMatMap dy_raw(Y->grad.data(), n, c_out);
            Matrix dy = dy_raw;
            if (fuse_relu) {
                ConstMatMap yv(Y->value.data(), n, c_out);
                dy = (yv.array() > real(0)).select(dy.array(), real(0)).matrix();
            }
            if (B && B->requires_grad) {
                MatMap(B->ensure_grad().data(), 1, c_out) += dy.colwise().sum();
            }
            ConstMatMap xv(X->value.data(), n, c_in);
            std::vector<real>* gw = W->requires_grad ? &W->ensure_grad() : nullptr;
            for (index_t u = 0; u < k; ++u) {
                const auto off = u - padding;
                const auto& tap = taps[static_cast<std::size_t>(u)];
                Matrix dtap = Matrix::Zero(c_out, c_in);
                for (const auto& r : ranges[static_cast<std::size_t>(u)]) {
                    if (X->requires_grad) {
                        MatMap(X->ensure_grad().data(), n, c_in).middleRows(r.begin + off, r.len).noalias() +=
                            dy.middleRows(r.begin, r.len) * tap;
                    }
                    if (gw) dtap.noalias() += dy.middleRows(r.begin, r.len).transpose() * xv.middleRows(r.begin + off, r.len);
                }
                if (gw) {
                    for (index_t o = 0; o < c_out; ++o) {
                        for (index_t c = 0; c < c_in; ++c) (*gw)[static_cast<std::size_t>((o * c_in + c) * k + u)] += dtap(o, c);
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace textgraph::ops
