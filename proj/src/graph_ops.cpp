#include "textgraph/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace textgraph::ops {

namespace {

using Row = Eigen::Map<Eigen::Array<real, 1, Eigen::Dynamic>>;
using ConstRow = Eigen::Map<const Eigen::Array<real, 1, Eigen::Dynamic>>;

}  // namespace

EdgeAttention gatv2_attention(const Tensor& p_center, const Tensor& p_neighbor, const Tensor& a,
                              std::span<const index_t> src, std::span<const index_t> dst, real slope) {
    if (p_center.rank() != 2 || p_center.shape() != p_neighbor.shape()) {
        throw ShapeError("gatv2_attention: projections " + p_center.shape_str() + " and " + p_neighbor.shape_str());
    }
    const auto n = p_center.dim(0), d = p_center.dim(1);
    if (a.numel() != d) throw ShapeError("gatv2_attention: a " + a.shape_str() + " for width " + std::to_string(d));
    if (src.size() != dst.size()) throw ShapeError("gatv2_attention: src and dst lengths differ");
    const auto E = static_cast<index_t>(src.size());
    for (index_t e = 0; e < E; ++e) {
        const auto s = src[static_cast<std::size_t>(e)], t = dst[static_cast<std::size_t>(e)];
        if (s < 0 || s >= n || t < 0 || t >= n) {
            throw IndexError("gatv2_attention: edge " + std::to_string(e) + " (" + std::to_string(s) + ", " +
                             std::to_string(t) + ") out of range [0, " + std::to_string(n) + ")");
        }
    }
    const real* P = p_center.data();
    const real* Q = p_neighbor.data();
    const real* av = a.data();
    const ConstRow a_row(av, d);
    auto score_of = [=](index_t s, index_t t) {
        const auto z = ConstRow(P + s * d, d) + ConstRow(Q + t * d, d);
        return (a_row * (z.max(real(0)) + slope * z.min(real(0)))).sum();
    };

    std::vector<real> alpha(static_cast<std::size_t>(E));
    std::vector<real> seg_max(static_cast<std::size_t>(n), -std::numeric_limits<real>::infinity());
    std::vector<real> seg_sum(static_cast<std::size_t>(n), real(0));
    for (index_t e = 0; e < E; ++e) {
        const auto s = src[static_cast<std::size_t>(e)];
        alpha[static_cast<std::size_t>(e)] = score_of(s, dst[static_cast<std::size_t>(e)]);
        auto& mx = seg_max[static_cast<std::size_t>(s)];
        mx = std::max(mx, alpha[static_cast<std::size_t>(e)]);
    }
    for (index_t e = 0; e < E; ++e) {
        const auto s = static_cast<std::size_t>(src[static_cast<std::size_t>(e)]);
        auto& v = alpha[static_cast<std::size_t>(e)];
        v = std::exp(v - seg_max[s]);
        seg_sum[s] += v;
    }
    EdgeAttention out;
    out.y = Tensor::zeros({n, d});
    real* y = out.y.data();
    for (index_t e = 0; e < E; ++e) {
        const auto s = src[static_cast<std::size_t>(e)], t = dst[static_cast<std::size_t>(e)];
        auto& w = alpha[static_cast<std::size_t>(e)];
        w /= seg_sum[static_cast<std::size_t>(s)];
        Row(y + s * d, d) += w * ConstRow(Q + t * d, d);
    }
    out.alpha = Tensor::from({E}, alpha);

    if (needs_grad({&p_center, &p_neighbor, &a})) {
        out.y.set_requires_grad(true);
        auto PC = p_center.node(), PN = p_neighbor.node(), A = a.node(), Y = out.y.node();
        std::vector<index_t> s_idx(src.begin(), src.end()), t_idx(dst.begin(), dst.end());
        Tape::active()->record([PC, PN, A, Y, s_idx = std::move(s_idx), t_idx = std::move(t_idx),
                                alpha = std::move(alpha), n, d, E, slope] {
            if (Y->grad.empty()) return;
            const real* P = PC->value.data();
            const real* Q = PN->value.data();
            const ConstRow a_row(A->value.data(), d);
            const real* gy = Y->grad.data();
            std::vector<real> dP(static_cast<std::size_t>(n * d), real(0));
            std::vector<real> dQ(static_cast<std::size_t>(n * d), real(0));
            std::vector<real> da(static_cast<std::size_t>(d), real(0));
            // Gradient of each attention weight and its softmax correction per source.
            std::vector<real> dalpha(static_cast<std::size_t>(E));
            std::vector<real> dot(static_cast<std::size_t>(n), real(0));
            for (index_t e = 0; e < E; ++e) {
                const auto i = static_cast<std::size_t>(e);
                const auto s = s_idx[i], t = t_idx[i];
                const ConstRow gs(gy + s * d, d);
                const real g = (gs * ConstRow(Q + t * d, d)).sum();
                Row(dQ.data() + t * d, d) += alpha[i] * gs;
                dalpha[i] = g;
                dot[static_cast<std::size_t>(s)] += alpha[i] * g;
            }
            for (index_t e = 0; e < E; ++e) {
                const auto i = static_cast<std::size_t>(e);
                const auto s = s_idx[i], t = t_idx[i];
                const real dscore = alpha[i] * (dalpha[i] - dot[static_cast<std::size_t>(s)]);
                if (dscore == 0) continue;
                const auto z = (ConstRow(P + s * d, d) + ConstRow(Q + t * d, d)).eval();
                Row(da.data(), d) += dscore * (z.max(real(0)) + slope * z.min(real(0)));
                const auto dz = (dscore * a_row * ((z > real(0)).cast<real>() * (1 - slope) + slope)).eval();
                Row(dP.data() + s * d, d) += dz;
                Row(dQ.data() + t * d, d) += dz;
            }
            if (PC->requires_grad) {
                auto& g = PC->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += dP[i];
            }
            if (PN->requires_grad) {
                auto& g = PN->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += dQ[i];
            }
            if (A->requires_grad) {
                auto& g = A->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += da[i];
            }
        });
    }
    return out;
}

}  // namespace textgraph::ops
