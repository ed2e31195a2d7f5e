#pragma once

#include "textgraph/common.hpp"
#include "textgraph/tensor.hpp"

#include <span>
#include <vector>

namespace textgraph {
class Rng;
}

namespace textgraph::ops {

// Dense algebra. Shape errors report both operand shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x W^T + b with x [n x in], W [out x in], b [out] (may be undefined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor transpose(const Tensor& x);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real s);
/// x [n x d] plus b [d] on every row.
Tensor add_row(const Tensor& x, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, real slope = real(0.01));
Tensor elu(const Tensor& x, real alpha = real(1));
Tensor sigmoid(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);
/// Survivors scaled by 1/(1-p) in training; identity otherwise.
Tensor dropout(const Tensor& x, real p, bool training, Rng& rng);

// Column and row plumbing on 2-D views (rank-1 tensors act as one column).
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, index_t begin, index_t end);
Tensor slice_rows(const Tensor& x, index_t begin, index_t end);
Tensor gather_rows(const Tensor& x, std::span<const index_t> index);

enum class Reduce { sum, mean, max };
/// Rows of x reduced into n_out buckets by index. Empty buckets are zero;
/// max routes its gradient to the first maximal row.
Tensor scatter_reduce(const Tensor& x, std::span<const index_t> index, index_t n_out, Reduce mode);

/// Row i of x multiplied by s[i].
Tensor scale_rows(const Tensor& x, const Tensor& s);
/// Per-row dot product of two equally shaped matrices, shape [n].
Tensor row_dot(const Tensor& a, const Tensor& b);
/// Softmax of scores within each segment, multiplied by `scale` afterwards.
Tensor segment_softmax(const Tensor& scores, std::span<const index_t> segment_of, index_t n_segments,
                       real scale = real(1));

struct EdgeAttention {
    Tensor y;
    Tensor alpha;  ///< one weight per edge, without gradient
};
/// Fused GATv2 attention over directed edges (s, t): score = a . leaky(P[s] + Q[t]),
/// alpha = softmax of the scores sharing s, y[s] = sum of alpha * Q[t]. Edge
/// activations are recomputed in the backward pass instead of stored.
EdgeAttention gatv2_attention(const Tensor& p_center, const Tensor& p_neighbor, const Tensor& a,
                              std::span<const index_t> src, std::span<const index_t> dst, real slope);

// Convolution.
/// Output length floor((n + 2p - k)/s) + 1; throws ShapeError when n + 2p < k.
index_t conv_out_length(index_t n, index_t k, index_t padding, index_t stride);
/// Cross-correlation of x [C_in x n] with w [C_out x C_in x k], bias [C_out].
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, index_t stride, index_t padding);
/// Per-channel convolution: x [C x n], w [C x 1 x k], bias [C].
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, index_t stride, index_t padding);
/// Depthwise convolution followed by a pointwise (k = 1) convolution.
Tensor depthwise_separable_conv1d(const Tensor& x, const Tensor& depth_w, const Tensor& point_w,
                                  const Tensor& bias, index_t stride, index_t padding);
/// Same-length stride-1 convolution on a channels-last sequence x [n x C_in]
/// with w [C_out x C_in x k], k = 2*padding + 1. When `segment_lower` is
/// non-empty, taps never cross the listed segment starts. Optionally fuses a
/// ReLU on the output.
Tensor conv1d_nc(const Tensor& x, const Tensor& w, const Tensor& bias, index_t padding,
                 std::span<const index_t> segment_lower = {}, bool fuse_relu = false);

/// Per column: (x - mean) / sqrt(var + eps) * gamma + beta with the
/// population variance over all rows.
Tensor feature_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = real(1e-5));

// Reductions and losses.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean softmax cross-entropy of logits [n x C] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise softmax without gradient tracking.
Matrix softmax_rows(const Tensor& logits);

}  // namespace textgraph::ops
