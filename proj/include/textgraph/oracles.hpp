#pragma once

#include "textgraph/common.hpp"
#include "textgraph/graphstats.hpp"
#include "textgraph/ops.hpp"
#include "textgraph/tensor.hpp"

#include <span>
#include <utility>
#include <vector>

// Slow reference transcriptions used to cross-check the production kernels.
namespace textgraph::oracles {

/// Dense n x n GATv2: every row attends over the masked columns (its
/// out-neighbors plus itself). `edges` must hold distinct non-loop pairs.
/// Writes the attention matrix to `alpha` when given.
Matrix dense_gatv2(const Matrix& x, const Matrix& theta, const Matrix& a,
                   const std::vector<std::pair<index_t, index_t>>& edges, real slope, Matrix* alpha = nullptr);

/// Scalar-loop multi-head edge attention with the same parameter layout as
/// layers::SparseEdgeAttention. Writes per-edge weights to `alpha` when given.
Matrix scalar_sparse_attention(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wagg,
                               const Matrix& wupd, index_t heads, std::span<const index_t> src,
                               std::span<const index_t> dst, bool per_node_softmax, bool pre_softmax_scaling,
                               std::vector<real>* alpha = nullptr);

/// All-pairs hop distances; -1 marks unreachable pairs.
std::vector<std::vector<index_t>> floyd_warshall(const std::vector<std::pair<index_t, index_t>>& pairs, index_t n);

/// Topology metrics from Floyd-Warshall distances and a triple loop for
/// clustering.
graphstats::TopologyReport brute_force_topology(const std::vector<std::pair<index_t, index_t>>& pairs, index_t n);

/// Row-by-row scatter reduction.
Matrix brute_force_scatter(const Matrix& x, std::span<const index_t> index, index_t n_out, ops::Reduce mode);

/// Softmax over each segment by explicit summation, times `scale`.
std::vector<real> brute_force_segment_softmax(std::span<const real> scores, std::span<const index_t> segment,
                                              index_t n_segments, real scale);

}  // namespace textgraph::oracles
