#include "textgraph/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace textgraph::oracles {

Matrix dense_gatv2(const Matrix& x, const Matrix& theta, const Matrix& a,
                   const std::vector<std::pair<index_t, index_t>>& edges, real slope, Matrix* alpha) {
    const auto n = x.rows(), d = x.cols(), d_out = theta.rows();
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
    for (index_t i = 0; i < n; ++i) mask(i, i) = true;
    for (const auto& [s, t] : edges) mask(s, t) = true;

    Matrix scores = Matrix::Constant(n, n, -std::numeric_limits<real>::infinity());
    Eigen::Matrix<real, Eigen::Dynamic, 1> pair(2 * d);
    for (index_t i = 0; i < n; ++i) {
        for (index_t j = 0; j < n; ++j) {
            if (!mask(i, j)) continue;
            pair << x.row(i).transpose(), x.row(j).transpose();
            Eigen::Matrix<real, Eigen::Dynamic, 1> z = theta * pair;
            real s = 0;
            for (index_t c = 0; c < d_out; ++c) s += a(0, c) * (z(c) >= 0 ? z(c) : slope * z(c));
            scores(i, j) = s;
        }
    }
    Matrix att = Matrix::Zero(n, n);
    for (index_t i = 0; i < n; ++i) {
        const real mx = scores.row(i).maxCoeff();
        real total = 0;
        for (index_t j = 0; j < n; ++j) {
            if (mask(i, j)) total += std::exp(scores(i, j) - mx);
        }
        for (index_t j = 0; j < n; ++j) {
            if (mask(i, j)) att(i, j) = std::exp(scores(i, j) - mx) / total;
        }
    }
    const Matrix values = x * theta.rightCols(d).transpose();
    if (alpha) *alpha = att;
    return att * values;
}

Matrix scalar_sparse_attention(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wagg,
                               const Matrix& wupd, index_t heads, std::span<const index_t> src,
                               std::span<const index_t> dst, bool per_node_softmax, bool pre_softmax_scaling,
                               std::vector<real>* alpha) {
    const auto n = x.rows();
    const auto M = x.cols() / heads;
    const auto E = static_cast<index_t>(src.size());
    const auto per = E / heads;
    const real scale = real(1) / std::sqrt(static_cast<real>(M));
    Matrix y = Matrix::Zero(n, heads * M);
    if (alpha) alpha->assign(static_cast<std::size_t>(E), real(0));

    for (index_t h = 0; h < heads; ++h) {
        const auto off = h * M;
        for (index_t v = 0; v < n; ++v) {
            for (index_t m = 0; m < M; ++m) {
                real acc = 0;
                for (index_t k = 0; k < M; ++k) acc += x(v, off + k) * wupd(off + k, m);
                y(v, off + m) = acc;
            }
        }
        std::vector<real> score(static_cast<std::size_t>(per));
        std::vector<std::vector<real>> agg(static_cast<std::size_t>(per), std::vector<real>(static_cast<std::size_t>(M)));
        for (index_t e = 0; e < per; ++e) {
            const auto s = src[static_cast<std::size_t>(h * per + e)];
            const auto t = dst[static_cast<std::size_t>(h * per + e)];
            real dot = 0;
            for (index_t m = 0; m < M; ++m) {
                real q = 0, k = 0, g = 0;
                for (index_t c = 0; c < M; ++c) {
                    const real sc = x(s, off + c) + x(t, off + c);
                    q += sc * wq(off + c, m);
                    k += sc * wk(off + c, m);
                    g += sc * wagg(off + c, m);
                }
                dot += q * k;
                agg[static_cast<std::size_t>(e)][static_cast<std::size_t>(m)] = g;
            }
            score[static_cast<std::size_t>(e)] = pre_softmax_scaling ? dot * scale : dot;
        }
        for (index_t e = 0; e < per; ++e) {
            const auto s = src[static_cast<std::size_t>(h * per + e)];
            real mx = -std::numeric_limits<real>::infinity();
            for (index_t f = 0; f < per; ++f) {
                if (per_node_softmax && src[static_cast<std::size_t>(h * per + f)] != s) continue;
                mx = std::max(mx, score[static_cast<std::size_t>(f)]);
            }
            real total = 0;
            for (index_t f = 0; f < per; ++f) {
                if (per_node_softmax && src[static_cast<std::size_t>(h * per + f)] != s) continue;
                total += std::exp(score[static_cast<std::size_t>(f)] - mx);
            }
            real w = std::exp(score[static_cast<std::size_t>(e)] - mx) / total;
            if (!pre_softmax_scaling) w *= scale;
            if (alpha) (*alpha)[static_cast<std::size_t>(h * per + e)] = w;
            const auto t = dst[static_cast<std::size_t>(h * per + e)];
            for (index_t m = 0; m < M; ++m) {
                const real v = w * agg[static_cast<std::size_t>(e)][static_cast<std::size_t>(m)];
                y(s, off + m) += v;
                y(t, off + m) += v;
            }
        }
    }
    return y;
}

std::vector<std::vector<index_t>> floyd_warshall(const std::vector<std::pair<index_t, index_t>>& pairs, index_t n) {
    constexpr index_t inf = std::numeric_limits<index_t>::max() / 4;
    const auto N = static_cast<std::size_t>(n);
    std::vector<std::vector<index_t>> dist(N, std::vector<index_t>(N, inf));
    for (std::size_t i = 0; i < N; ++i) dist[i][i] = 0;
    for (const auto& [a, b] : pairs) {
        if (a == b) continue;
        dist[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = 1;
        dist[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = 1;
    }
    for (std::size_t k = 0; k < N; ++k) {
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < N; ++j) {
                dist[i][j] = std::min(dist[i][j], dist[i][k] + dist[k][j]);
            }
        }
    }
    for (auto& row : dist) {
        for (auto& v : row) {
            if (v >= inf) v = -1;
        }
    }
    return dist;
}

graphstats::TopologyReport brute_force_topology(const std::vector<std::pair<index_t, index_t>>& pairs, index_t n) {
    const auto N = static_cast<std::size_t>(n);
    std::set<std::pair<index_t, index_t>> unique;
    std::vector<std::vector<char>> adj(N, std::vector<char>(N, 0));
    for (const auto& [a, b] : pairs) {
        if (a == b) continue;
        unique.insert({std::min(a, b), std::max(a, b)});
        adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = 1;
        adj[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = 1;
    }
    graphstats::TopologyReport r;
    r.nodes = n;
    r.edges = static_cast<index_t>(unique.size());
    r.density = n > 1 ? 2.0 * static_cast<double>(r.edges) / (static_cast<double>(n) * static_cast<double>(n - 1)) : 0.0;

    double clustering = 0;
    for (std::size_t v = 0; v < N; ++v) {
        std::vector<std::size_t> nb;
        for (std::size_t u = 0; u < N; ++u) {
            if (adj[v][u]) nb.push_back(u);
        }
        if (nb.size() < 2) continue;
        double links = 0;
        for (std::size_t i = 0; i < nb.size(); ++i) {
            for (std::size_t j = i + 1; j < nb.size(); ++j) links += adj[nb[i]][nb[j]];
        }
        clustering += 2.0 * links / (static_cast<double>(nb.size()) * static_cast<double>(nb.size() - 1));
    }
    r.avg_clustering = n > 0 ? clustering / static_cast<double>(n) : 0.0;

    const auto dist = floyd_warshall(pairs, n);
    // Largest component: the node with the most reachable peers, lowest index on ties.
    std::size_t best = 0, best_size = 0;
    for (std::size_t v = 0; v < N; ++v) {
        const auto size = static_cast<std::size_t>(std::count_if(dist[v].begin(), dist[v].end(), [](index_t d) { return d >= 0; }));
        if (size > best_size) {
            best = v;
            best_size = size;
        }
    }
    double total = 0;
    index_t count = 0;
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            if (i == j || dist[i][j] < 0) continue;
            total += static_cast<double>(dist[i][j]);
            ++count;
            if (dist[best][i] >= 0) r.diameter = std::max(r.diameter, dist[i][j]);
        }
    }
    r.avg_shortest_path = count > 0 ? total / static_cast<double>(count) : 0.0;
    return r;
}

Matrix brute_force_scatter(const Matrix& x, std::span<const index_t> index, index_t n_out, ops::Reduce mode) {
    Matrix out = Matrix::Zero(n_out, x.cols());
    for (index_t r = 0; r < n_out; ++r) {
        index_t count = 0;
        for (std::size_t i = 0; i < index.size(); ++i) {
            if (index[i] != r) continue;
            const auto row = static_cast<index_t>(i);
            if (mode == ops::Reduce::max) {
                out.row(r) = count == 0 ? Matrix(x.row(row)) : Matrix(out.row(r).cwiseMax(x.row(row)));
            } else {
                out.row(r) += x.row(row);
            }
            ++count;
        }
        if (mode == ops::Reduce::mean && count > 0) out.row(r) /= static_cast<real>(count);
    }
    return out;
}

std::vector<real> brute_force_segment_softmax(std::span<const real> scores, std::span<const index_t> segment,
                                              index_t n_segments, real scale) {
    std::vector<real> out(scores.size());
    for (index_t g = 0; g < n_segments; ++g) {
        real mx = -std::numeric_limits<real>::infinity();
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (segment[i] == g) mx = std::max(mx, scores[i]);
        }
        real total = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (segment[i] == g) total += std::exp(scores[i] - mx);
        }
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (segment[i] == g) out[i] = std::exp(scores[i] - mx) / total * scale;
        }
    }
    return out;
}

}  // namespace textgraph::oracles
