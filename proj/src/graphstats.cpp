#include "textgraph/graphstats.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>

namespace textgraph::graphstats {

std::string TopologyReport::to_json() const {
    nlohmann::json j{{"tokens", nodes},
                     {"edges", edges},
                     {"density", density},
                     {"diameter", diameter},
                     {"avg_clustering", avg_clustering},
                     {"avg_shortest_path", avg_shortest_path}};
    return j.dump();
}

TopologyReport analyze_pairs(const std::vector<std::pair<index_t, index_t>>& pairs, index_t n) {
    if (n < 1) throw ArgumentError("analyze: empty node range");
    const auto N = static_cast<std::size_t>(n);
    std::vector<std::vector<index_t>> adj(N);
    for (auto [a, b] : pairs) {
        if (a < 0 || b < 0 || a >= n || b >= n) throw IndexError("analyze: edge endpoint out of range");
        if (a == b) continue;
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    index_t m = 0;
    for (auto& nb : adj) {
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
        m += static_cast<index_t>(nb.size());
    }
    TopologyReport r;
    r.nodes = n;
    r.edges = m / 2;
    r.density = n >= 2 ? 2.0 * static_cast<double>(r.edges) / (static_cast<double>(n) * static_cast<double>(n - 1))
                       : 0.0;

    // Local clustering via sorted-neighbor intersection.
    double clustering = 0.0;
    for (std::size_t v = 0; v < N; ++v) {
        const auto& nv = adj[v];
        const auto deg = nv.size();
        if (deg < 2) continue;
        std::size_t links = 0;
        for (auto u : nv) {
            const auto& nu = adj[static_cast<std::size_t>(u)];
            auto i = nv.begin();
            auto j = nu.begin();
            while (i != nv.end() && j != nu.end()) {
                if (*i < *j) ++i;
                else if (*j < *i) ++j;
                else { ++links; ++i; ++j; }
            }
        }
        // Each triangle edge is seen from both endpoints.
        clustering += static_cast<double>(links) / static_cast<double>(deg * (deg - 1));
    }
    r.avg_clustering = clustering / static_cast<double>(n);

    // Components, then BFS from every node.
    std::vector<index_t> comp(N, -1);
    std::vector<index_t> comp_size;
    for (std::size_t s = 0; s < N; ++s) {
        if (comp[s] >= 0) continue;
        const auto id = static_cast<index_t>(comp_size.size());
        comp_size.push_back(0);
        std::deque<index_t> q{static_cast<index_t>(s)};
        comp[s] = id;
        while (!q.empty()) {
            auto v = q.front();
            q.pop_front();
            ++comp_size.back();
            for (auto u : adj[static_cast<std::size_t>(v)]) {
                if (comp[static_cast<std::size_t>(u)] < 0) {
                    comp[static_cast<std::size_t>(u)] = id;
                    q.push_back(u);
                }
            }
        }
    }
    const auto largest = static_cast<index_t>(
        std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin());

    double path_sum = 0.0;
    double pairs_connected = 0.0;
    index_t diameter = 0;
    std::vector<index_t> dist(N);
    std::vector<index_t> queue(N);
    for (std::size_t s = 0; s < N; ++s) {
        std::fill(dist.begin(), dist.end(), -1);
        dist[s] = 0;
        std::size_t head = 0, tail = 0;
        queue[tail++] = static_cast<index_t>(s);
        while (head < tail) {
            auto v = queue[head++];
            for (auto u : adj[static_cast<std::size_t>(v)]) {
                if (dist[static_cast<std::size_t>(u)] < 0) {
                    dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
                    queue[tail++] = u;
                }
            }
        }
        for (std::size_t i = 1; i < tail; ++i) {
            const auto d = dist[static_cast<std::size_t>(queue[i])];
            path_sum += static_cast<double>(d);
            pairs_connected += 1.0;
            if (comp[s] == largest) diameter = std::max(diameter, d);
        }
    }
    r.diameter = diameter;
    r.avg_shortest_path = pairs_connected > 0 ? path_sum / pairs_connected : 0.0;
    return r;
}

TopologyReport analyze(const graphgen::EdgeList& edges, index_t lower, index_t upper) {
    if (upper <= lower) throw ArgumentError("analyze: empty node range");
    std::vector<std::pair<index_t, index_t>> pairs;
    for (index_t e = 0; e < edges.size(); ++e) {
        const auto a = edges.src[static_cast<std::size_t>(e)];
        const auto b = edges.dst[static_cast<std::size_t>(e)];
        const bool ain = a >= lower && a < upper;
        const bool bin = b >= lower && b < upper;
        if (!ain && !bin) continue;
        if (ain != bin) throw ArgumentError("analyze: edge leaves the node range");
        pairs.emplace_back(a - lower, b - lower);
    }
    return analyze_pairs(pairs, upper - lower);
}

}  // namespace textgraph::graphstats
