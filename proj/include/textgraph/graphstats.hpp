#pragma once

#include "textgraph/common.hpp"
#include "textgraph/graphgen.hpp"

#include <string>
#include <utility>
#include <vector>

namespace textgraph::graphstats {

struct TopologyReport {
    index_t nodes = 0;
    index_t edges = 0;  ///< undirected, deduplicated
    double density = 0.0;
    index_t diameter = 0;
    double avg_clustering = 0.0;
    double avg_shortest_path = 0.0;

    std::string to_json() const;
};

/// Metrics of the undirected simple graph induced on [lower, upper). Edges
/// with both endpoints outside the range are ignored; an edge with exactly
/// one endpoint inside raises ArgumentError. Diameter is taken over the
/// largest connected component and the average path over connected pairs.
TopologyReport analyze(const graphgen::EdgeList& edges, index_t lower, index_t upper);

/// Same as above over an explicit pair list on nodes 0..n-1.
TopologyReport analyze_pairs(const std::vector<std::pair<index_t, index_t>>& pairs, index_t n);

}  // namespace textgraph::graphstats
