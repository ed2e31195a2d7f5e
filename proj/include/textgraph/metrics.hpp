#pragma once

#include "textgraph/common.hpp"

#include <vector>

namespace textgraph::metrics {

struct ClassMetrics {
    double accuracy = 0;
    double precision = 0;  ///< macro average
    double recall = 0;     ///< macro average
    double f1 = 0;         ///< macro average of per-class F1
    index_t n = 0;
};

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int n_classes);

    void add(int truth, int predicted);
    index_t at(int truth, int predicted) const;
    index_t total() const { return total_; }
    int n_classes() const { return n_; }
    const std::vector<index_t>& counts() const { return counts_; }
    /// Classes without predictions (or without examples) contribute 0 precision (recall).
    ClassMetrics metrics() const;

private:
    int n_;
    std::vector<index_t> counts_;
    index_t total_ = 0;
};

}  // namespace textgraph::metrics
