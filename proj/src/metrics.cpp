#include "textgraph/metrics.hpp"

#include <string>

namespace textgraph::metrics {

ConfusionMatrix::ConfusionMatrix(int n_classes) : n_(n_classes) {
    if (n_classes < 1) throw ArgumentError("confusion matrix needs at least one class");
    counts_.assign(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0);
}

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || truth >= n_ || predicted < 0 || predicted >= n_) {
        throw IndexError("confusion matrix: class out of range (" + std::to_string(truth) + ", " +
                         std::to_string(predicted) + ")");
    }
    ++counts_[static_cast<std::size_t>(truth * n_ + predicted)];
    ++total_;
}

index_t ConfusionMatrix::at(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth * n_ + predicted)];
}

ClassMetrics ConfusionMatrix::metrics() const {
    ClassMetrics m;
    m.n = total_;
    if (total_ == 0) return m;
    index_t correct = 0;
    for (int c = 0; c < n_; ++c) {
        const auto tp = static_cast<double>(at(c, c));
        correct += at(c, c);
        double predicted = 0, actual = 0;
        for (int o = 0; o < n_; ++o) {
            predicted += static_cast<double>(at(o, c));
            actual += static_cast<double>(at(c, o));
        }
        const double p = predicted > 0 ? tp / predicted : 0.0;
        const double r = actual > 0 ? tp / actual : 0.0;
        m.precision += p;
        m.recall += r;
        m.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    m.precision /= n_;
    m.recall /= n_;
    m.f1 /= n_;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(total_);
    return m;
}

}  // namespace textgraph::metrics
