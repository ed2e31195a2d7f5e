#pragma once

#include "textgraph/tensor.hpp"

#include <vector>

namespace textgraph::optim {

/// Adam with decoupled weight decay: p -= lr * wd * p, then the bias-corrected
/// moment update.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8);

    /// Applies one update from the accumulated gradients (missing gradients count as zero).
    void step();
    void zero_grad();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    long steps() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, wd_, beta1_, beta2_, eps_;
    long t_ = 0;
};

/// base * gamma^(number of milestones <= epoch), epochs counted from 0.
class MultiStepLR {
public:
    MultiStepLR(double base_lr, std::vector<int> milestones, double gamma);
    double lr_at(int epoch) const;

private:
    double base_;
    std::vector<int> milestones_;
    double gamma_;
};

}  // namespace textgraph::optim
