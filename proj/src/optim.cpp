#include "textgraph/optim.hpp"

#include <algorithm>
#include <cmath>

namespace textgraph::optim {

AdamW::AdamW(std::vector<Tensor> params, double lr, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        auto& values = p.values();
        const bool has = p.has_grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = has ? static_cast<double>(p.grad()[i]) : 0.0;
            double x = static_cast<double>(values[i]);
            x -= lr_ * wd_ * x;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            x -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            values[i] = static_cast<real>(x);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

MultiStepLR::MultiStepLR(double base_lr, std::vector<int> milestones, double gamma)
    : base_(base_lr), milestones_(std::move(milestones)), gamma_(gamma) {
    std::sort(milestones_.begin(), milestones_.end());
}

double MultiStepLR::lr_at(int epoch) const {
    const auto passed = std::upper_bound(milestones_.begin(), milestones_.end(), epoch) - milestones_.begin();
    return base_ * std::pow(gamma_, static_cast<double>(passed));
}

}  // namespace textgraph::optim
