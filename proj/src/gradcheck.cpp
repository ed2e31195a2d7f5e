#include "textgraph/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace textgraph {

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h,
                           index_t max_coords) {
    GradCheckResult result;
    for (auto p : params) p.zero_grad();
    std::vector<std::vector<real>> analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        auto loss = f();
        if (!std::isfinite(static_cast<double>(loss.item()))) {
            result.finite = false;
            return result;
        }
        tape.backward(loss);
    }
    for (auto p : params) analytic.push_back(p.has_grad() ? p.grad() : std::vector<real>(p.values().size(), real(0)));

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k];
        const auto n = p.numel();
        const index_t stride = max_coords > 0 && n > max_coords ? (n + max_coords - 1) / max_coords : 1;
        for (index_t i = 0; i < n; i += stride) {
            auto& v = p.values()[static_cast<std::size_t>(i)];
            const real saved = v;
            v = static_cast<real>(saved + h);
            const double fp = f().item();
            v = static_cast<real>(saved - h);
            const double fm = f().item();
            v = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                result.finite = false;
                continue;
            }
            const double numeric = (fp - fm) / (2.0 * h);
            const double err = relative_error(static_cast<double>(analytic[k][static_cast<std::size_t>(i)]), numeric);
            ++result.checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst = (p.name().empty() ? "param" + std::to_string(k) : p.name()) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

}  // namespace textgraph
