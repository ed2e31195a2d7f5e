#pragma once

#include "textgraph/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace textgraph {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  ///< "param[index]" of the largest error
    index_t checked = 0;
    bool finite = true;

    bool passed(double tolerance) const { return finite && max_rel_error <= tolerance; }
};

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

/// Compares tape gradients of the scalar returned by `f` with central
/// differences (f(x+h) - f(x-h)) / 2h. `f` must be deterministic. When
/// `max_coords` > 0 at most that many evenly spaced coordinates of each
/// parameter are checked.
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h = 1e-5,
                           index_t max_coords = 0);

}  // namespace textgraph
