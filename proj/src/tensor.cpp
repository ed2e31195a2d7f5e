#include "textgraph/tensor.hpp"
#include "textgraph/rng.hpp"

#include <numeric>

namespace textgraph {

namespace {

thread_local Tape* g_active_tape = nullptr;

index_t product(const Shape& s) {
    index_t n = 1;
    for (auto d : s) {
        if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
        n *= d;
    }
    return n;
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), real(0), requires_grad); }

Tensor Tensor::full(Shape shape, real v, bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->value.assign(static_cast<std::size_t>(product(shape)), v);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
    if (product(shape) != static_cast<index_t>(values.size())) {
        throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " + textgraph::shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(real v) { return from({}, {v}); }

Tensor Tensor::uniform(Shape shape, real bound, Rng& rng, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = static_cast<real>((2.0 * rng.uniform() - 1.0) * bound);
    return t;
}

Tensor Tensor::normal(Shape shape, real stddev, Rng& rng, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = static_cast<real>(rng.normal() * stddev);
    return t;
}

index_t Tensor::rows() const { return rank() == 0 ? 1 : dim(0); }

index_t Tensor::cols() const {
    if (rank() <= 1) return 1;
    index_t c = 1;
    for (std::size_t i = 1; i < node_->shape.size(); ++i) c *= node_->shape[i];
    return c;
}

real Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str());
    return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), values(), false); }

std::string Tensor::shape_str() const { return textgraph::shape_str(shape()); }

void Tape::backward(Tensor root) {
    if (root.numel() != 1) throw ShapeError("backward root must be a scalar, got " + root.shape_str());
    root.grad()[0] += real(1);
    for (auto it = fns_.rbegin(); it != fns_.rend(); ++it) (*it)();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
    if (g_active_tape == nullptr) return false;
    for (const auto* t : inputs) {
        if (t != nullptr && t->defined() && t->requires_grad()) return true;
    }
    return false;
}

}  // namespace textgraph
