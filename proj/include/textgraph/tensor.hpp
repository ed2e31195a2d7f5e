#pragma once

#include "textgraph/common.hpp"

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace textgraph {

class Rng;

using Matrix = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Matrix>;
using ConstMatMap = Eigen::Map<const Matrix>;
using Shape = std::vector<index_t>;

struct TensorNode {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;  ///< empty until something flows into it
    bool requires_grad = false;
    std::string name;

    std::vector<real>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), real(0));
        return grad;
    }
};

/// Shared handle to a dense row-major array with an optional gradient.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, real v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
    static Tensor scalar(real v);
    /// Entries uniform on [-bound, bound].
    static Tensor uniform(Shape shape, real bound, Rng& rng, bool requires_grad = false);
    static Tensor normal(Shape shape, real stddev, Rng& rng, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    index_t dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
    index_t numel() const { return static_cast<index_t>(node_->value.size()); }
    /// Leading dimension (1 for scalars).
    index_t rows() const;
    /// Product of the trailing dimensions.
    index_t cols() const;

    real* data() { return node_->value.data(); }
    const real* data() const { return node_->value.data(); }
    std::vector<real>& values() { return node_->value; }
    const std::vector<real>& values() const { return node_->value; }
    real operator[](index_t i) const { return node_->value[static_cast<std::size_t>(i)]; }
    real item() const;

    bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
    std::vector<real>& grad() { return node_->ensure_grad(); }
    const std::vector<real>& grad() const { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        node_->requires_grad = on;
        return *this;
    }
    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string n) {
        node_->name = std::move(n);
        return *this;
    }

    /// rows() x cols() views.
    MatMap mat() { return MatMap(data(), rows(), cols()); }
    ConstMatMap mat() const { return ConstMatMap(data(), rows(), cols()); }
    MatMap grad_mat() { return MatMap(grad().data(), rows(), cols()); }

    Tensor detach() const;
    std::string shape_str() const;
    const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

std::string shape_str(const Shape& s);

/// Ordered record of backward closures.
class Tape {
public:
    void record(std::function<void()> fn) { fns_.push_back(std::move(fn)); }
    /// Seeds d(root)/d(root) = 1 and runs the records in reverse order.
    void backward(Tensor root);
    std::size_t size() const { return fns_.size(); }
    void clear() { fns_.clear(); }

    /// Tape that ops currently record to (nullptr outside a TapeScope).
    static Tape* active();

private:
    std::vector<std::function<void()>> fns_;
};

/// Makes `tape` the active tape for the current thread while alive.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

/// True when a tape is active and any defined input requires a gradient.
bool needs_grad(std::initializer_list<const Tensor*> inputs);

}  // namespace textgraph
