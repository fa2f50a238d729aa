#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mxt/errors.hpp"

namespace mxt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);
// Row-major strides in elements.
std::vector<std::size_t> contiguous_strides(const Shape& shape);

// Gradient recording is enabled by default; NoGradGuard turns it off for the
// current thread (inference, frozen feature extraction, optimizer updates).
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

template <class T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into inputs[i]->grad.
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

// Dense row-major tensor handle. Copies share the underlying node, the same
// way a graph-building autodiff library hands out references to values.
template <class T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    // Negative axes count from the end.
    std::size_t extent(int axis) const;

    std::span<const T> values() const { return node_->data; }
    std::span<T> mutable_values() { return node_->data; }
    T item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad();
    void zero_grad();

    // New leaf holding a copy of the values, disconnected from any graph.
    Tensor detach() const;
    const char* op_name() const { return node_->op; }

    const NodePtr& node() const { return node_; }
    static Tensor from_node(NodePtr node);

private:
    NodePtr node_;
};

// Runs reverse-mode accumulation from a scalar root. Leaves accumulate across
// calls; interior nodes are recomputed each call.
template <class T>
void backward(const Tensor<T>& root);

// Topological record of the differentiable operations reachable from a root;
// every node appears after all of its inputs.
template <class T>
struct Tape {
    std::vector<detail::Node<T>*> nodes;

    static Tape record(const Tensor<T>& root);
};

// Builds an operation result. When recording is on and any input requires a
// gradient, the node joins the graph with the given backward rule.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      const char* op, std::function<void(detail::Node<T>&)> backward_fn);

}  // namespace mxt
