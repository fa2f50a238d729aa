#include "mxt/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace mxt {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
    if (mxt::numel(shape) != values.size()) {
        throw DimensionError("tensor of shape " + to_string(shape) + " needs " +
                             std::to_string(mxt::numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    node_ = std::make_shared<detail::Node<T>>();
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    std::vector<T> v(mxt::numel(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <class T>
std::size_t Tensor<T>::extent(int axis) const {
    const int r = static_cast<int>(rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(r));
    }
    return node_->shape[static_cast<std::size_t>(a)];
}

template <class T>
T Tensor<T>::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
}

template <class T>
void Tensor<T>::set_requires_grad(bool on) {
    node_->requires_grad = on;
}

template <class T>
std::span<T> Tensor<T>::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

template <class T>
void Tensor<T>::zero_grad() {
    node_->grad.clear();
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(node_->shape, node_->data, false);
}

template <class T>
Tensor<T> Tensor<T>::from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

template <class T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
    Tape tape;
    std::unordered_set<detail::Node<T>*> visited;
    // Iterative post-order DFS; (node, next input index).
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node<T>* child = node->inputs[next++].get();
            if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            tape.nodes.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

template <class T>
void backward(const Tensor<T>& root) {
    if (!root.defined() || root.rank() != 0) {
        throw ContractError("backward() needs a scalar root, got shape " +
                            (root.defined() ? to_string(root.shape()) : std::string("<undefined>")));
    }
    if (!root.requires_grad()) throw ContractError("backward() root is not on the gradient tape");

    Tape<T> tape = Tape<T>::record(root);
    for (auto* n : tape.nodes) {
        if (n->backward) n->grad.assign(n->data.size(), T(0));
    }
    root.node()->ensure_grad();
    root.node()->grad[0] += T(1);
    for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
        detail::Node<T>* n = *it;
        if (!n->backward) continue;
        n->backward(*n);
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      const char* op, std::function<void(detail::Node<T>&)> backward_fn) {
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
    }
    if (needs) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) node->inputs.push_back(in.node());
        node->backward = std::move(backward_fn);
    }
    return Tensor<T>::from_node(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;
template struct Tape<float>;
template struct Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>, const char*,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    const char*, std::function<void(detail::Node<double>&)>);

}  // namespace mxt
