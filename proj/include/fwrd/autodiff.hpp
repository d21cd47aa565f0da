// Tape-free reverse-mode differentiation over a closed set of tensor ops.
//
// Every op returns a Var whose node keeps its parents and a backward closure
// when at least one parent requires gradients. backward() walks the graph in
// reverse topological order starting from a scalar.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fwrd/tensor.hpp"

namespace fwrd {

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor<T>& grad_buffer() {
        if (grad.empty()) grad = Tensor<T>(value.shape());
        return grad;
    }
    bool has_grad() const { return !grad.empty(); }
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false, std::string name = {})
        : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
        node_->name = std::move(name);
    }

    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool has_grad() const { return node_->has_grad(); }
    bool requires_grad() const { return node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    const std::string& name() const { return node_->name; }
    void zero_grad() { node_->grad = Tensor<T>(); }
    void set_requires_grad(bool r) { node_->requires_grad = r; }

    std::shared_ptr<Node<T>> node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

    /// Builds an op result. The closure is attached only when some parent needs gradients.
    static Var make(Tensor<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> fn) {
        Var out(std::move(value));
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        if (any) {
            out.node_->requires_grad = true;
            for (auto& p : parents) out.node_->parents.push_back(p.node_);
            out.node_->backward_fn = std::move(fn);
        }
        return out;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Gradient of `parent_index`-th parent, allocated on first use.
template <class T>
Tensor<T>* parent_grad(Node<T>& node, std::size_t parent_index) {
    auto& p = *node.parents[parent_index];
    if (!p.requires_grad) return nullptr;
    return &p.grad_buffer();
}

/// Back-propagates from a scalar loss. Leaf gradients accumulate; intermediate
/// gradients and closures are released afterwards so the graph can be freed.
template <class T>
void backward(const Var<T>& loss) {
    if (loss.value().numel() != 1)
        throw ShapeError("backward requires a scalar loss, got shape " + loss.shape().str());
    if (!loss.requires_grad()) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer().fill(T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
    }
    for (Node<T>* n : order) {
        if (n->backward_fn) {
            n->grad = Tensor<T>();
            n->backward_fn = nullptr;
            n->parents.clear();
        }
    }
}

}  // namespace fwrd
