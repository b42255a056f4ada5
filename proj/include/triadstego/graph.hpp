#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "triadstego/errors.hpp"
#include "triadstego/tensor.hpp"

namespace triadstego::nn {

// One value in a dynamically built computation graph. Ops are free functions
// (ops.hpp) that produce a new node, record their parents, and capture a
// closure that routes the node's gradient into the parents' gradients.
// requires_grad propagates forward from trainable leaves; backward() skips
// everything outside the reachable trainable cone, which is how agents are
// frozen: a frozen agent's leaves simply don't require gradients, while
// gradients still flow through its ops to upstream players.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    bool grad_ready = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

    void ensure_grad() {
        if (!grad_ready) {
            grad = Tensor<T>(value.shape());
            grad_ready = true;
        }
    }

    void accumulate(const Tensor<T>& g) {
        ensure_grad();
        T* dst = grad.data();
        const T* src = g.data();
        for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
    }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_leaf(Tensor<T> value, bool requires_grad, std::string name) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->name = std::move(name);
    return node;
}

template <typename T>
NodePtr<T> make_constant(Tensor<T> value, std::string name = "const") {
    return make_leaf<T>(std::move(value), false, std::move(name));
}

namespace detail {

template <typename T>
void topo_visit(const NodePtr<T>& node, std::unordered_set<const Node<T>*>& seen,
                std::vector<NodePtr<T>>& order) {
    // Iterative DFS; graphs can be thousands of nodes deep over a full
    // three-agent forward pass.
    struct Frame {
        NodePtr<T> node;
        std::size_t next_parent = 0;
    };
    std::vector<Frame> stack;
    if (seen.insert(node.get()).second) stack.push_back({node, 0});
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next_parent < top.node->parents.size()) {
            const NodePtr<T> parent = top.node->parents[top.next_parent++];
            if (seen.insert(parent.get()).second) stack.push_back({parent, 0});
        } else {
            order.push_back(top.node);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Throws NumericError naming the
// offending node if any propagated gradient is non-finite.
template <typename T>
void backward(const NodePtr<T>& loss) {
    if (loss->value.size() != 1) {
        throw ConfigError("backward() expects a scalar loss, got shape " +
                          loss->value.shape_str());
    }
    if (!loss->requires_grad) return;  // nothing trainable reachable
    std::unordered_set<const Node<T>*> seen;
    std::vector<NodePtr<T>> order;
    detail::topo_visit(loss, seen, order);
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>& node = **it;
        if (!node.requires_grad || !node.backward_fn) continue;
        if (!node.grad_ready) continue;  // no gradient reached this node
        if (!node.grad.all_finite()) {
            throw NumericError("non-finite gradient at node \"" + node.name + "\"");
        }
        node.backward_fn(node);
    }
}

}  // namespace triadstego::nn
