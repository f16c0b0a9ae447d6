#pragma once

// Dense double tensors plus a small reverse-mode tape. Every op builds a Node
// holding its value, a zero-initialised gradient buffer, and a closure that
// pushes gradients into its parents. backward() replays the closures in
// reverse creation order, which is a valid topological order because ops only
// consume already-built nodes.

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "pbd/core.hpp"

namespace pbd {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        v.assign((size_t)count(shape), fill);
    }
    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            require(d >= 0, "Tensor: negative dimension");
            n *= d;
        }
        return n;
    }
    int64_t size() const { return (int64_t)v.size(); }
    int dim(int i) const { return shape[(i < 0 ? (int)shape.size() + i : i)]; }
    double& operator[](int64_t i) { return v[(size_t)i]; }
    double operator[](int64_t i) const { return v[(size_t)i]; }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

struct Node {
    Tensor val;
    Tensor grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;  // empty for leaves/constants
    int64_t order = 0;
    bool requires_grad = true;
};

using Var = std::shared_ptr<Node>;

namespace autodiff_detail {
inline int64_t& order_counter() {
    static int64_t n = 0;
    return n;
}
}  // namespace autodiff_detail

inline Var make_node(Tensor val, std::vector<Var> parents = {}, bool requires_grad = true) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor(val.shape, 0.0);
    n->val = std::move(val);
    n->parents = std::move(parents);
    n->requires_grad = requires_grad;
    n->order = ++autodiff_detail::order_counter();
    return n;
}

inline Var constant(Tensor val) { return make_node(std::move(val), {}, false); }
inline Var param(Tensor val) { return make_node(std::move(val)); }

// Accumulates d(root)/d(node) into every reachable node's grad buffer.
inline void backward(const Var& root) {
    require(root->val.size() == 1, "backward: root must be scalar");
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Node* a, const Node* b) { return a->order > b->order; });
    root->grad.v[0] += 1.0;
    for (Node* n : nodes)
        if (n->backprop) n->backprop();
}

inline void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) std::fill(p->grad.v.begin(), p->grad.v.end(), 0.0);
}

}  // namespace pbd
