#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "t2ue/core/tensor.hpp"

namespace t2ue {

template <typename Scalar>
class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid for the graph's lifetime.
template <typename Scalar>
class Var {
public:
    Var() = default;
    Var(Graph<Scalar>* g, int id) : g_(g), id_(id) {}

    int id() const { return id_; }
    Graph<Scalar>* graph() const { return g_; }
    bool valid() const { return g_ != nullptr; }

    const Tensor<Scalar>& value() const;
    const Tensor<Scalar>& grad() const;
    const std::vector<int>& shape() const { return value().shape; }

private:
    Graph<Scalar>* g_ = nullptr;
    int id_ = -1;
};

/// Define-by-run reverse-mode tape. Nodes are appended in topological order;
/// backward() walks them in reverse. One graph per training step.
template <typename Scalar>
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, int self)>;

    Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
    }

    /// Generic op node. `backward` reads grad(self) and accumulates into the
    /// parents; it is also the extension point the gradient-checker tests use
    /// to build deliberately wrong gradients.
    Var<Scalar> apply(Tensor<Scalar> value, const std::vector<Var<Scalar>>& parents, BackwardFn backward) {
        Node n;
        n.value = std::move(value);
        for (const auto& p : parents) {
            if (p.graph() != this) throw std::invalid_argument("graph: parent from another graph");
            n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(p.id())].needs_grad;
        }
        if (n.needs_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
    }

    const Tensor<Scalar>& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }

    bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    /// Gradient tensor of a node, allocated on first touch.
    Tensor<Scalar>& grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.size() == 0) n.grad = Tensor<Scalar>::zeros(n.value.shape);
        return n.grad;
    }

    bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad.size() != 0; }

    void accumulate(int id, const ArrayX<Scalar>& g) {
        if (!needs_grad(id)) return;
        grad(id).data += g;
    }

    /// Reverse sweep from a scalar root. Seeds d(root)/d(root) = 1.
    void backward(Var<Scalar> root) {
        if (root.graph() != this) throw std::invalid_argument("graph: foreign root");
        const Node& r = nodes_[static_cast<size_t>(root.id())];
        if (r.value.size() != 1) throw std::invalid_argument("graph: backward root must be scalar");
        if (!r.needs_grad) return;
        grad(root.id()).data[0] += Scalar(1);
        for (int i = root.id(); i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.backward && n.grad.size() != 0) n.backward(*this, i);
        }
    }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<Scalar> value;
        Tensor<Scalar> grad;
        BackwardFn backward;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::value() const {
    return g_->value(id_);
}

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::grad() const {
    return g_->grad(id_);
}

}  // namespace t2ue
