#ifndef DDUNET_TENSOR_HPP
#define DDUNET_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ddunet {

/// Dense row-major N-dimensional array. Plain value type; gradient tracking
/// lives in Var.
template <typename T>
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s, T fill = T(0))
        : shape(std::move(s)) {
        for (auto d : shape) {
            if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
        }
        data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
    }
    Tensor(std::vector<std::int64_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
            throw std::invalid_argument("tensor data length does not match shape");
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                               std::multiplies<>());
    }
    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool empty() const { return data.empty(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            out.data[i] = static_cast<U>(data[i]);
        return out;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << shape[i] << (i + 1 < shape.size() ? "," : "");
        os << ']';
        return os.str();
    }
};

template <typename T>
class Var;
template <typename T>
using VarPtr = std::shared_ptr<Var<T>>;

/// A tensor participating in a backward graph. Leaves carry parameters or
/// inputs; interior nodes carry a backprop closure that routes this node's
/// grad into its parents' grads (accumulating, so fan-out sums naturally).
template <typename T>
class Var {
public:
    Tensor<T> value;
    Tensor<T> grad;  // empty until backward reaches this node
    bool requires_grad = false;
    std::vector<VarPtr<T>> parents;
    std::function<void(Var<T>&)> backprop;

    Var() = default;
    explicit Var(Tensor<T> v, bool rg = false)
        : value(std::move(v)), requires_grad(rg) {}

    void ensure_grad() {
        if (grad.empty()) grad = Tensor<T>(value.shape);
    }
    void accumulate(const T* g, std::int64_t n) {
        ensure_grad();
        if (n != grad.numel()) throw std::logic_error("gradient size mismatch");
        for (std::int64_t i = 0; i < n; ++i) grad.data[static_cast<std::size_t>(i)] += g[i];
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.data.begin(), grad.data.end(), T(0));
    }
};

template <typename T>
VarPtr<T> make_leaf(Tensor<T> v, bool requires_grad = false) {
    return std::make_shared<Var<T>>(std::move(v), requires_grad);
}

template <typename T>
VarPtr<T> make_node(Tensor<T> v, std::vector<VarPtr<T>> parents,
                    std::function<void(Var<T>&)> backprop) {
    auto node = std::make_shared<Var<T>>(std::move(v));
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
    for (auto& p : node->parents)
        if (p->requires_grad || p->backprop) node->requires_grad = true;
    return node;
}

namespace detail {
template <typename T>
void topo_visit(const VarPtr<T>& node, std::unordered_set<const Var<T>*>& seen,
                std::vector<VarPtr<T>>& order) {
    // Iterative DFS; graphs can be deep at high stage counts.
    std::vector<std::pair<VarPtr<T>, std::size_t>> stack;
    if (!seen.insert(node.get()).second) return;
    stack.emplace_back(node, 0);
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx < cur->parents.size()) {
            auto& next = cur->parents[idx++];
            if (seen.insert(next.get()).second) stack.emplace_back(next, 0);
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }
}
}  // namespace detail

/// Reverse-mode sweep from a scalar loss node. Visits nodes in reverse
/// topological order; each node's closure adds its contribution to the
/// parents' grad buffers.
template <typename T>
void backward(const VarPtr<T>& loss) {
    if (!loss) throw std::invalid_argument("backward: null loss node");
    if (loss->value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    loss->value.shape_str());
    std::unordered_set<const Var<T>*> seen;
    std::vector<VarPtr<T>> order;
    detail::topo_visit(loss, seen, order);
    loss->ensure_grad();
    loss->grad.data[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& node = **it;
        if (node.backprop && !node.grad.empty()) node.backprop(node);
    }
}

/// Zeroes grads over the whole graph reachable from `root`.
template <typename T>
void zero_grads(const VarPtr<T>& root) {
    std::unordered_set<const Var<T>*> seen;
    std::vector<VarPtr<T>> order;
    detail::topo_visit(root, seen, order);
    for (auto& n : order) n->zero_grad();
}

// ---- elementwise / reduction primitives ----

template <typename T>
VarPtr<T> add(const VarPtr<T>& a, const VarPtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("add: shape mismatch " + a->value.shape_str() +
                                    " vs " + b->value.shape_str());
    Tensor<T> out(a->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out.data[i] = a->value.data[i] + b->value.data[i];
    return make_node<T>(std::move(out), {a, b}, [](Var<T>& n) {
        n.parents[0]->accumulate(n.grad.ptr(), n.grad.numel());
        n.parents[1]->accumulate(n.grad.ptr(), n.grad.numel());
    });
}

template <typename T>
VarPtr<T> mul(const VarPtr<T>& a, const VarPtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("mul: shape mismatch");
    Tensor<T> out(a->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out.data[i] = a->value.data[i] * b->value.data[i];
    return make_node<T>(std::move(out), {a, b}, [](Var<T>& n) {
        auto& a_ = *n.parents[0];
        auto& b_ = *n.parents[1];
        std::int64_t m = n.grad.numel();
        std::vector<T> tmp(static_cast<std::size_t>(m));
        for (std::int64_t i = 0; i < m; ++i) tmp[i] = n.grad.data[i] * b_.value.data[i];
        a_.accumulate(tmp.data(), m);
        for (std::int64_t i = 0; i < m; ++i) tmp[i] = n.grad.data[i] * a_.value.data[i];
        b_.accumulate(tmp.data(), m);
    });
}

template <typename T>
VarPtr<T> scale(const VarPtr<T>& a, T c) {
    Tensor<T> out(a->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * c;
    return make_node<T>(std::move(out), {a}, [c](Var<T>& n) {
        std::int64_t m = n.grad.numel();
        std::vector<T> tmp(static_cast<std::size_t>(m));
        for (std::int64_t i = 0; i < m; ++i) tmp[i] = n.grad.data[i] * c;
        n.parents[0]->accumulate(tmp.data(), m);
    });
}

/// Full reduction to a scalar [1] tensor.
template <typename T>
VarPtr<T> sum(const VarPtr<T>& a) {
    T s(0);
    for (auto v : a->value.data) s += v;
    Tensor<T> out({1});
    out.data[0] = s;
    return make_node<T>(std::move(out), {a}, [](Var<T>& n) {
        std::int64_t m = n.parents[0]->value.numel();
        std::vector<T> tmp(static_cast<std::size_t>(m), n.grad.data[0]);
        n.parents[0]->accumulate(tmp.data(), m);
    });
}

}  // namespace ddunet

#endif  // DDUNET_TENSOR_HPP
