#include "taugen/nn/graph.hpp"

#include <atomic>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "taugen/errors.hpp"
#include "taugen/nn/optim.hpp"

namespace taugen::nn {

Tensor& Node::ensure_grad() {
    if (grad.v.empty()) grad = Tensor(value.shape, 0.0);
    return grad;
}

Var make_leaf(Tensor value, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

void backward(const Var& root) {
    if (!root) throw ParameterError("backward on empty Var");
    if (root->value.numel() != 1) throw ShapeError("backward requires a scalar root");

    // Iterative post-order DFS; reversed post-order is a valid topo order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Node* child = node->parents[next_child++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.v[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.v.empty()) n->backprop(*n);
    }
}

Var Workspace::use(const ParamStore& ps, const std::string& name) {
    auto it = leaves.find(name);
    if (it != leaves.end()) return it->second;
    Var leaf = make_leaf(ps.get(name), true, name);
    leaves.emplace(name, leaf);
    return leaf;
}

Var Workspace::constant(Tensor value) {
    return make_leaf(std::move(value), false);
}

GradMap Workspace::grads() const {
    GradMap out;
    for (const auto& [name, leaf] : leaves) {
        if (leaf->grad.v.empty())
            out.emplace(name, Tensor(leaf->value.shape, 0.0));
        else
            out.emplace(name, leaf->grad);
    }
    return out;
}

void accumulate(GradMap& into, const GradMap& from) {
    const bool f32 = precision() == Precision::f32;
    for (const auto& [name, g] : from) {
        auto it = into.find(name);
        if (it == into.end()) {
            into.emplace(name, g);
            continue;
        }
        if (!it->second.same_shape(g))
            throw ShapeError("gradient shape mismatch for '" + name + "'");
        auto& dst = it->second.v;
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = round_mode(dst[i] + g.v[i], f32);
    }
}

void parallel_items(size_t n, const std::function<void(size_t)>& fn, int threads) {
    if (threads <= 0) threads = std::max(2u, std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, int(n)));
    if (threads == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(size_t(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace taugen::nn
