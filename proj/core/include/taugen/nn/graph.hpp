#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "taugen/nn/tensor.hpp"

namespace taugen::nn {

struct ParamStore;

// One node of the dynamic reverse-mode graph. `backprop` reads this node's
// grad and scatter-adds into the parents' grads; it is only installed while
// some ancestor requires gradients.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand during backward
    bool requires_grad = false;
    std::string name;  // set for parameter leaves
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    Tensor& ensure_grad();
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor value, bool requires_grad = false, std::string name = "");

// Reverse pass from a scalar root. Seeds root.grad = 1 and runs each node's
// backprop in reverse topological order. Deterministic: the visit order is a
// pure function of graph construction order.
void backward(const Var& root);

// Per-forward registry of parameter leaves so gradients can be mapped back
// to parameter names after backward().
struct Workspace {
    std::map<std::string, Var> leaves;

    Var use(const ParamStore& ps, const std::string& name);
    Var constant(Tensor value);

    // name -> gradient for every registered leaf (zeros when untouched).
    std::map<std::string, Tensor> grads() const;
};

using GradMap = std::map<std::string, Tensor>;

// Accumulate `from` into `into` elementwise (shapes must match; missing
// entries are inserted). Used for fixed-order batch reduction.
void accumulate(GradMap& into, const GradMap& from);

// Evaluate fn(0..n-1) across up to `threads` workers. Each call must only
// write slot i of its own outputs; callers reduce in index order afterwards,
// so results do not depend on the thread count.
void parallel_items(size_t n, const std::function<void(size_t)>& fn, int threads = 0);

}  // namespace taugen::nn
