#pragma once

#include <functional>
#include <string>
#include <vector>

#include "taugen/nn/optim.hpp"

namespace taugen::nn {

struct Coord {
    std::string name;
    int64_t index = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    Coord worst;
    size_t coords_checked = 0;
};

// Compares the reverse-mode gradient of the scalar graph produced by `build`
// against central finite differences at the given step, per coordinate.
// Checks `coords` when non-empty, otherwise every coordinate of every
// parameter. The error metric is |a - n| / max(1, |a|, |n|), so it reads as
// relative error for O(1) gradients and absolute error near zero.
// Rebuilds the graph for each probe; `build` must be pure given the store.
GradCheckReport grad_check(const std::function<Var(Workspace&)>& build, ParamStore& ps,
                           double step, const std::vector<Coord>& coords = {});

}  // namespace taugen::nn
