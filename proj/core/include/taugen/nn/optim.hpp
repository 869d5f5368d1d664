#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "taugen/nn/graph.hpp"
#include "taugen/nn/tensor.hpp"
#include "taugen/rng.hpp"

namespace taugen::nn {

struct OptimConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 8;

    void validate() const;
};

// Named parameters plus Adam moments. Iteration order is name-sorted, so
// every whole-store walk is deterministic.
struct ParamStore {
    struct Entry {
        Tensor value;
        Tensor m;  // first moment
        Tensor v;  // second moment
    };

    std::map<std::string, Entry> params;
    int64_t step_count = 0;

    Tensor& add(const std::string& name, Tensor init);
    bool has(const std::string& name) const { return params.count(name) > 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& mutable_value(const std::string& name);

    int64_t total_parameters() const;
};

// Standard bias-corrected Adam. Parameters without an entry in `grads` are
// left untouched; a NaN/Inf gradient raises TrainingError naming the tensor.
void adam_step(ParamStore& ps, const GradMap& grads, const OptimConfig& cfg);

// Initializers. Truncated normal resamples draws beyond two standard
// deviations.
Tensor trunc_normal_init(std::vector<int> shape, double stddev, RngState& rng);
Tensor zeros_init(std::vector<int> shape);

}  // namespace taugen::nn
