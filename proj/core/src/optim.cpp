#include "taugen/nn/optim.hpp"

#include <cmath>

#include "taugen/errors.hpp"

namespace taugen::nn {

void OptimConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (params.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Entry e;
    e.m = Tensor(init.shape, 0.0);
    e.v = Tensor(init.shape, 0.0);
    e.value = std::move(init);
    return params.emplace(name, std::move(e)).first->second.value;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw LookupError("unknown parameter: " + name);
    return it->second.value;
}

Tensor& ParamStore::mutable_value(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw LookupError("unknown parameter: " + name);
    return it->second.value;
}

int64_t ParamStore::total_parameters() const {
    int64_t n = 0;
    for (const auto& [_, e] : params) n += e.value.numel();
    return n;
}

void adam_step(ParamStore& ps, const GradMap& grads, const OptimConfig& cfg) {
    cfg.validate();
    const bool f32 = precision() == Precision::f32;
    const int64_t t = ++ps.step_count;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));

    for (const auto& [name, g] : grads) {
        auto it = ps.params.find(name);
        if (it == ps.params.end()) throw LookupError("gradient for unknown parameter: " + name);
        ParamStore::Entry& e = it->second;
        if (!g.same_shape(e.value))
            throw ShapeError("gradient shape " + nn::shape_str(g.shape) +
                             " does not match parameter '" + name + "' " +
                             nn::shape_str(e.value.shape));
        for (size_t i = 0; i < g.v.size(); ++i) {
            const double gi = g.v[i];
            if (!std::isfinite(gi))
                throw TrainingError("non-finite gradient in parameter '" + name + "'");
            const double m = cfg.beta1 * e.m.v[i] + (1.0 - cfg.beta1) * gi;
            const double v = cfg.beta2 * e.v.v[i] + (1.0 - cfg.beta2) * gi * gi;
            e.m.v[i] = round_mode(m, f32);
            e.v.v[i] = round_mode(v, f32);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            e.value.v[i] =
                round_mode(e.value.v[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps), f32);
        }
    }
}

Tensor trunc_normal_init(std::vector<int> shape, double stddev, RngState& rng) {
    Tensor t(std::move(shape));
    const bool f32 = precision() == Precision::f32;
    for (double& x : t.v) {
        double z = rng.normal();
        while (std::abs(z) > 2.0) z = rng.normal();
        x = round_mode(z * stddev, f32);
    }
    return t;
}

Tensor zeros_init(std::vector<int> shape) {
    return Tensor(std::move(shape), 0.0);
}

}  // namespace taugen::nn
