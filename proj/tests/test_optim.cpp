#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "taugen/errors.hpp"
#include "taugen/nn/checkpoint.hpp"
#include "taugen/nn/optim.hpp"

using namespace taugen;
using namespace taugen::nn;
using taugen::testing::TempDir;
using taugen::testing::WithPrecision;

TEST_CASE("first Adam step applies the bias-corrected update") {
    WithPrecision p(Precision::f64);
    ParamStore ps;
    ps.add("w", Tensor::from({1}, {1.0}));
    OptimConfig cfg;
    cfg.learning_rate = 0.1;

    GradMap grads;
    grads.emplace("w", Tensor::from({1}, {2.0}));
    adam_step(ps, grads, cfg);

    // m_hat = g, v_hat = g^2 after one step: delta = -lr * g / (|g| + eps).
    const double expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
    CHECK(std::abs(ps.get("w").v[0] - expected) < 1e-12);
    CHECK(std::abs((ps.get("w").v[0] - 1.0) + 0.1) < 1e-8);
    CHECK(ps.step_count == 1);
}

TEST_CASE("zero gradient is a fixed point") {
    WithPrecision p(Precision::f64);
    ParamStore ps;
    ps.add("w", Tensor::from({3}, {1.0, -2.0, 0.5}));
    GradMap grads;
    grads.emplace("w", Tensor({3}, 0.0));
    adam_step(ps, grads, OptimConfig{});
    CHECK(ps.get("w").v == std::vector<double>{1.0, -2.0, 0.5});
    CHECK(ps.params.at("w").m.v == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(ps.params.at("w").v.v == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("step counter equals the number of calls") {
    ParamStore ps;
    ps.add("w", Tensor::from({1}, {0.0}));
    GradMap g1;
    g1.emplace("w", Tensor::from({1}, {1.0}));
    adam_step(ps, g1, OptimConfig{});
    adam_step(ps, g1, OptimConfig{});
    CHECK(ps.step_count == 2);
}

TEST_CASE("NaN gradient raises TrainingError naming the parameter") {
    ParamStore ps;
    ps.add("theta.w", Tensor::from({1}, {0.0}));
    GradMap grads;
    grads.emplace("theta.w", Tensor::from({1}, {std::nan("")}));
    try {
        adam_step(ps, grads, OptimConfig{});
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("theta.w") != std::string::npos);
    }
}

TEST_CASE("optimizer config gates") {
    OptimConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = OptimConfig{};
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("truncated normal stays within two standard deviations") {
    RngState rng(17);
    WithPrecision p(Precision::f64);
    const Tensor t = trunc_normal_init({1000}, 0.25, rng);
    for (double x : t.v) CHECK(std::abs(x) <= 0.5 + 1e-12);
}

TEST_CASE("checkpoint round trip preserves values, moments, and step") {
    WithPrecision p(Precision::f32);  // f32 values survive the float blob exactly
    TempDir tmp("ckpt");
    ParamStore ps;
    RngState rng(23);
    ps.add("a.w", trunc_normal_init({3, 2}, 0.7, rng));
    ps.add("b.w", trunc_normal_init({4}, 0.1, rng));
    GradMap grads;
    grads.emplace("a.w", trunc_normal_init({3, 2}, 1.0, rng));
    grads.emplace("b.w", trunc_normal_init({4}, 1.0, rng));
    adam_step(ps, grads, OptimConfig{});

    const auto path = tmp.path / "test.ckpt";
    save_checkpoint(path, ps, "{\"epoch\": 7}");
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.store.step_count == ps.step_count);
    CHECK(ck.meta_json.find("\"epoch\":7") != std::string::npos);
    for (const auto& [name, e] : ps.params) {
        CHECK(ck.store.get(name).v == e.value.v);
        CHECK(ck.store.params.at(name).m.v == e.m.v);
        CHECK(ck.store.params.at(name).v.v == e.v.v);
    }

    // Determinism: a second save produces identical bytes.
    save_checkpoint(tmp.path / "test2.ckpt", ps, "{\"epoch\": 7}");
    std::ifstream a(path, std::ios::binary), b(tmp.path / "test2.ckpt", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}
