#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "taugen/conditioning.hpp"
#include "taugen/denoiser.hpp"
#include "taugen/errors.hpp"
#include "taugen/nn/gradcheck.hpp"
#include "taugen/nn/ops.hpp"
#include "taugen/rng.hpp"

using namespace taugen;
using namespace taugen::nn;
using taugen::testing::WithPrecision;

namespace {

Tensor random_tensor(std::vector<int> shape, RngState& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("central differences are exact on a quadratic") {
    WithPrecision p(Precision::f64);
    ParamStore ps;
    ps.add("w", Tensor::from({1}, {3.0}));
    const auto report = grad_check(
        [&](Workspace& w) {
            Var x = w.use(ps, "w");
            return sum(mul(x, x));
        },
        ps, 1e-3);
    CHECK(report.max_rel_err < 1e-9);

    // And the numeric estimate itself is 6 to machine-level accuracy.
    const double fp = (3.0 + 1e-3) * (3.0 + 1e-3);
    const double fm = (3.0 - 1e-3) * (3.0 - 1e-3);
    CHECK(std::abs((fp - fm) / 2e-3 - 6.0) < 1e-9);
}

TEST_CASE("constant target has zero error") {
    WithPrecision p(Precision::f64);
    ParamStore ps;
    ps.add("w", Tensor::from({2}, {1.0, -2.0}));
    const auto report = grad_check(
        [&](Workspace& w) {
            (void)w.use(ps, "w");
            return w.constant(Tensor::scalar(4.25));
        },
        ps, 1e-3);
    CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("non-finite target raises CheckError") {
    WithPrecision p(Precision::f64);
    ParamStore ps;
    ps.add("w", Tensor::from({1}, {1.0}));
    CHECK_THROWS_AS(grad_check(
                        [&](Workspace& w) {
                            (void)w.use(ps, "w");
                            return w.constant(Tensor::scalar(std::nan("")));
                        },
                        ps, 1e-3),
                    CheckError);
}

TEST_CASE("every differentiable primitive passes the finite-difference check") {
    WithPrecision p(Precision::f64);
    RngState rng(100);

    auto check_ok = [&](const char* what, ParamStore& ps,
                        const std::function<Var(Workspace&)>& build) {
        const auto report = grad_check(build, ps, 1e-4);
        INFO(what << " worst=" << report.worst.name << "[" << report.worst.index
                  << "] err=" << report.max_rel_err);
        CHECK(report.max_rel_err < 1e-4);
    };

    {
        ParamStore ps;
        ps.add("x", random_tensor({2, 4, 4, 4}, rng));
        ps.add("w", random_tensor({3, 2, 3, 3, 3}, rng));
        ps.add("b", random_tensor({3}, rng));
        check_ok("conv3d s1p1", ps, [&](Workspace& w) {
            return sum(silu(conv3d(w.use(ps, "x"), w.use(ps, "w"), w.use(ps, "b"), 1, 1)));
        });
        check_ok("conv3d s2p1", ps, [&](Workspace& w) {
            return mean(conv3d(w.use(ps, "x"), w.use(ps, "w"), w.use(ps, "b"), 2, 1));
        });
        check_ok("conv3d s1p0", ps, [&](Workspace& w) {
            return sumsq(conv3d(w.use(ps, "x"), w.use(ps, "w"), w.use(ps, "b"), 1, 0));
        });
    }
    {
        ParamStore ps;
        ps.add("x", random_tensor({3, 5}, rng));
        ps.add("w", random_tensor({4, 5}, rng));
        ps.add("b", random_tensor({4}, rng));
        check_ok("linear", ps, [&](Workspace& w) {
            return sum(silu(linear(w.use(ps, "x"), w.use(ps, "w"), w.use(ps, "b"))));
        });
    }
    {
        ParamStore ps;
        ps.add("a", random_tensor({3, 4}, rng));
        ps.add("b", random_tensor({4, 2}, rng));
        check_ok("matmul+transpose", ps, [&](Workspace& w) {
            return sumsq(transpose(matmul(w.use(ps, "a"), w.use(ps, "b"))));
        });
    }
    {
        ParamStore ps;
        ps.add("x", random_tensor({3, 6}, rng, -2.0, 2.0));
        ps.add("r", random_tensor({3, 6}, rng));
        check_ok("softmax", ps, [&](Workspace& w) {
            return sum(mul(softmax_rows(w.use(ps, "x")), w.use(ps, "r")));
        });
    }
    {
        ParamStore ps;
        ps.add("x", random_tensor({4, 2, 2, 2}, rng, -2.0, 2.0));
        ps.add("g", random_tensor({4}, rng, 0.5, 1.5));
        ps.add("b", random_tensor({4}, rng));
        ps.add("r", random_tensor({4, 2, 2, 2}, rng));
        check_ok("group_norm", ps, [&](Workspace& w) {
            return sum(mul(group_norm(w.use(ps, "x"), w.use(ps, "g"), w.use(ps, "b"), 2),
                           w.use(ps, "r")));
        });
    }
    {
        ParamStore ps;
        ps.add("x", random_tensor({2, 2, 2, 2}, rng));
        check_ok("resampling", ps, [&](Workspace& w) {
            Var up = upsample_nearest2(w.use(ps, "x"));
            return sumsq(downsample_nearest2(silu(up)));
        });
        check_ok("trilinear", ps, [&](Workspace& w) {
            return sumsq(silu(upsample_trilinear2(w.use(ps, "x"))));
        });
        ParamStore ps8;
        ps8.add("x8", random_tensor({8, 2, 2, 2}, rng));
        check_ok("voxel shuffle", ps8, [&](Workspace& w) {
            return sumsq(silu(voxel_shuffle2(w.use(ps8, "x8"))));
        });
    }
    {
        ParamStore ps;
        ps.add("x", random_tensor({2, 2, 2, 2}, rng));
        ps.add("b", random_tensor({2}, rng));
        ps.add("y", random_tensor({2, 2, 2, 2}, rng));
        check_ok("bias+concat+slice+mse", ps, [&](Workspace& w) {
            Var cat = concat_channels(add_channel_bias(w.use(ps, "x"), w.use(ps, "b")),
                                      w.use(ps, "y"));
            return mse(slice_channels(cat, 1, 3), slice_channels(cat, 0, 2));
        });
    }
    {
        ParamStore ps;
        ps.add("f", random_tensor({3, 2, 2, 1}, rng));
        ps.add("wq", random_tensor({3, 4}, rng));
        ps.add("wk", random_tensor({5, 4}, rng));
        ps.add("wv", random_tensor({5, 4}, rng));
        ps.add("wo", random_tensor({4, 3}, rng));
        const PromptEmbedding c = encode_reference(3.65, 2, 5);
        check_ok("cross-attention block", ps, [&](Workspace& w) {
            Var cvar = w.constant(Tensor::from({c.tokens, c.dim}, c.c));
            Var tokens = spatial_tokens(w.use(ps, "f"));
            Var q = matmul(tokens, w.use(ps, "wq"));
            Var k = matmul(cvar, w.use(ps, "wk"));
            Var v = matmul(cvar, w.use(ps, "wv"));
            Var a = softmax_rows(scale(matmul(q, transpose(k)), 0.5));
            Var y = matmul(matmul(a, v), w.use(ps, "wo"));
            return sumsq(add(w.use(ps, "f"), tokens_to_spatial(y, 2, 2, 1)));
        });
    }
}

TEST_CASE("shared subgraphs accumulate gradients once per use") {
    WithPrecision p(Precision::f64);
    ParamStore ps;
    ps.add("x", Tensor::from({2}, {1.5, -0.5}));
    // f = sum(x*x) + 3*sum(x) uses the same leaf twice.
    const auto report = grad_check(
        [&](Workspace& w) {
            Var x = w.use(ps, "x");
            return add(sum(mul(x, x)), scale(sum(x), 3.0));
        },
        ps, 1e-4);
    CHECK(report.max_rel_err < 1e-8);
}
