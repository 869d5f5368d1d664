#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "taugen/errors.hpp"
#include "taugen/schedule.hpp"

using namespace taugen;

TEST_CASE("single-step and constant-beta tables") {
    const NoiseSchedule s1 = make_linear_schedule(1, 0.5, 0.5);
    CHECK(s1.alpha_bar_t(1) == doctest::Approx(0.5).epsilon(1e-12));

    const NoiseSchedule s2 = make_linear_schedule(2, 0.5, 0.5);
    CHECK(s2.alpha_bar_t(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s2.alpha_bar_t(2) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("default schedules decay below their terminal bounds") {
    const NoiseSchedule full = default_full_schedule();
    CHECK(full.T == 1000);
    CHECK(full.alpha_bar_t(full.T) < 1e-4);

    const NoiseSchedule desk = default_desk_schedule();
    CHECK(desk.T == 200);
    CHECK(desk.alpha_bar_t(desk.T) < 0.01);

    for (const NoiseSchedule* s : {&full, &desk}) {
        CHECK(s->posterior_var_t(1) == 0.0);
        for (int t = 1; t < s->T; ++t) {
            CHECK(s->alpha_bar_t(t + 1) < s->alpha_bar_t(t));  // strictly decreasing
            CHECK(s->beta_t(t) > 0.0);
            CHECK(s->beta_t(t) < 1.0);
        }
    }
}

TEST_CASE("schedule parameter gates") {
    CHECK_THROWS_AS(make_linear_schedule(0, 0.1, 0.2), ParameterError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.2), ParameterError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.3, 0.2), ParameterError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.1, 1.0), ParameterError);
}

TEST_CASE("forward_sample plug-in values") {
    // T=1 with beta = 0.75 gives alpha_bar = 0.25.
    const NoiseSchedule s = make_linear_schedule(1, 0.75, 0.75);
    LatentGrid z0(1, 1, 1, 1);
    z0.v[0] = 1.0;
    LatentGrid eps(1, 1, 1, 1);
    eps.v[0] = 0.0;
    const LatentGrid zt = forward_sample(z0, 1, eps, s);
    CHECK(zt.v[0] == doctest::Approx(0.5).epsilon(1e-12));

    // Nearly-zero beta: z_t -> z0 in the no-noise limit.
    const NoiseSchedule s2 = make_linear_schedule(1, 1e-9, 1e-9);
    const LatentGrid zt2 = forward_sample(z0, 1, eps, s2);
    CHECK(zt2.v[0] == doctest::Approx(1.0).epsilon(1e-8));

    CHECK_THROWS_AS(forward_sample(z0, 2, eps, s), ParameterError);
    CHECK_THROWS_AS(forward_sample(z0, 0, eps, s), ParameterError);
}

TEST_CASE("forward marginal matches N(sqrt(abar) z0, 1-abar) at n=1e5") {
    const NoiseSchedule s = default_desk_schedule();
    const int n = 100000;
    const double z0val = 1.7;
    const int t = 100;

    LatentGrid z0(1, n, 1, 1, z0val);
    LatentGrid eps = gaussian_like(z0, RngState(31).substream("eps"));
    const LatentGrid zt = forward_sample(z0, t, eps, s);

    double sum = 0.0, sumsq = 0.0;
    for (double x : zt.v) {
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double abar = s.alpha_bar_t(t);
    const double want_mean = std::sqrt(abar) * z0val;
    const double want_var = 1.0 - abar;
    CHECK(std::abs(mean - want_mean) < 4.0 * std::sqrt(want_var) / std::sqrt(double(n)));
    CHECK(std::abs(var - want_var) / want_var < 0.05);
}

TEST_CASE("one reverse step inverts one forward step exactly") {
    const NoiseSchedule s = make_linear_schedule(1, 0.3, 0.3);
    RngState rng(8);
    LatentGrid z0(2, 3, 2, 1);
    for (double& x : z0.v) x = rng.uniform(-2.0, 2.0);
    LatentGrid eps = gaussian_like(z0, rng.substream("e"));

    const LatentGrid z1 = forward_sample(z0, 1, eps, s);
    const LatentGrid zeros(2, 3, 2, 1, 0.0);
    for (ReverseVariance rv : {ReverseVariance::posterior, ReverseVariance::beta}) {
        const LatentGrid back = reverse_step(z1, eps, 1, s, zeros, rv);
        for (size_t i = 0; i < z0.v.size(); ++i)
            CHECK(back.v[i] == doctest::Approx(z0.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("t=1 has no stochastic term") {
    const NoiseSchedule s = default_desk_schedule();
    LatentGrid z(1, 4, 1, 1, 0.7);
    LatentGrid eps(1, 4, 1, 1, 0.1);
    LatentGrid noise_a(1, 4, 1, 1, 123.0);
    LatentGrid noise_b(1, 4, 1, 1, -55.0);
    const LatentGrid a = reverse_step(z, eps, 1, s, noise_a);
    const LatentGrid b = reverse_step(z, eps, 1, s, noise_b);
    CHECK(a.v == b.v);
}

TEST_CASE("reverse_step is affine in z_t") {
    const NoiseSchedule s = default_desk_schedule();
    RngState rng(14);
    const int t = 60;
    LatentGrid z1 = gaussian_like(LatentGrid(1, 8, 1, 1), rng.substream("a"));
    LatentGrid z2 = gaussian_like(LatentGrid(1, 8, 1, 1), rng.substream("b"));
    LatentGrid eps = gaussian_like(LatentGrid(1, 8, 1, 1), rng.substream("c"));
    LatentGrid noise = gaussian_like(LatentGrid(1, 8, 1, 1), rng.substream("d"));

    const LatentGrid r1 = reverse_step(z1, eps, t, s, noise);
    const LatentGrid r2 = reverse_step(z2, eps, t, s, noise);
    const double slope = 1.0 / std::sqrt(s.alpha_t(t));
    for (size_t i = 0; i < r1.v.size(); ++i)
        CHECK(r1.v[i] - r2.v[i] ==
              doctest::Approx(slope * (z1.v[i] - z2.v[i])).epsilon(1e-10));
}

TEST_CASE("ddim step from t=1 recovers the posterior mean estimate") {
    const NoiseSchedule s = make_linear_schedule(1, 0.3, 0.3);
    RngState rng(9);
    LatentGrid z0 = gaussian_like(LatentGrid(1, 6, 1, 1), rng);
    LatentGrid eps = gaussian_like(LatentGrid(1, 6, 1, 1), rng.substream("e"));
    const LatentGrid z1 = forward_sample(z0, 1, eps, s);
    const LatentGrid back = ddim_step(z1, eps, 1, 0, s);
    for (size_t i = 0; i < z0.v.size(); ++i)
        CHECK(back.v[i] == doctest::Approx(z0.v[i]).epsilon(1e-12));
}
