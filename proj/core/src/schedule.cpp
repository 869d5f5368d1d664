#include "taugen/schedule.hpp"

#include <cmath>
#include <string>

#include "taugen/errors.hpp"

namespace taugen {

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > T)
        throw ParameterError("timestep " + std::to_string(t) + " outside [1, " +
                             std::to_string(T) + "]");
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ParameterError("schedule needs T >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ParameterError("schedule requires 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.posterior_var.resize(T);

    double abar = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : double(t - 1) / double(T - 1);
        const double b = beta_start + (beta_end - beta_start) * frac;
        const double abar_prev = abar;
        abar *= (1.0 - b);
        s.beta[t - 1] = b;
        s.alpha[t - 1] = 1.0 - b;
        s.alpha_bar[t - 1] = abar;
        s.posterior_var[t - 1] = b * (1.0 - abar_prev) / (1.0 - abar);
    }
    return s;
}

NoiseSchedule default_full_schedule() {
    return make_linear_schedule(1000, 1e-4, 0.02);
}

NoiseSchedule default_desk_schedule() {
    return make_linear_schedule(200, 5e-4, 0.1);
}

namespace {

void check_shapes(const LatentGrid& a, const LatentGrid& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": latent shape mismatch");
}

}  // namespace

LatentGrid forward_sample(const LatentGrid& z0, int t, const LatentGrid& eps,
                          const NoiseSchedule& s) {
    s.check_t(t);
    check_shapes(z0, eps, "forward_sample");
    const double a = std::sqrt(s.alpha_bar_t(t));
    const double b = std::sqrt(1.0 - s.alpha_bar_t(t));
    LatentGrid out = z0;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * z0.v[i] + b * eps.v[i];
    return out;
}

LatentGrid reverse_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t,
                        const NoiseSchedule& s, const LatentGrid& noise, ReverseVariance rv) {
    s.check_t(t);
    check_shapes(z_t, eps_hat, "reverse_step");
    check_shapes(z_t, noise, "reverse_step");

    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_t(t));
    const double eps_coef = s.beta_t(t) / std::sqrt(1.0 - s.alpha_bar_t(t));
    const double var = rv == ReverseVariance::posterior ? s.posterior_var_t(t) : s.beta_t(t);
    const double noise_scale = t == 1 ? 0.0 : std::sqrt(var);

    LatentGrid out = z_t;
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = inv_sqrt_alpha * (z_t.v[i] - eps_coef * eps_hat.v[i]) +
                   noise_scale * noise.v[i];
    return out;
}

LatentGrid ddim_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t, int t_prev,
                     const NoiseSchedule& s) {
    s.check_t(t);
    if (t_prev < 0 || t_prev >= t)
        throw ParameterError("ddim_step requires 0 <= t_prev < t");
    check_shapes(z_t, eps_hat, "ddim_step");

    const double abar = s.alpha_bar_t(t);
    const double abar_prev = s.alpha_bar_t(t_prev);
    const double sq = std::sqrt(abar);
    const double sq1 = std::sqrt(1.0 - abar);
    const double sq_prev = std::sqrt(abar_prev);
    const double sq1_prev = std::sqrt(1.0 - abar_prev);

    LatentGrid out = z_t;
    for (size_t i = 0; i < out.v.size(); ++i) {
        const double z0_hat = (z_t.v[i] - sq1 * eps_hat.v[i]) / sq;
        out.v[i] = sq_prev * z0_hat + sq1_prev * eps_hat.v[i];
    }
    return out;
}

LatentGrid gaussian_like(const LatentGrid& shape_of, RngState rng) {
    LatentGrid out = shape_of;
    for (double& x : out.v) x = rng.normal();
    return out;
}

}  // namespace taugen
