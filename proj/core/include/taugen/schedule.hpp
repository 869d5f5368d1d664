#pragma once

#include <vector>

#include "taugen/latent.hpp"
#include "taugen/rng.hpp"

namespace taugen {

// Precomputed diffusion tables. Index convention: vectors are 0-based but
// addressed through the t-accessors with t in [1, T]; alpha_bar_t(0) == 1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> posterior_var;  // beta_t * (1 - abar_{t-1}) / (1 - abar_t)

    double beta_t(int t) const { return beta.at(size_t(t) - 1); }
    double alpha_t(int t) const { return alpha.at(size_t(t) - 1); }
    double alpha_bar_t(int t) const { return t == 0 ? 1.0 : alpha_bar.at(size_t(t) - 1); }
    double posterior_var_t(int t) const { return posterior_var.at(size_t(t) - 1); }

    void check_t(int t) const;  // ParameterError unless 1 <= t <= T
};

// beta ramps linearly from beta_start (t=1) to beta_end (t=T) inclusive.
NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

// Defaults: the full-scale table and the desk-scale table. The desk ramp is
// the full-scale one rescaled by 1000/T so alpha_bar[T] stays below 1e-2.
NoiseSchedule default_full_schedule();  // T=1000, 1e-4 -> 0.02
NoiseSchedule default_desk_schedule();  // T=200,  5e-4 -> 0.1

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, elementwise.
LatentGrid forward_sample(const LatentGrid& z0, int t, const LatentGrid& eps,
                          const NoiseSchedule& s);

// Reverse-noise scale: the exact posterior lower bound, or beta_t (the
// variance matching a unit-variance data distribution). beta_t is the
// default used by the sampler.
enum class ReverseVariance { posterior, beta };

// Ancestral step t -> t-1. The stochastic term is dropped at t == 1.
LatentGrid reverse_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t,
                        const NoiseSchedule& s, const LatentGrid& noise,
                        ReverseVariance rv = ReverseVariance::beta);

// Deterministic DDIM (eta = 0) step from t to t_prev (t_prev < t, 0 allowed).
LatentGrid ddim_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t, int t_prev,
                     const NoiseSchedule& s);

// Fill a latent grid with iid N(0,1) draws from the given stream.
LatentGrid gaussian_like(const LatentGrid& shape_of, RngState rng);

}  // namespace taugen
