#pragma once

#include <functional>
#include <optional>

#include "taugen/autoencoder.hpp"
#include "taugen/denoiser.hpp"
#include "taugen/manifest.hpp"
#include "taugen/schedule.hpp"

namespace taugen {

struct ScheduleSpec {
    std::string family = "linear";
    int T = 200;
    double beta_start = 5e-4;
    double beta_end = 0.1;

    NoiseSchedule build() const;
    void validate() const;
};

struct EmbeddingConfig {
    int tokens = 4;
    int dim = 64;
    std::optional<std::filesystem::path> sidecar;  // precomputed embeddings
};

// Reference encoder by default; sidecar lookup when configured.
PromptEmbedding embed_plasma(double v, const EmbeddingConfig& cfg);

struct SamplerOptions {
    ReverseVariance reverse_variance = ReverseVariance::beta;
    bool mri_conditioning = true;  // false zeroes the structural channels
};

enum class SamplerKind { ddpm, ddim };

SamplerKind parse_sampler(const std::string& name);
std::string sampler_name(SamplerKind kind);

struct GenerationRequest {
    Volume mri;
    double plasma = 0.0;
    uint64_t seed = 0;
    SamplerKind sampler = SamplerKind::ddpm;
    std::optional<int> steps;  // ddim stride override; must equal T for ddpm
};

// Full pipeline: z_T ~ N(0,I); T reverse steps conditioned on the MRI latent
// and the plasma prompt embedding; decode. Deterministic given (nets, seed)
// for ddpm and noise-free for ddim.
Volume generate(const AutoencoderNet& ae, const DenoiserNet& den, const NoiseSchedule& s,
                const GenerationRequest& req, const EmbeddingConfig& emb,
                const SamplerOptions& opts = {});

// One optimizer step of the diffusion objective on a batch of paired
// samples: encodes with the frozen autoencoder, draws (t, eps) per item,
// and updates only the denoiser parameters. Returns the batch loss
// (per-element mean squared error between eps and eps_hat).
double diffusion_train_step(const AutoencoderNet& ae, DenoiserNet& den,
                            const std::vector<PairedSample>& batch, const NoiseSchedule& s,
                            RngState& rng, const nn::OptimConfig& opt,
                            const EmbeddingConfig& emb, const SamplerOptions& opts = {});

struct DiffusionTrainOptions {
    nn::OptimConfig optimizer;
    int epochs = 200;
    uint64_t seed = 0;
    int start_epoch = 0;
    EmbeddingConfig embedding;
    SamplerOptions sampler;
    std::function<void(int epoch, double loss)> on_epoch;
};

struct DiffusionTrainReport {
    std::vector<double> epoch_loss;
    int epochs_run = 0;
};

// Epoch loop over the train split. Latents are precomputed once (the
// autoencoder is frozen, so this is identical to encoding per step).
DiffusionTrainReport train_diffusion(const AutoencoderNet& ae, DenoiserNet& den,
                                     const DatasetManifest& manifest, const NoiseSchedule& s,
                                     const DiffusionTrainOptions& opts);

// Latent prior N(mu, sigma^2 I) standing in for the learned distribution.
struct GaussianOracleSpec {
    double mu = 0.0;
    double sigma = 1.0;
};

// Closed-form E[eps | z_t] for the Gaussian prior:
// sqrt(1-abar_t) * (z_t - sqrt(abar_t) mu) / (abar_t sigma^2 + 1 - abar_t).
LatentGrid oracle_eps(const LatentGrid& z_t, int t, const NoiseSchedule& s,
                      const GaussianOracleSpec& spec);

struct OracleReport {
    double mean = 0.0;
    double variance = 0.0;
    double target_mean = 0.0;
    double target_var = 0.0;
    double mean_tol = 0.0;  // 4 sigma / sqrt(n)
    int n = 0;
    bool ddim = false;
};

// Runs the full ancestral loop on n scalar latents with oracle_eps in place
// of the network and reports the sample moments against the prior.
OracleReport oracle_sampling_test(const NoiseSchedule& s, const GaussianOracleSpec& spec, int n,
                                  uint64_t seed, bool ddim = false,
                                  ReverseVariance rv = ReverseVariance::beta);

}  // namespace taugen
