#pragma once

#include <filesystem>

#include "taugen/engine.hpp"
#include "taugen/evaluation.hpp"
#include "taugen/phantom.hpp"

namespace taugen {

// Top-level pipeline configuration; every sub-config is validated before any
// command does work.
struct RunConfig {
    std::filesystem::path config_dir;  // resolution base for relative paths

    std::filesystem::path data_dir = "data";
    std::filesystem::path checkpoint_dir = "checkpoints";
    std::filesystem::path output_dir = "outputs";

    PhantomConfig phantom = PhantomConfig::defaults();
    AutoencoderConfig autoencoder;
    DenoiserConfig denoiser = DenoiserConfig::desk_profile();
    ScheduleSpec schedule;
    EmbeddingConfig embedding;

    nn::OptimConfig ae_optimizer;
    int ae_epochs = 60;
    nn::OptimConfig diffusion_optimizer;
    int diffusion_epochs = 200;
    int checkpoint_every = 50;
    uint64_t seed = 0;

    SamplerKind sampler = SamplerKind::ddpm;
    ReverseVariance reverse_variance = ReverseVariance::beta;
    bool mri_conditioning = true;
    PlasmaBins::Mode bins_mode = PlasmaBins::Mode::paper;
    nn::Precision precision_mode = nn::Precision::f32;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    std::filesystem::path ae_checkpoint() const { return resolve(checkpoint_dir) / "ae.ckpt"; }
    std::filesystem::path diffusion_checkpoint() const {
        return resolve(checkpoint_dir) / "diffusion.ckpt";
    }

    void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace taugen
