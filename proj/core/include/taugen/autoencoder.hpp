#pragma once

#include <functional>

#include "taugen/latent.hpp"
#include "taugen/manifest.hpp"
#include "taugen/nn/gradcheck.hpp"
#include "taugen/nn/ops.hpp"
#include "taugen/volume.hpp"

namespace taugen {

struct AutoencoderConfig {
    int levels = 2;           // downsampling levels, factor 2 each
    int base_width = 32;
    int latent_channels = 4;
    double latent_penalty = 1e-6;  // weight on per-item sum of squared latents

    int factor() const { return 1 << levels; }
    int width(int level) const;  // base_width * min(2^level, 4), level in [0, levels]
    void validate() const;
};

// One shared encoder/decoder pair; PET and MRI volumes go through the same
// single-channel network.
struct AutoencoderNet {
    AutoencoderConfig cfg;
    nn::ParamStore params;
    double latent_scale = 1.0;  // encode divides by this, decode multiplies
    bool frozen = false;

    void init(RngState rng);

    nn::Var encode_graph(nn::Workspace& w, nn::Var x) const;  // raw latent, unscaled
    nn::Var decode_graph(nn::Workspace& w, nn::Var z) const;  // raw output, unclamped
};

// Deterministic; requires a single-channel volume with spatial dims divisible
// by 2^levels. The result is scaled by 1/latent_scale.
LatentGrid encode(const AutoencoderNet& net, const Volume& v);

// Inverse spatial mapping; output values are clamped to [0,1].
Volume decode(const AutoencoderNet& net, const LatentGrid& z);

struct AeTrainOptions {
    nn::OptimConfig optimizer;
    int epochs = 60;
    uint64_t seed = 0;
    int start_epoch = 0;
    // Stop once the epoch loss drops below this (0 disables).
    double target_loss = 0.0;
    std::function<void(int epoch, double loss)> on_epoch;
};

struct AeTrainReport {
    std::vector<double> epoch_loss;
    int epochs_run = 0;
    double latent_scale = 1.0;
};

// Minimizes reconstruction MSE over both modalities (each PET and MRI volume
// is an independent training item) plus the latent magnitude penalty, then
// calibrates latent_scale to the std of all training latents.
AeTrainReport train_autoencoder(AutoencoderNet& net, const DatasetManifest& manifest,
                                const AeTrainOptions& opts);

// Mean squared reconstruction error of decode(encode(v)) against v.
double reconstruction_mse(const AutoencoderNet& net, const Volume& v);

}  // namespace taugen
