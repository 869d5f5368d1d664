#pragma once

#include <string>
#include <vector>

#include "taugen/conditioning.hpp"
#include "taugen/latent.hpp"
#include "taugen/nn/ops.hpp"
#include "taugen/nn/optim.hpp"

namespace taugen {

struct DenoiserConfig {
    int levels = 3;
    std::vector<int> widths = {32, 64, 128};
    int attn_dim = 64;
    int latent_channels = 4;
    int cond_tokens = 4;
    int cond_dim = 64;
    int t_embed_dim = 64;
    int gn_groups = 8;
    int t_range = 1000;  // valid timestep range [1, t_range]

    static DenoiserConfig desk_profile();
    void validate() const;
};

// Conditional U-Net epsilon-predictor. Input is the concatenated latent
// (2*latent_channels) and the output matches the noisy latent
// (latent_channels). Every resolution level carries one cross-attention
// block on each path it appears in; the final output convolution is
// zero-initialized so a fresh net predicts zero noise.
struct DenoiserNet {
    DenoiserConfig cfg;
    nn::ParamStore params;

    void init(RngState rng);
};

// Per-block attention weights (N, M), recorded in forward order.
struct AttentionTrace {
    std::vector<std::pair<std::string, nn::Tensor>> weights;
};

// Sinusoidal features of t at geometric frequencies 10000^(-p/dim):
// even p -> sin(t * f_p), odd p -> cos(t * f_p). Requires 1 <= t <= T.
std::vector<double> timestep_features(int t, int T, int dim);

// Single cross-attention block: tokens = flatten(F); Q = tokens Wq,
// K = c Wk, V = c Wv; A = softmax(Q K^T / sqrt(d)); output =
// F + reshape((A V) Wo). Shapes: Wq (C,d), Wk (Dc,d), Wv (Dc,d), Wo (d,C).
nn::Var cross_attention_graph(nn::Workspace& w, const nn::ParamStore& ps,
                              const std::string& prefix, nn::Var f, const PromptEmbedding& c,
                              AttentionTrace* trace = nullptr);

// Standalone (graph-free) entry over explicit projection tensors.
nn::Tensor cross_attention(const nn::Tensor& f, const PromptEmbedding& c, const nn::Tensor& wq,
                           const nn::Tensor& wk, const nn::Tensor& wv, const nn::Tensor& wo,
                           AttentionTrace* trace = nullptr);

nn::Var predict_noise_graph(nn::Workspace& w, const DenoiserNet& net, nn::Var h, int t,
                            const PromptEmbedding& c, AttentionTrace* trace = nullptr);

// eps_hat for a conditioned latent h = [z_t | z_m].
LatentGrid predict_noise(const DenoiserNet& net, const LatentGrid& h, int t,
                         const PromptEmbedding& c, AttentionTrace* trace = nullptr);

}  // namespace taugen
