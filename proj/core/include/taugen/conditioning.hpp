#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "taugen/latent.hpp"

namespace taugen {

// Rendered biomarker prompt: "Plasma is <value-to-two-decimals>."
struct PromptSpec {
    double plasma_value = 0.0;
    std::string text;
};

PromptSpec format_prompt(double v);

// Inverse of format_prompt; throws FormatError when the text does not match.
double parse_prompt(const std::string& text);

enum class EmbeddingSource { reference, sidecar };

// M x D_c token matrix conditioning the denoiser.
struct PromptEmbedding {
    int tokens = 0;
    int dim = 0;
    std::vector<double> c;  // row-major (tokens, dim)
    EmbeddingSource source = EmbeddingSource::reference;

    double at(int j, int k) const { return c[size_t(j) * dim + k]; }
};

// Deterministic numeric encoder: with flat feature index p = j*D_c + k and
// f_p = 10000^(-p / (M*D_c)), entry (j,k) is sin(2*pi*v*f_p) for even p and
// cos(2*pi*v*f_p) for odd p. Injective in v over [0, 100) at the defaults.
PromptEmbedding encode_reference(double v, int tokens, int dim);

// Loads a precomputed embedding keyed by the exact prompt text from a JSON
// sidecar {prompt: [[...], ...]}. Dim mismatches raise ConfigError; a missing
// prompt raises LookupError naming the prompt.
PromptEmbedding load_sidecar_embedding(const std::filesystem::path& path,
                                       const PromptSpec& prompt, int tokens, int dim);

// Channel concatenation [z_t | z_m]; spatial dims and channel counts must
// match, and the ordering is part of the contract.
LatentGrid concat_latents(const LatentGrid& z_t, const LatentGrid& z_m);

}  // namespace taugen
