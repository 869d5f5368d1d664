#include "taugen/conditioning.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "taugen/errors.hpp"

namespace taugen {

namespace {
constexpr const char* kPrefix = "Plasma is ";
}

PromptSpec format_prompt(double v) {
    if (!std::isfinite(v) || v < 0.0)
        throw ParameterError("plasma value must be finite and >= 0");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%.2f.", kPrefix, v);
    return {v, buf};
}

double parse_prompt(const std::string& text) {
    const std::string prefix = kPrefix;
    if (text.rfind(prefix, 0) != 0 || text.empty() || text.back() != '.')
        throw FormatError("not a plasma prompt: '" + text + "'");
    const std::string num = text.substr(prefix.size(), text.size() - prefix.size() - 1);
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(num, &pos);
    } catch (const std::exception&) {
        throw FormatError("prompt value is not a number: '" + text + "'");
    }
    if (pos != num.size() || !std::isfinite(v) || v < 0.0)
        throw FormatError("prompt value is malformed: '" + text + "'");
    return v;
}

PromptEmbedding encode_reference(double v, int tokens, int dim) {
    if (!std::isfinite(v) || v < 0.0)
        throw ParameterError("plasma value must be finite and >= 0");
    if (tokens < 1 || dim < 1) throw ParameterError("embedding needs tokens >= 1 and dim >= 1");

    PromptEmbedding e;
    e.tokens = tokens;
    e.dim = dim;
    e.source = EmbeddingSource::reference;
    const int total = tokens * dim;
    e.c.resize(size_t(total));
    for (int p = 0; p < total; ++p) {
        const double freq = std::pow(10000.0, -double(p) / double(total));
        const double arg = 2.0 * std::numbers::pi * v * freq;
        e.c[size_t(p)] = (p % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
    return e;
}

PromptEmbedding load_sidecar_embedding(const std::filesystem::path& path,
                                       const PromptSpec& prompt, int tokens, int dim) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open embedding sidecar: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed embedding sidecar " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("embedding sidecar must map prompt -> matrix");
    if (!j.contains(prompt.text))
        throw LookupError("sidecar has no embedding for prompt '" + prompt.text + "'");

    const auto& mat = j[prompt.text];
    if (!mat.is_array() || int(mat.size()) != tokens)
        throw ConfigError("sidecar embedding for '" + prompt.text + "' has " +
                          std::to_string(mat.size()) + " tokens, config expects " +
                          std::to_string(tokens));

    PromptEmbedding e;
    e.tokens = tokens;
    e.dim = dim;
    e.source = EmbeddingSource::sidecar;
    e.c.reserve(size_t(tokens) * dim);
    for (const auto& row : mat) {
        if (!row.is_array() || int(row.size()) != dim)
            throw ConfigError("sidecar embedding row width does not match config dim " +
                              std::to_string(dim));
        for (const auto& x : row) {
            const double val = x.get<double>();
            if (!std::isfinite(val))
                throw DataError("sidecar embedding has a non-finite entry");
            e.c.push_back(val);
        }
    }
    return e;
}

LatentGrid concat_latents(const LatentGrid& z_t, const LatentGrid& z_m) {
    if (!z_t.same_shape(z_m))
        throw ShapeError("concat_latents: latent shapes must match exactly");
    LatentGrid out(z_t.channels + z_m.channels, z_t.nx, z_t.ny, z_t.nz);
    std::copy(z_t.v.begin(), z_t.v.end(), out.v.begin());
    std::copy(z_m.v.begin(), z_m.v.end(), out.v.begin() + z_t.v.size());
    return out;
}

}  // namespace taugen
