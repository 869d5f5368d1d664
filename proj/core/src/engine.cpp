#include "taugen/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "taugen/errors.hpp"

namespace taugen {

using nn::Var;
using nn::Workspace;

NoiseSchedule ScheduleSpec::build() const {
    validate();
    return make_linear_schedule(T, beta_start, beta_end);
}

void ScheduleSpec::validate() const {
    if (family != "linear")
        throw ConfigError("unknown schedule family '" + family + "' (supported: linear)");
    if (T < 1) throw ConfigError("schedule T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("schedule requires 0 < beta_start <= beta_end < 1");
}

PromptEmbedding embed_plasma(double v, const EmbeddingConfig& cfg) {
    const PromptSpec prompt = format_prompt(v);
    if (cfg.sidecar) return load_sidecar_embedding(*cfg.sidecar, prompt, cfg.tokens, cfg.dim);
    return encode_reference(v, cfg.tokens, cfg.dim);
}

SamplerKind parse_sampler(const std::string& name) {
    if (name == "ddpm") return SamplerKind::ddpm;
    if (name == "ddim") return SamplerKind::ddim;
    throw ConfigError("unknown sampler '" + name + "' (supported: ddpm, ddim)");
}

std::string sampler_name(SamplerKind kind) {
    return kind == SamplerKind::ddpm ? "ddpm" : "ddim";
}

namespace {

LatentGrid zeros_like(const LatentGrid& g) {
    return LatentGrid(g.channels, g.nx, g.ny, g.nz, 0.0);
}

struct LatentItem {
    LatentGrid z0;
    LatentGrid zm;
    double plasma = 0.0;
};

double diffusion_step_latents(DenoiserNet& den, const std::vector<LatentItem>& items,
                              const NoiseSchedule& s, RngState& rng, const nn::OptimConfig& opt,
                              const EmbeddingConfig& emb) {
    if (items.empty()) throw ParameterError("diffusion step needs a non-empty batch");

    const size_t bsz = items.size();
    const double inv_b = 1.0 / double(bsz);

    // Draw (t, eps) sequentially so the stream is independent of the worker
    // count, then build/backward the per-item graphs in parallel.
    std::vector<int> ts(bsz);
    std::vector<LatentGrid> epses(bsz);
    for (size_t j = 0; j < bsz; ++j) {
        ts[j] = 1 + int(rng.next_u64() % uint64_t(s.T));
        epses[j] = items[j].z0;
        for (double& x : epses[j].v) x = rng.normal();
    }

    std::vector<double> item_loss(bsz, 0.0);
    std::vector<nn::GradMap> item_grads(bsz);
    nn::parallel_items(bsz, [&](size_t j) {
        const LatentItem& item = items[j];
        const LatentGrid z_t = forward_sample(item.z0, ts[j], epses[j], s);
        const LatentGrid h = concat_latents(z_t, item.zm);
        const PromptEmbedding c = embed_plasma(item.plasma, emb);

        Workspace w;
        Var eps_hat = predict_noise_graph(w, den, w.constant(h.to_tensor()), ts[j], c);
        Var loss = nn::mse(eps_hat, w.constant(epses[j].to_tensor()));
        item_loss[j] = loss->value.v[0];
        nn::backward(nn::scale(loss, inv_b));
        item_grads[j] = w.grads();
    });

    nn::GradMap grads;
    double batch_loss = 0.0;
    for (size_t j = 0; j < bsz; ++j) {
        batch_loss += item_loss[j];
        nn::accumulate(grads, item_grads[j]);
    }
    batch_loss *= inv_b;
    if (!std::isfinite(batch_loss)) throw TrainingError("diffusion loss is non-finite");
    nn::adam_step(den.params, grads, opt);
    return batch_loss;
}

}  // namespace

double diffusion_train_step(const AutoencoderNet& ae, DenoiserNet& den,
                            const std::vector<PairedSample>& batch, const NoiseSchedule& s,
                            RngState& rng, const nn::OptimConfig& opt,
                            const EmbeddingConfig& emb, const SamplerOptions& opts) {
    if (!ae.frozen)
        throw ConfigError("autoencoder must be frozen before diffusion training");
    if (batch.empty()) throw ParameterError("diffusion step needs a non-empty batch");

    std::vector<LatentItem> items;
    items.reserve(batch.size());
    for (const PairedSample& sample : batch) {
        LatentItem item;
        item.z0 = encode(ae, sample.pet);
        item.zm = opts.mri_conditioning ? encode(ae, sample.mri) : zeros_like(item.z0);
        item.plasma = sample.plasma;
        items.push_back(std::move(item));
    }
    return diffusion_step_latents(den, items, s, rng, opt, emb);
}

DiffusionTrainReport train_diffusion(const AutoencoderNet& ae, DenoiserNet& den,
                                     const DatasetManifest& manifest, const NoiseSchedule& s,
                                     const DiffusionTrainOptions& opts) {
    if (!ae.frozen)
        throw ConfigError("autoencoder must be frozen before diffusion training");
    opts.optimizer.validate();
    if (opts.epochs < 1) throw ParameterError("epochs must be >= 1");
    const auto train_idx = manifest.indices(Split::train);
    if (train_idx.empty()) throw ParameterError("manifest has no train entries");

    // The autoencoder is frozen: per-sample latents never change, so they
    // are computed once up front.
    std::vector<LatentItem> cache;
    cache.reserve(train_idx.size());
    for (size_t idx : train_idx) {
        const PairedSample sample = load_sample(manifest, idx);
        LatentItem item;
        item.z0 = encode(ae, sample.pet);
        item.zm = opts.sampler.mri_conditioning ? encode(ae, sample.mri) : zeros_like(item.z0);
        item.plasma = sample.plasma;
        cache.push_back(std::move(item));
    }

    DiffusionTrainReport report;
    for (int epoch = opts.start_epoch; epoch < opts.epochs; ++epoch) {
        RngState rng = RngState(opts.seed).substream("diff-epoch", uint64_t(epoch));
        std::vector<size_t> order(cache.size());
        std::iota(order.begin(), order.end(), size_t(0));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.next_u64() % i)]);

        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += size_t(opts.optimizer.batch_size)) {
            const size_t b1 = std::min(order.size(), b0 + size_t(opts.optimizer.batch_size));
            std::vector<LatentItem> batch;
            batch.reserve(b1 - b0);
            for (size_t i = b0; i < b1; ++i) batch.push_back(cache[order[i]]);
            epoch_loss +=
                diffusion_step_latents(den, batch, s, rng, opts.optimizer, opts.embedding);
            ++batches;
        }
        epoch_loss /= double(batches);
        report.epoch_loss.push_back(epoch_loss);
        report.epochs_run = epoch + 1;
        if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss);
    }
    return report;
}

Volume generate(const AutoencoderNet& ae, const DenoiserNet& den, const NoiseSchedule& s,
                const GenerationRequest& req, const EmbeddingConfig& emb,
                const SamplerOptions& opts) {
    if (!(req.plasma >= 0.0) || !std::isfinite(req.plasma))
        throw ParameterError("generation plasma must be finite and >= 0");

    const LatentGrid zm_probe = encode(ae, req.mri);
    const LatentGrid zm = opts.mri_conditioning ? zm_probe : zeros_like(zm_probe);
    const PromptEmbedding c = embed_plasma(req.plasma, emb);

    RngState base(req.seed);
    LatentGrid z = gaussian_like(zm_probe, base.substream("init"));

    if (req.sampler == SamplerKind::ddpm) {
        if (req.steps && *req.steps != s.T)
            throw ConfigError("ddpm sampling runs all T steps; use ddim for a steps override");
        for (int t = s.T; t >= 1; --t) {
            const LatentGrid eps_hat = predict_noise(den, concat_latents(z, zm), t, c);
            const LatentGrid noise = t > 1 ? gaussian_like(z, base.substream("step", uint64_t(t)))
                                           : zeros_like(z);
            z = reverse_step(z, eps_hat, t, s, noise, opts.reverse_variance);
        }
    } else {
        const int steps = req.steps.value_or(s.T);
        if (steps < 1 || steps > s.T) throw ParameterError("ddim steps must be in [1, T]");
        // Descending timestep ladder T = t_1 > t_2 > ... > t_steps, ending at 0.
        std::vector<int> ladder;
        for (int i = steps; i >= 1; --i) {
            const int t = std::max(1, int(std::llround(double(s.T) * i / double(steps))));
            if (ladder.empty() || ladder.back() != t) ladder.push_back(t);
        }
        for (size_t i = 0; i < ladder.size(); ++i) {
            const int t = ladder[i];
            const int t_prev = i + 1 < ladder.size() ? ladder[i + 1] : 0;
            const LatentGrid eps_hat = predict_noise(den, concat_latents(z, zm), t, c);
            z = ddim_step(z, eps_hat, t, t_prev, s);
        }
    }
    return decode(ae, z);
}

LatentGrid oracle_eps(const LatentGrid& z_t, int t, const NoiseSchedule& s,
                      const GaussianOracleSpec& spec) {
    if (!(spec.sigma > 0.0)) throw ParameterError("oracle sigma must be > 0");
    s.check_t(t);
    const double abar = s.alpha_bar_t(t);
    const double num = std::sqrt(1.0 - abar);
    const double den = abar * spec.sigma * spec.sigma + 1.0 - abar;
    const double shift = std::sqrt(abar) * spec.mu;
    LatentGrid out = z_t;
    for (double& x : out.v) x = num * (x - shift) / den;
    return out;
}

OracleReport oracle_sampling_test(const NoiseSchedule& s, const GaussianOracleSpec& spec, int n,
                                  uint64_t seed, bool ddim, ReverseVariance rv) {
    if (n < 10000) throw ParameterError("oracle sampling test needs n >= 10^4 draws");
    if (!(spec.sigma > 0.0)) throw ParameterError("oracle sigma must be > 0");

    // All n scalar chains run as one latent grid; every op is elementwise.
    RngState base(seed);
    LatentGrid z(1, n, 1, 1);
    z = gaussian_like(z, base.substream("init"));

    if (!ddim) {
        for (int t = s.T; t >= 1; --t) {
            const LatentGrid eps_hat = oracle_eps(z, t, s, spec);
            LatentGrid noise = zeros_like(z);
            if (t > 1) noise = gaussian_like(noise, base.substream("step", uint64_t(t)));
            z = reverse_step(z, eps_hat, t, s, noise, rv);
        }
    } else {
        for (int t = s.T; t >= 1; --t) {
            const LatentGrid eps_hat = oracle_eps(z, t, s, spec);
            z = ddim_step(z, eps_hat, t, t - 1, s);
        }
    }

    double sum = 0.0, sumsq = 0.0;
    for (double x : z.v) {
        sum += x;
        sumsq += x * x;
    }
    OracleReport r;
    r.n = n;
    r.ddim = ddim;
    r.mean = sum / double(n);
    r.variance = sumsq / double(n) - r.mean * r.mean;
    r.target_mean = spec.mu;
    r.target_var = spec.sigma * spec.sigma;
    r.mean_tol = 4.0 * spec.sigma / std::sqrt(double(n));
    return r;
}

}  // namespace taugen
