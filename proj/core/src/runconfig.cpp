#include "taugen/runconfig.hpp"

#include <fstream>

#include <json.hpp>

#include "taugen/errors.hpp"

namespace taugen {

namespace {

nn::OptimConfig optim_from_json(const nlohmann::json& j, const nn::OptimConfig& defaults) {
    nn::OptimConfig o = defaults;
    o.learning_rate = j.value("learning_rate", o.learning_rate);
    o.beta1 = j.value("beta1", o.beta1);
    o.beta2 = j.value("beta2", o.beta2);
    o.eps = j.value("eps", o.eps);
    o.batch_size = j.value("batch_size", o.batch_size);
    return o;
}

nlohmann::json optim_to_json(const nn::OptimConfig& o) {
    return {{"learning_rate", o.learning_rate},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"eps", o.eps},
            {"batch_size", o.batch_size}};
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : config_dir / p;
}

void RunConfig::validate() const {
    phantom.validate();
    autoencoder.validate();
    denoiser.validate();
    schedule.validate();
    ae_optimizer.validate();
    diffusion_optimizer.validate();
    if (ae_epochs < 1 || diffusion_epochs < 1) throw ConfigError("epochs must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (embedding.tokens < 1 || embedding.dim < 1)
        throw ConfigError("embedding tokens and dim must be >= 1");
    if (denoiser.latent_channels != autoencoder.latent_channels)
        throw ConfigError("denoiser latent_channels must match the autoencoder");
    if (denoiser.cond_tokens != embedding.tokens || denoiser.cond_dim != embedding.dim)
        throw ConfigError("denoiser conditioning dims must match the embedding config");
    if (denoiser.t_range != schedule.T)
        throw ConfigError("denoiser t_range must equal schedule T");
    const int f = autoencoder.factor() * (1 << (denoiser.levels - 1));
    if (phantom.nx % f || phantom.ny % f || phantom.nz % f)
        throw ConfigError("phantom dims must be divisible by " + std::to_string(f) +
                          " (autoencoder and denoiser downsampling)");
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open run config: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed run config " + path.string() + ": " + e.what());
    }

    RunConfig cfg;
    cfg.config_dir = std::filesystem::absolute(path).parent_path();
    try {
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            cfg.data_dir = p.value("data_dir", cfg.data_dir.string());
            cfg.checkpoint_dir = p.value("checkpoint_dir", cfg.checkpoint_dir.string());
            cfg.output_dir = p.value("output_dir", cfg.output_dir.string());
        }
        if (j.contains("phantom")) {
            // Inline object or a path to a separate phantom config file.
            if (j["phantom"].is_string())
                cfg.phantom = PhantomConfig::load(cfg.resolve(j["phantom"].get<std::string>()));
            else
                cfg.phantom = PhantomConfig::from_json_string(j["phantom"].dump());
        }
        if (j.contains("autoencoder")) {
            const auto& a = j["autoencoder"];
            cfg.autoencoder.levels = a.value("levels", cfg.autoencoder.levels);
            cfg.autoencoder.base_width = a.value("base_width", cfg.autoencoder.base_width);
            cfg.autoencoder.latent_channels =
                a.value("latent_channels", cfg.autoencoder.latent_channels);
            cfg.autoencoder.latent_penalty =
                a.value("latent_penalty", cfg.autoencoder.latent_penalty);
        }
        if (j.contains("denoiser")) {
            const auto& d = j["denoiser"];
            cfg.denoiser.levels = d.value("levels", cfg.denoiser.levels);
            if (d.contains("widths")) cfg.denoiser.widths = d["widths"].get<std::vector<int>>();
            cfg.denoiser.attn_dim = d.value("attn_dim", cfg.denoiser.attn_dim);
            cfg.denoiser.t_embed_dim = d.value("t_embed_dim", cfg.denoiser.t_embed_dim);
            cfg.denoiser.gn_groups = d.value("gn_groups", cfg.denoiser.gn_groups);
        }
        if (j.contains("schedule")) {
            const auto& s = j["schedule"];
            cfg.schedule.family = s.value("family", cfg.schedule.family);
            cfg.schedule.T = s.value("T", cfg.schedule.T);
            cfg.schedule.beta_start = s.value("beta_start", cfg.schedule.beta_start);
            cfg.schedule.beta_end = s.value("beta_end", cfg.schedule.beta_end);
        }
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            cfg.embedding.tokens = e.value("tokens", cfg.embedding.tokens);
            cfg.embedding.dim = e.value("dim", cfg.embedding.dim);
            if (e.contains("sidecar") && !e["sidecar"].is_null())
                cfg.embedding.sidecar = cfg.resolve(e["sidecar"].get<std::string>());
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            if (t.contains("ae")) {
                cfg.ae_epochs = t["ae"].value("epochs", cfg.ae_epochs);
                if (t["ae"].contains("optimizer"))
                    cfg.ae_optimizer = optim_from_json(t["ae"]["optimizer"], cfg.ae_optimizer);
            }
            if (t.contains("diffusion")) {
                cfg.diffusion_epochs = t["diffusion"].value("epochs", cfg.diffusion_epochs);
                if (t["diffusion"].contains("optimizer"))
                    cfg.diffusion_optimizer =
                        optim_from_json(t["diffusion"]["optimizer"], cfg.diffusion_optimizer);
            }
            cfg.checkpoint_every = t.value("checkpoint_every", cfg.checkpoint_every);
            cfg.seed = t.value("seed", cfg.seed);
        }
        if (j.contains("sampler")) {
            const auto& s = j["sampler"];
            cfg.sampler = parse_sampler(s.value("kind", sampler_name(cfg.sampler)));
            const std::string rv = s.value("reverse_variance", "beta");
            if (rv == "beta")
                cfg.reverse_variance = ReverseVariance::beta;
            else if (rv == "posterior")
                cfg.reverse_variance = ReverseVariance::posterior;
            else
                throw ConfigError("reverse_variance must be 'beta' or 'posterior'");
        }
        cfg.mri_conditioning = j.value("mri_conditioning", cfg.mri_conditioning);
        const std::string bins = j.value("bins", "paper");
        if (bins == "paper")
            cfg.bins_mode = PlasmaBins::Mode::paper;
        else if (bins == "full")
            cfg.bins_mode = PlasmaBins::Mode::full;
        else
            throw ConfigError("bins must be 'paper' or 'full'");
        const std::string prec = j.value("precision", "f32");
        if (prec == "f32")
            cfg.precision_mode = nn::Precision::f32;
        else if (prec == "f64")
            cfg.precision_mode = nn::Precision::f64;
        else
            throw ConfigError("precision must be 'f32' or 'f64'");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("run config field error: " + std::string(e.what()));
    }

    // Keep dependent blocks consistent with the primary ones.
    cfg.denoiser.latent_channels = cfg.autoencoder.latent_channels;
    cfg.denoiser.cond_tokens = cfg.embedding.tokens;
    cfg.denoiser.cond_dim = cfg.embedding.dim;
    cfg.denoiser.t_range = cfg.schedule.T;

    cfg.validate();
    return cfg;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
    const nlohmann::json phantom_json = nlohmann::json::parse(cfg.phantom.to_json_string());

    const nlohmann::json j = {
        {"paths",
         {{"data_dir", cfg.data_dir.generic_string()},
          {"checkpoint_dir", cfg.checkpoint_dir.generic_string()},
          {"output_dir", cfg.output_dir.generic_string()}}},
        {"phantom", phantom_json},
        {"autoencoder",
         {{"levels", cfg.autoencoder.levels},
          {"base_width", cfg.autoencoder.base_width},
          {"latent_channels", cfg.autoencoder.latent_channels},
          {"latent_penalty", cfg.autoencoder.latent_penalty}}},
        {"denoiser",
         {{"levels", cfg.denoiser.levels},
          {"widths", cfg.denoiser.widths},
          {"attn_dim", cfg.denoiser.attn_dim},
          {"t_embed_dim", cfg.denoiser.t_embed_dim},
          {"gn_groups", cfg.denoiser.gn_groups}}},
        {"schedule",
         {{"family", cfg.schedule.family},
          {"T", cfg.schedule.T},
          {"beta_start", cfg.schedule.beta_start},
          {"beta_end", cfg.schedule.beta_end}}},
        {"embedding",
         {{"tokens", cfg.embedding.tokens},
          {"dim", cfg.embedding.dim},
          {"sidecar", cfg.embedding.sidecar ? nlohmann::json(cfg.embedding.sidecar->string())
                                            : nlohmann::json(nullptr)}}},
        {"train",
         {{"ae", {{"epochs", cfg.ae_epochs}, {"optimizer", optim_to_json(cfg.ae_optimizer)}}},
          {"diffusion",
           {{"epochs", cfg.diffusion_epochs},
            {"optimizer", optim_to_json(cfg.diffusion_optimizer)}}},
          {"checkpoint_every", cfg.checkpoint_every},
          {"seed", cfg.seed}}},
        {"sampler",
         {{"kind", sampler_name(cfg.sampler)},
          {"reverse_variance",
           cfg.reverse_variance == ReverseVariance::beta ? "beta" : "posterior"}}},
        {"mri_conditioning", cfg.mri_conditioning},
        {"bins", cfg.bins_mode == PlasmaBins::Mode::paper ? "paper" : "full"},
        {"precision", cfg.precision_mode == nn::Precision::f32 ? "f32" : "f64"}};

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write run config: " + path.string());
    os << j.dump(2) << "\n";
}

}  // namespace taugen
