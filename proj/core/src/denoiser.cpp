#include "taugen/denoiser.hpp"

#include <cmath>

#include "taugen/errors.hpp"

namespace taugen {

using nn::Tensor;
using nn::Var;
using nn::Workspace;

DenoiserConfig DenoiserConfig::desk_profile() {
    DenoiserConfig cfg;
    cfg.levels = 2;
    cfg.widths = {24, 48};
    cfg.attn_dim = 48;
    cfg.t_embed_dim = 48;
    cfg.gn_groups = 8;
    cfg.t_range = 200;
    return cfg;
}

void DenoiserConfig::validate() const {
    if (levels < 1) throw ConfigError("denoiser needs at least one level");
    if (int(widths.size()) != levels)
        throw ConfigError("denoiser widths must list one channel count per level");
    for (int w : widths) {
        if (w < 1) throw ConfigError("denoiser widths must be positive");
        if (w % gn_groups || (2 * w) % gn_groups)
            throw ConfigError("gn_groups must divide every level width");
    }
    if (attn_dim < 1) throw ConfigError("attn_dim must be >= 1");
    if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
    if (cond_tokens < 1 || cond_dim < 1) throw ConfigError("conditioning dims must be >= 1");
    if (t_embed_dim < 1) throw ConfigError("t_embed_dim must be >= 1");
    if (t_range < 1) throw ConfigError("t_range must be >= 1");
}

namespace {

void add_conv(nn::ParamStore& ps, const std::string& name, int cin, int cout, int k,
              RngState& rng, bool zero = false) {
    if (zero) {
        ps.add(name + ".w", nn::zeros_init({cout, cin, k, k, k}));
    } else {
        const double std = std::sqrt(2.0 / (double(cin) * k * k * k));
        ps.add(name + ".w", nn::trunc_normal_init({cout, cin, k, k, k}, std, rng));
    }
    ps.add(name + ".b", nn::zeros_init({cout}));
}

void add_linear(nn::ParamStore& ps, const std::string& name, int in, int out, RngState& rng) {
    const double std = std::sqrt(2.0 / double(in));
    ps.add(name + ".w", nn::trunc_normal_init({out, in}, std, rng));
    ps.add(name + ".b", nn::zeros_init({out}));
}

void add_matrix(nn::ParamStore& ps, const std::string& name, int rows, int cols, RngState& rng) {
    const double std = std::sqrt(2.0 / double(rows));
    ps.add(name, nn::trunc_normal_init({rows, cols}, std, rng));
}

void add_gn(nn::ParamStore& ps, const std::string& name, int c) {
    ps.add(name + ".g", Tensor({c}, 1.0));
    ps.add(name + ".b", nn::zeros_init({c}));
}

void add_resblock(nn::ParamStore& ps, const std::string& name, int cin, int cout, int t_dim,
                  RngState& rng) {
    add_gn(ps, name + ".gn1", cin);
    add_conv(ps, name + ".conv1", cin, cout, 3, rng);
    add_linear(ps, name + ".tproj", t_dim, cout, rng);
    add_gn(ps, name + ".gn2", cout);
    add_conv(ps, name + ".conv2", cout, cout, 3, rng);
    if (cin != cout) add_conv(ps, name + ".skip", cin, cout, 1, rng);
}

void add_attention(nn::ParamStore& ps, const std::string& name, int channels, int d, int cond_dim,
                   RngState& rng) {
    add_matrix(ps, name + ".wq", channels, d, rng);
    add_matrix(ps, name + ".wk", cond_dim, d, rng);
    add_matrix(ps, name + ".wv", cond_dim, d, rng);
    add_matrix(ps, name + ".wo", d, channels, rng);
}

Var conv(Workspace& w, const nn::ParamStore& ps, const std::string& name, Var x, int stride,
         int pad) {
    return nn::conv3d(x, w.use(ps, name + ".w"), w.use(ps, name + ".b"), stride, pad);
}

Var gnorm(Workspace& w, const nn::ParamStore& ps, const std::string& name, Var x, int groups) {
    return nn::group_norm(x, w.use(ps, name + ".g"), w.use(ps, name + ".b"), groups);
}

Var resblock(Workspace& w, const nn::ParamStore& ps, const std::string& name, Var x, Var temb,
             int cin, int cout, int groups) {
    Var h = conv(w, ps, name + ".conv1", nn::silu(gnorm(w, ps, name + ".gn1", x, groups)), 1, 1);
    Var tproj = nn::linear(temb, w.use(ps, name + ".tproj.w"), w.use(ps, name + ".tproj.b"));
    h = nn::add_channel_bias(h, nn::reshape(tproj, {cout}));
    h = conv(w, ps, name + ".conv2", nn::silu(gnorm(w, ps, name + ".gn2", h, groups)), 1, 1);
    Var skip = cin == cout ? x : conv(w, ps, name + ".skip", x, 1, 0);
    return nn::add(h, skip);
}

}  // namespace

void DenoiserNet::init(RngState rng) {
    cfg.validate();
    params = nn::ParamStore{};

    add_conv(params, "stem", 2 * cfg.latent_channels, cfg.widths[0], 3, rng);
    add_linear(params, "temb.l1", cfg.t_embed_dim, cfg.t_embed_dim, rng);
    add_linear(params, "temb.l2", cfg.t_embed_dim, cfg.t_embed_dim, rng);

    for (int l = 0; l < cfg.levels; ++l) {
        const std::string base = "down" + std::to_string(l);
        if (l > 0)
            add_conv(params, "down" + std::to_string(l - 1) + ".ds", cfg.widths[l - 1],
                     cfg.widths[l], 3, rng);
        add_resblock(params, base + ".res", cfg.widths[l], cfg.widths[l], cfg.t_embed_dim, rng);
        add_attention(params, base + ".attn", cfg.widths[l], cfg.attn_dim, cfg.cond_dim, rng);
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        const std::string base = "up" + std::to_string(l);
        add_conv(params, base + ".conv", cfg.widths[l + 1], cfg.widths[l], 3, rng);
        add_resblock(params, base + ".res", 2 * cfg.widths[l], cfg.widths[l], cfg.t_embed_dim,
                     rng);
        add_attention(params, base + ".attn", cfg.widths[l], cfg.attn_dim, cfg.cond_dim, rng);
    }
    add_gn(params, "head.gn", cfg.widths[0]);
    add_conv(params, "head", cfg.widths[0], cfg.latent_channels, 3, rng, /*zero=*/true);
}

std::vector<double> timestep_features(int t, int T, int dim) {
    if (t < 1 || t > T)
        throw ParameterError("timestep " + std::to_string(t) + " outside [1, " +
                             std::to_string(T) + "]");
    if (dim < 1) throw ParameterError("timestep feature dim must be >= 1");
    std::vector<double> out(static_cast<size_t>(dim), 0.0);
    for (int p = 0; p < dim; ++p) {
        const double freq = std::pow(10000.0, -double(p) / double(dim));
        out[size_t(p)] = (p % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    }
    return out;
}

Var cross_attention_graph(Workspace& w, const nn::ParamStore& ps, const std::string& prefix,
                          Var f, const PromptEmbedding& c, AttentionTrace* trace) {
    const Tensor& wk = ps.get(prefix + ".wk");
    if (wk.shape[0] != c.dim)
        throw ConfigError("cross-attention at '" + prefix + "' expects embedding dim " +
                          std::to_string(wk.shape[0]) + ", got " + std::to_string(c.dim));
    const int d = wk.shape[1];
    const auto& fs = f->value.shape;

    Var cvar = w.constant(Tensor::from({c.tokens, c.dim}, c.c));
    Var tokens = nn::spatial_tokens(f);                              // (N, C)
    Var q = nn::matmul(tokens, w.use(ps, prefix + ".wq"));           // (N, d)
    Var k = nn::matmul(cvar, w.use(ps, prefix + ".wk"));             // (M, d)
    Var v = nn::matmul(cvar, w.use(ps, prefix + ".wv"));             // (M, d)
    Var logits = nn::scale(nn::matmul(q, nn::transpose(k)), 1.0 / std::sqrt(double(d)));
    Var a = nn::softmax_rows(logits);                                // (N, M)
    if (trace) trace->weights.emplace_back(prefix, a->value);
    Var o = nn::matmul(a, v);                                        // (N, d)
    Var y = nn::matmul(o, w.use(ps, prefix + ".wo"));                // (N, C)
    return nn::add(f, nn::tokens_to_spatial(y, fs[1], fs[2], fs[3]));
}

Tensor cross_attention(const Tensor& f, const PromptEmbedding& c, const Tensor& wq,
                       const Tensor& wk, const Tensor& wv, const Tensor& wo,
                       AttentionTrace* trace) {
    nn::ParamStore ps;
    ps.add("attn.wq", wq);
    ps.add("attn.wk", wk);
    ps.add("attn.wv", wv);
    ps.add("attn.wo", wo);
    Workspace w;
    Var out = cross_attention_graph(w, ps, "attn", w.constant(f), c, trace);
    return out->value;
}

Var predict_noise_graph(Workspace& w, const DenoiserNet& net, Var h, int t,
                        const PromptEmbedding& c, AttentionTrace* trace) {
    const DenoiserConfig& cfg = net.cfg;
    if (h->value.rank() != 4 || h->value.shape[0] != 2 * cfg.latent_channels)
        throw ShapeError("denoiser input must have " + std::to_string(2 * cfg.latent_channels) +
                         " channels, got " + h->value.shape_str());
    if (c.tokens != cfg.cond_tokens || c.dim != cfg.cond_dim)
        throw ConfigError("prompt embedding is " + std::to_string(c.tokens) + "x" +
                          std::to_string(c.dim) + ", net expects " +
                          std::to_string(cfg.cond_tokens) + "x" + std::to_string(cfg.cond_dim));
    const int down_factor = 1 << (cfg.levels - 1);
    for (int i = 1; i < 4; ++i)
        if (h->value.shape[i] % down_factor)
            throw ShapeError("latent spatial dims must be divisible by " +
                             std::to_string(down_factor));

    Var feats = w.constant(
        Tensor::from({1, cfg.t_embed_dim}, timestep_features(t, cfg.t_range, cfg.t_embed_dim)));
    Var temb = nn::linear(feats, w.use(net.params, "temb.l1.w"), w.use(net.params, "temb.l1.b"));
    temb = nn::linear(nn::silu(temb), w.use(net.params, "temb.l2.w"),
                      w.use(net.params, "temb.l2.b"));

    Var x = conv(w, net.params, "stem", h, 1, 1);
    std::vector<Var> skips;
    for (int l = 0; l < cfg.levels; ++l) {
        if (l > 0) x = conv(w, net.params, "down" + std::to_string(l - 1) + ".ds", x, 2, 1);
        const std::string base = "down" + std::to_string(l);
        x = resblock(w, net.params, base + ".res", x, temb, cfg.widths[l], cfg.widths[l],
                     cfg.gn_groups);
        x = cross_attention_graph(w, net.params, base + ".attn", x, c, trace);
        skips.push_back(x);
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        const std::string base = "up" + std::to_string(l);
        x = nn::upsample_nearest2(x);
        x = conv(w, net.params, base + ".conv", x, 1, 1);
        x = nn::concat_channels(x, skips[size_t(l)]);
        x = resblock(w, net.params, base + ".res", x, temb, 2 * cfg.widths[l], cfg.widths[l],
                     cfg.gn_groups);
        x = cross_attention_graph(w, net.params, base + ".attn", x, c, trace);
    }
    x = nn::silu(gnorm(w, net.params, "head.gn", x, cfg.gn_groups));
    return conv(w, net.params, "head", x, 1, 1);
}

LatentGrid predict_noise(const DenoiserNet& net, const LatentGrid& h, int t,
                         const PromptEmbedding& c, AttentionTrace* trace) {
    Workspace w;
    Var out = predict_noise_graph(w, net, w.constant(h.to_tensor()), t, c, trace);
    return LatentGrid::from_tensor(out->value);
}

}  // namespace taugen
