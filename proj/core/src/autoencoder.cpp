#include "taugen/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "taugen/errors.hpp"

namespace taugen {

using nn::Tensor;
using nn::Var;
using nn::Workspace;

int AutoencoderConfig::width(int level) const {
    return base_width * std::min(1 << level, 4);
}

void AutoencoderConfig::validate() const {
    if (levels < 1 || levels > 4) throw ConfigError("autoencoder levels must be in [1,4]");
    if (base_width < 1) throw ConfigError("autoencoder base_width must be >= 1");
    if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
    if (latent_penalty < 0.0) throw ConfigError("latent_penalty must be >= 0");
}

namespace {

void add_conv(nn::ParamStore& ps, const std::string& name, int cin, int cout, int k,
              RngState& rng) {
    const double std = std::sqrt(2.0 / (double(cin) * k * k * k));
    ps.add(name + ".w", nn::trunc_normal_init({cout, cin, k, k, k}, std, rng));
    ps.add(name + ".b", nn::zeros_init({cout}));
}

Var conv(Workspace& w, const nn::ParamStore& ps, const std::string& name, Var x, int stride) {
    return nn::conv3d(x, w.use(ps, name + ".w"), w.use(ps, name + ".b"), stride, 1);
}

}  // namespace

void AutoencoderNet::init(RngState rng) {
    cfg.validate();
    params = nn::ParamStore{};
    latent_scale = 1.0;
    frozen = false;

    // Stem and refinement stages see three normalized coordinate channels:
    // registered volumes are position-locked, so edges are position-coded.
    add_conv(params, "enc.stem", 1 + 3, cfg.width(0), 3, rng);
    for (int l = 0; l < cfg.levels; ++l) {
        add_conv(params, "enc.down" + std::to_string(l), cfg.width(l), cfg.width(l + 1), 3, rng);
        add_conv(params, "enc.block" + std::to_string(l), cfg.width(l + 1), cfg.width(l + 1), 3,
                 rng);
    }
    add_conv(params, "enc.head", cfg.width(cfg.levels), cfg.latent_channels, 3, rng);

    add_conv(params, "dec.stem", cfg.latent_channels, cfg.width(cfg.levels), 3, rng);
    add_conv(params, "dec.block", cfg.width(cfg.levels), cfg.width(cfg.levels), 3, rng);
    for (int l = cfg.levels - 1; l >= 1; --l)
        add_conv(params, "dec.up" + std::to_string(l), cfg.width(l + 1), cfg.width(l), 3, rng);
    // Final 2x stage is a learned sub-voxel shuffle; a coordinate-aware
    // refinement conv cleans up at full resolution.
    const int refine = std::max(1, cfg.width(0) / 2);
    add_conv(params, "dec.up0", cfg.width(1), 8 * refine, 3, rng);
    add_conv(params, "dec.refine", refine + 3, refine, 3, rng);
    add_conv(params, "dec.head", refine, 1, 3, rng);
}

namespace {

// Same-width blocks carry an identity skip; optimization of plain conv
// stacks without one is much slower.
Var res_block(Workspace& w, const nn::ParamStore& ps, const std::string& name, Var x) {
    return nn::add(x, nn::silu(conv(w, ps, name, x, 1)));
}

// (3, D, H, W) of z/y/x coordinates scaled to [-1, 1].
Var coord_channels(Workspace& w, int d, int h, int wd) {
    Tensor t({3, d, h, wd});
    auto norm = [](int i, int n) { return n == 1 ? 0.0 : 2.0 * i / double(n - 1) - 1.0; };
    size_t i = 0;
    for (int z = 0; z < d; ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < wd; ++x, ++i) t.v[i] = norm(z, d);
    for (int z = 0; z < d; ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < wd; ++x, ++i) t.v[i] = norm(y, h);
    for (int z = 0; z < d; ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < wd; ++x, ++i) t.v[i] = norm(x, wd);
    return w.constant(std::move(t));
}

Var with_coords(Workspace& w, Var x) {
    const auto& s = x->value.shape;
    return nn::concat_channels(x, coord_channels(w, s[1], s[2], s[3]));
}

}  // namespace

Var AutoencoderNet::encode_graph(Workspace& w, Var x) const {
    Var h = nn::silu(conv(w, params, "enc.stem", with_coords(w, x), 1));
    for (int l = 0; l < cfg.levels; ++l) {
        h = nn::silu(conv(w, params, "enc.down" + std::to_string(l), h, 2));
        h = res_block(w, params, "enc.block" + std::to_string(l), h);
    }
    return conv(w, params, "enc.head", h, 1);
}

Var AutoencoderNet::decode_graph(Workspace& w, Var z) const {
    Var h = nn::silu(conv(w, params, "dec.stem", z, 1));
    h = res_block(w, params, "dec.block", h);
    for (int l = cfg.levels - 1; l >= 1; --l) {
        h = nn::silu(conv(w, params, "dec.up" + std::to_string(l), h, 1));
        h = nn::upsample_nearest2(h);
    }
    h = nn::voxel_shuffle2(nn::silu(conv(w, params, "dec.up0", h, 1)));
    h = nn::silu(conv(w, params, "dec.refine", with_coords(w, h), 1));
    return conv(w, params, "dec.head", h, 1);
}

namespace {

Tensor volume_to_tensor(const Volume& v) {
    Tensor t({v.channels, v.nz, v.ny, v.nx});
    for (size_t i = 0; i < v.data.size(); ++i) t.v[i] = double(v.data[i]);
    return t;
}

void check_encodable(const AutoencoderConfig& cfg, const Volume& v) {
    if (v.channels != 1) throw ShapeError("encode expects a single-channel volume");
    const int f = cfg.factor();
    if (v.nx % f || v.ny % f || v.nz % f)
        throw ShapeError("encode requires spatial dims divisible by " + std::to_string(f) +
                         ", got (" + std::to_string(v.nx) + "," + std::to_string(v.ny) + "," +
                         std::to_string(v.nz) + ")");
}

}  // namespace

LatentGrid encode(const AutoencoderNet& net, const Volume& v) {
    check_encodable(net.cfg, v);
    Workspace w;
    Var x = w.constant(volume_to_tensor(v));
    Var z = net.encode_graph(w, x);
    LatentGrid g = LatentGrid::from_tensor(z->value);
    const double inv = 1.0 / net.latent_scale;
    const bool f32 = nn::precision() == nn::Precision::f32;
    for (double& x_ : g.v) x_ = nn::round_mode(x_ * inv, f32);
    return g;
}

Volume decode(const AutoencoderNet& net, const LatentGrid& z) {
    const int f = net.cfg.factor();
    if (z.channels != net.cfg.latent_channels)
        throw ShapeError("decode: latent has " + std::to_string(z.channels) +
                         " channels, net expects " + std::to_string(net.cfg.latent_channels));
    Workspace w;
    Tensor zt = z.to_tensor();
    const bool f32 = nn::precision() == nn::Precision::f32;
    for (double& x : zt.v) x = nn::round_mode(x * net.latent_scale, f32);
    Var out = net.decode_graph(w, w.constant(std::move(zt)));

    Volume v(z.nx * f, z.ny * f, z.nz * f, 1, ValueUnit::normalized01);
    for (size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = float(std::clamp(out->value.v[i], 0.0, 1.0));
    return v;
}

double reconstruction_mse(const AutoencoderNet& net, const Volume& v) {
    const Volume rec = decode(net, encode(net, v));
    double acc = 0.0;
    for (size_t i = 0; i < v.data.size(); ++i) {
        const double d = double(rec.data[i]) - double(v.data[i]);
        acc += d * d;
    }
    return acc / double(v.data.size());
}

AeTrainReport train_autoencoder(AutoencoderNet& net, const DatasetManifest& manifest,
                                const AeTrainOptions& opts) {
    opts.optimizer.validate();
    if (opts.epochs < 1) throw ParameterError("epochs must be >= 1");
    const auto train_idx = manifest.indices(Split::train);
    if (train_idx.empty()) throw ParameterError("manifest has no train entries");

    // Both modalities are independent single-channel items.
    std::vector<Tensor> items;
    for (size_t idx : train_idx) {
        const PairedSample s = load_sample(manifest, idx);
        check_encodable(net.cfg, s.pet);
        check_encodable(net.cfg, s.mri);
        items.push_back(volume_to_tensor(s.pet));
        items.push_back(volume_to_tensor(s.mri));
    }

    net.frozen = false;
    AeTrainReport report;

    for (int epoch = opts.start_epoch; epoch < opts.epochs; ++epoch) {
        RngState rng = RngState(opts.seed).substream("ae-epoch", uint64_t(epoch));
        std::vector<size_t> order(items.size());
        std::iota(order.begin(), order.end(), size_t(0));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.next_u64() % i)]);

        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += size_t(opts.optimizer.batch_size)) {
            const size_t b1 = std::min(order.size(), b0 + size_t(opts.optimizer.batch_size));
            const size_t bsz = b1 - b0;
            const double inv_b = 1.0 / double(bsz);

            // Per-item graphs run in parallel; the reduction below is in
            // item order, so results do not depend on the worker count.
            std::vector<double> item_loss(bsz, 0.0);
            std::vector<nn::GradMap> item_grads(bsz);
            nn::parallel_items(bsz, [&](size_t j) {
                Workspace w;
                Var x = w.constant(items[order[b0 + j]]);
                Var z = net.encode_graph(w, x);
                Var recon = net.decode_graph(w, z);
                Var loss = nn::mse(recon, x);
                if (net.cfg.latent_penalty > 0.0)
                    loss = nn::add(loss, nn::scale(nn::sumsq(z), net.cfg.latent_penalty));
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
            if (!std::isfinite(batch_loss))
                throw TrainingError("autoencoder loss diverged (non-finite) at epoch " +
                                    std::to_string(epoch));
            nn::adam_step(net.params, grads, opts.optimizer);
            epoch_loss += batch_loss;
            ++batches;
        }
        epoch_loss /= double(batches);
        report.epoch_loss.push_back(epoch_loss);
        report.epochs_run = epoch + 1;
        if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss);
        if (opts.target_loss > 0.0 && epoch_loss < opts.target_loss) break;
    }

    // Latent scale: std of every raw training latent value.
    net.latent_scale = 1.0;
    double sum = 0.0, sumsq = 0.0;
    size_t count = 0;
    for (const Tensor& item : items) {
        Workspace w;
        Var z = net.encode_graph(w, w.constant(item));
        for (double x : z->value.v) {
            sum += x;
            sumsq += x * x;
        }
        count += z->value.v.size();
    }
    const double mean = sum / double(count);
    const double var = sumsq / double(count) - mean * mean;
    if (var > 1e-12) net.latent_scale = std::sqrt(var);
    net.frozen = true;

    report.latent_scale = net.latent_scale;
    return report;
}

}  // namespace taugen
