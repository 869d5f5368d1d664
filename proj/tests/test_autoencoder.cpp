#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "taugen/autoencoder.hpp"
#include "taugen/errors.hpp"
#include "taugen/nn/checkpoint.hpp"
#include "taugen/phantom.hpp"

using namespace taugen;
using taugen::testing::TempDir;
using taugen::testing::WithPrecision;

namespace {

AutoencoderNet tiny_net(uint64_t seed = 1) {
    AutoencoderNet net;
    net.cfg.levels = 2;
    net.cfg.base_width = 4;
    net.cfg.latent_channels = 2;
    net.init(RngState(seed));
    return net;
}

Volume random_volume(int nx, int ny, int nz, uint64_t seed) {
    Volume v(nx, ny, nz, 1, ValueUnit::normalized01);
    RngState rng(seed);
    for (float& f : v.data) f = float(rng.uniform01());
    return v;
}

PhantomConfig tiny_phantom() {
    PhantomConfig cfg = PhantomConfig::defaults();
    cfg.nx = 8;
    cfg.ny = 8;
    cfg.nz = 8;
    cfg.brain_center = {3.5, 3.5, 3.5};
    cfg.brain_radii = {3.5, 3.5, 3.5};
    for (size_t i = 0; i < cfg.regions.size(); ++i) {
        auto& r = cfg.regions[i];
        r.radii = {0.9, 0.9, 0.9};
        r.center = {2.0 + 3.0 * double(i % 2), 2.0 + 3.0 * double((i / 2) % 2),
                    2.0 + 3.0 * double(i / 4)};
    }
    return cfg;
}

}  // namespace

TEST_CASE("encode/decode shape round trip") {
    WithPrecision p(nn::Precision::f64);
    AutoencoderNet net;
    net.cfg.levels = 2;
    net.cfg.base_width = 4;
    net.cfg.latent_channels = 4;
    net.init(RngState(1));

    const Volume v = random_volume(32, 32, 16, 2);
    const LatentGrid z = encode(net, v);
    CHECK(z.channels == 4);
    CHECK(z.nx == 8);
    CHECK(z.ny == 8);
    CHECK(z.nz == 4);

    const Volume back = decode(net, z);
    CHECK(back.nx == 32);
    CHECK(back.ny == 32);
    CHECK(back.nz == 16);
    CHECK(back.channels == 1);
}

TEST_CASE("encode is deterministic") {
    WithPrecision p(nn::Precision::f64);
    const AutoencoderNet net = tiny_net();
    const Volume v = random_volume(8, 8, 8, 3);
    const LatentGrid a = encode(net, v);
    const LatentGrid b = encode(net, v);
    CHECK(a.v == b.v);
}

TEST_CASE("decode of an all-zero latent is a valid volume") {
    WithPrecision p(nn::Precision::f64);
    const AutoencoderNet net = tiny_net();
    const LatentGrid z(2, 2, 2, 2, 0.0);
    const Volume v = decode(net, z);
    v.validate();  // finite, in [0,1] (normalized01)
    CHECK(v.nx == 8);
}

TEST_CASE("non-divisible dims raise ShapeError naming the multiple") {
    WithPrecision p(nn::Precision::f64);
    const AutoencoderNet net = tiny_net();
    const Volume v = random_volume(10, 8, 8, 4);
    try {
        encode(net, v);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("divisible by 4") != std::string::npos);
    }
    Volume two_ch(8, 8, 8, 2);
    CHECK_THROWS_AS(encode(net, two_ch), ShapeError);
}

TEST_CASE("training on a manifest without train entries is a precondition error") {
    WithPrecision p(nn::Precision::f64);
    TempDir tmp("ae");
    DatasetOptions opts;
    opts.split_fraction = 0.0;  // everything lands in test
    generate_dataset(tiny_phantom(), 2, 3, tmp.path, opts);
    const DatasetManifest m = load_manifest(tmp.path / "manifest.json");

    AutoencoderNet net = tiny_net();
    AeTrainOptions topts;
    topts.epochs = 1;
    CHECK_THROWS_AS(train_autoencoder(net, m, topts), ParameterError);
}

TEST_CASE("short training run reduces the loss and calibrates the latent scale") {
    WithPrecision p(nn::Precision::f32);
    TempDir tmp("ae");
    generate_dataset(tiny_phantom(), 4, 3, tmp.path, {});
    const DatasetManifest m = load_manifest(tmp.path / "manifest.json");

    AutoencoderNet net = tiny_net(7);
    AeTrainOptions opts;
    opts.optimizer.learning_rate = 2e-3;
    opts.optimizer.batch_size = 8;
    opts.epochs = 40;
    opts.seed = 11;
    const AeTrainReport report = train_autoencoder(net, m, opts);
    REQUIRE(report.epoch_loss.size() == 40);
    CHECK(report.epoch_loss.back() < report.epoch_loss.front());
    CHECK(net.frozen);

    // After calibration the training latents have ~unit std by construction.
    double sum = 0.0, sumsq = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < m.entries.size(); ++i) {
        if (m.entries[i].split != Split::train) continue;
        const PairedSample s = load_sample(m, i);
        for (const Volume* v : {&s.pet, &s.mri}) {
            const LatentGrid z = encode(net, *v);
            for (double x : z.v) {
                sum += x;
                sumsq += x * x;
            }
            n += z.v.size();
        }
    }
    const double mean = sum / double(n);
    const double std = std::sqrt(sumsq / double(n) - mean * mean);
    CHECK(std > 0.8);
    CHECK(std < 1.25);
}

TEST_CASE("fixed seed and data give identical checkpoint bytes") {
    WithPrecision p(nn::Precision::f32);
    TempDir tmp("ae");
    generate_dataset(tiny_phantom(), 2, 5, tmp.path, {});
    const DatasetManifest m = load_manifest(tmp.path / "manifest.json");

    auto run = [&](const std::filesystem::path& out) {
        AutoencoderNet net = tiny_net(9);
        AeTrainOptions opts;
        opts.epochs = 3;
        opts.seed = 13;
        train_autoencoder(net, m, opts);
        nn::save_checkpoint(out, net.params, "{}");
    };
    run(tmp.path / "a.ckpt");
    run(tmp.path / "b.ckpt");

    std::ifstream a(tmp.path / "a.ckpt", std::ios::binary);
    std::ifstream b(tmp.path / "b.ckpt", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}
