#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "taugen/errors.hpp"
#include "taugen/nn/checkpoint.hpp"
#include "taugen/runconfig.hpp"

namespace taugen::cli {

namespace {

struct UsageError : Error {
    using Error::Error;
};

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const PairingError& e) {
        std::cerr << "pairing error: " << e.what() << "\n";
        return kPairing;
    } catch (const TrainingError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}

uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot hash missing file: " + path.string());
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hex64(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write loss curve: " + path.string());
    os << "epoch,loss\n";
    char buf[40];
    for (size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", losses[i]);
        os << i << "," << buf << "\n";
    }
}

RunConfig load_config_checked(const std::filesystem::path& path) {
    if (path.empty())
        throw UsageError("no config given (pass -c or set TAUGEN_CONFIG)");
    return load_run_config(path);
}

// ---- checkpoint metadata ---------------------------------------------------

nlohmann::json ae_meta_json(const AutoencoderNet& net, int epoch,
                            const std::vector<double>& losses) {
    return {{"kind", "autoencoder"},
            {"epoch", epoch},
            {"loss_history", losses},
            {"levels", net.cfg.levels},
            {"base_width", net.cfg.base_width},
            {"latent_channels", net.cfg.latent_channels},
            {"latent_penalty", net.cfg.latent_penalty},
            {"latent_scale", net.latent_scale}};
}

void write_ae_sidecar(const std::filesystem::path& ckpt, const AutoencoderNet& net) {
    const nlohmann::json j = {{"levels", net.cfg.levels},
                              {"latent_channels", net.cfg.latent_channels},
                              {"scale", net.latent_scale},
                              {"input_dims_constraint",
                               "spatial dims divisible by " + std::to_string(net.cfg.factor())}};
    std::filesystem::path p = ckpt;
    p.replace_extension(".meta.json");
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint sidecar: " + p.string());
    os << j.dump(2) << "\n";
}

AutoencoderNet load_ae(const std::filesystem::path& ckpt_path, std::vector<double>* losses,
                       int* epoch) {
    const nn::Checkpoint ck = nn::load_checkpoint(ckpt_path);
    const nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
    AutoencoderNet net;
    net.cfg.levels = meta.at("levels").get<int>();
    net.cfg.base_width = meta.at("base_width").get<int>();
    net.cfg.latent_channels = meta.at("latent_channels").get<int>();
    net.cfg.latent_penalty = meta.at("latent_penalty").get<double>();
    net.latent_scale = meta.at("latent_scale").get<double>();
    net.params = ck.store;
    net.frozen = true;
    if (losses) *losses = meta.at("loss_history").get<std::vector<double>>();
    if (epoch) *epoch = meta.at("epoch").get<int>();
    return net;
}

nlohmann::json diffusion_meta_json(const RunConfig& cfg, int epoch,
                                   const std::vector<double>& losses) {
    return {{"kind", "diffusion"},
            {"epoch", epoch},
            {"loss_history", losses},
            {"levels", cfg.denoiser.levels},
            {"widths", cfg.denoiser.widths},
            {"attn_dim", cfg.denoiser.attn_dim},
            {"latent_channels", cfg.denoiser.latent_channels},
            {"cond_tokens", cfg.denoiser.cond_tokens},
            {"cond_dim", cfg.denoiser.cond_dim},
            {"t_embed_dim", cfg.denoiser.t_embed_dim},
            {"gn_groups", cfg.denoiser.gn_groups},
            {"schedule",
             {{"family", cfg.schedule.family},
              {"T", cfg.schedule.T},
              {"beta_start", cfg.schedule.beta_start},
              {"beta_end", cfg.schedule.beta_end}}},
            {"mri_conditioning", cfg.mri_conditioning}};
}

struct LoadedDiffusion {
    DenoiserNet net;
    ScheduleSpec schedule;
    bool mri_conditioning = true;
    std::vector<double> losses;
    int epoch = 0;
};

LoadedDiffusion load_diffusion(const std::filesystem::path& ckpt_path) {
    const nn::Checkpoint ck = nn::load_checkpoint(ckpt_path);
    const nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
    LoadedDiffusion d;
    d.net.cfg.levels = meta.at("levels").get<int>();
    d.net.cfg.widths = meta.at("widths").get<std::vector<int>>();
    d.net.cfg.attn_dim = meta.at("attn_dim").get<int>();
    d.net.cfg.latent_channels = meta.at("latent_channels").get<int>();
    d.net.cfg.cond_tokens = meta.at("cond_tokens").get<int>();
    d.net.cfg.cond_dim = meta.at("cond_dim").get<int>();
    d.net.cfg.t_embed_dim = meta.at("t_embed_dim").get<int>();
    d.net.cfg.gn_groups = meta.at("gn_groups").get<int>();
    d.schedule.family = meta.at("schedule").at("family").get<std::string>();
    d.schedule.T = meta.at("schedule").at("T").get<int>();
    d.schedule.beta_start = meta.at("schedule").at("beta_start").get<double>();
    d.schedule.beta_end = meta.at("schedule").at("beta_end").get<double>();
    d.net.cfg.t_range = d.schedule.T;
    d.mri_conditioning = meta.at("mri_conditioning").get<bool>();
    d.losses = meta.at("loss_history").get<std::vector<double>>();
    d.epoch = meta.at("epoch").get<int>();
    d.net.params = ck.store;
    return d;
}

}  // namespace

int cmd_phantom_gen(const PhantomGenArgs& args) {
    return run_guarded([&] {
        if (args.count < 1) throw UsageError("-n must be >= 1");
        if (!(args.split_fraction >= 0.0 && args.split_fraction <= 1.0))
            throw UsageError("--split-fraction must be in [0,1]");
        if (args.plasma_const && (!std::isfinite(*args.plasma_const) || *args.plasma_const < 0))
            throw UsageError("--plasma-const must be finite and >= 0");

        const RunConfig cfg = load_config_checked(args.config);
        nn::set_precision(cfg.precision_mode);

        DatasetOptions opts;
        opts.split_fraction = args.split_fraction;
        opts.force = args.force;
        if (args.plasma_const) opts.plasma = PlasmaSampler::constant(*args.plasma_const);

        const uint64_t seed = args.seed.value_or(cfg.seed);
        const auto out_dir = args.out_dir ? *args.out_dir : cfg.resolve(cfg.data_dir);
        const auto manifest_path =
            generate_dataset(cfg.phantom, size_t(args.count), seed, out_dir, opts);

        const DatasetManifest m = load_manifest(manifest_path);
        std::cout << "manifest: " << manifest_path.string() << "\n"
                  << "train: " << m.count(Split::train) << "\n"
                  << "test: " << m.count(Split::test) << "\n";
        return int(kOk);
    });
}

int cmd_train(const TrainArgs& args) {
    return run_guarded([&] {
        if (args.stage != "ae" && args.stage != "diffusion")
            throw UsageError("--stage must be 'ae' or 'diffusion'");
        const RunConfig cfg = load_config_checked(args.config);
        nn::set_precision(cfg.precision_mode);
        const uint64_t seed = args.seed.value_or(cfg.seed);

        std::filesystem::create_directories(cfg.resolve(cfg.checkpoint_dir));
        const DatasetManifest manifest =
            load_manifest(cfg.resolve(cfg.data_dir) / "manifest.json");

        if (args.stage == "ae") {
            const auto ckpt = cfg.ae_checkpoint();
            AutoencoderNet net;
            std::vector<double> losses;
            int start_epoch = 0;
            if (std::filesystem::exists(ckpt) && !args.force_restart) {
                net = load_ae(ckpt, &losses, &start_epoch);
                net.frozen = false;
            } else {
                net.cfg = cfg.autoencoder;
                net.init(RngState(seed).substream("ae-init"));
            }
            if (start_epoch >= cfg.ae_epochs) {
                std::cout << "checkpoint: " << ckpt.string() << " (already at epoch "
                          << start_epoch << ")\n";
                return int(kOk);
            }

            AeTrainOptions opts;
            opts.optimizer = cfg.ae_optimizer;
            opts.epochs = cfg.ae_epochs;
            opts.seed = seed;
            opts.start_epoch = start_epoch;
            opts.on_epoch = [&](int epoch, double loss) {
                losses.push_back(loss);
                if ((epoch + 1) % cfg.checkpoint_every == 0) {
                    save_checkpoint(ckpt, net.params, ae_meta_json(net, epoch + 1, losses).dump());
                    write_ae_sidecar(ckpt, net);
                    write_loss_csv(cfg.resolve(cfg.checkpoint_dir) / "ae_loss.csv", losses);
                }
            };
            const AeTrainReport report = train_autoencoder(net, manifest, opts);
            save_checkpoint(ckpt, net.params,
                            ae_meta_json(net, report.epochs_run, losses).dump());
            write_ae_sidecar(ckpt, net);
            write_loss_csv(cfg.resolve(cfg.checkpoint_dir) / "ae_loss.csv", losses);
            std::cout << "checkpoint: " << ckpt.string() << "\n"
                      << "epochs: " << report.epochs_run << "\n"
                      << "latent_scale: " << report.latent_scale << "\n";
            return int(kOk);
        }

        // diffusion stage
        const auto ae_ckpt = cfg.ae_checkpoint();
        if (!std::filesystem::exists(ae_ckpt)) {
            std::cerr << "missing autoencoder checkpoint " << ae_ckpt.string()
                      << " (run `taugen train --stage ae` first)\n";
            return int(kMissingArtifact);
        }
        const AutoencoderNet ae = load_ae(ae_ckpt, nullptr, nullptr);

        const auto ckpt = cfg.diffusion_checkpoint();
        DenoiserNet den;
        std::vector<double> losses;
        int start_epoch = 0;
        if (std::filesystem::exists(ckpt) && !args.force_restart) {
            LoadedDiffusion d = load_diffusion(ckpt);
            den = std::move(d.net);
            losses = std::move(d.losses);
            start_epoch = d.epoch;
        } else {
            den.cfg = cfg.denoiser;
            den.init(RngState(seed).substream("diff-init"));
        }
        if (start_epoch >= cfg.diffusion_epochs) {
            std::cout << "checkpoint: " << ckpt.string() << " (already at epoch " << start_epoch
                      << ")\n";
            return int(kOk);
        }

        const NoiseSchedule schedule = cfg.schedule.build();
        DiffusionTrainOptions opts;
        opts.optimizer = cfg.diffusion_optimizer;
        opts.epochs = cfg.diffusion_epochs;
        opts.seed = seed;
        opts.start_epoch = start_epoch;
        opts.embedding = cfg.embedding;
        opts.sampler.reverse_variance = cfg.reverse_variance;
        opts.sampler.mri_conditioning = cfg.mri_conditioning;
        opts.on_epoch = [&](int epoch, double loss) {
            losses.push_back(loss);
            if ((epoch + 1) % cfg.checkpoint_every == 0) {
                save_checkpoint(ckpt, den.params,
                                diffusion_meta_json(cfg, epoch + 1, losses).dump());
                write_loss_csv(cfg.resolve(cfg.checkpoint_dir) / "diffusion_loss.csv", losses);
            }
        };
        const DiffusionTrainReport report = train_diffusion(ae, den, manifest, schedule, opts);
        save_checkpoint(ckpt, den.params,
                        diffusion_meta_json(cfg, report.epochs_run, losses).dump());
        write_loss_csv(cfg.resolve(cfg.checkpoint_dir) / "diffusion_loss.csv", losses);
        std::cout << "checkpoint: " << ckpt.string() << "\n"
                  << "epochs: " << report.epochs_run << "\n";
        return int(kOk);
    });
}

namespace {

void sample_one(const RunConfig& cfg, const AutoencoderNet& ae, const LoadedDiffusion& diff,
                const NoiseSchedule& schedule, const Volume& mri,
                const std::filesystem::path& mri_path, double plasma, uint64_t seed,
                SamplerKind sampler, std::optional<int> steps,
                const std::filesystem::path& out_base) {
    GenerationRequest req;
    req.mri = mri;
    req.plasma = plasma;
    req.seed = seed;
    req.sampler = sampler;
    req.steps = steps;

    SamplerOptions sopts;
    sopts.reverse_variance = cfg.reverse_variance;
    sopts.mri_conditioning = diff.mri_conditioning;

    const Volume out = generate(ae, diff.net, schedule, req, cfg.embedding, sopts);
    write_volume(out, out_base.string() + ".tgv");

    const nlohmann::json prov = {
        {"checkpoint_hash",
         {{"ae", hex64(fnv1a64_file(cfg.ae_checkpoint()))},
          {"diffusion", hex64(fnv1a64_file(cfg.diffusion_checkpoint()))}}},
        {"seed", seed},
        {"plasma", plasma},
        {"prompt", format_prompt(plasma).text},
        {"sampler", sampler_name(sampler)},
        {"steps", steps ? nlohmann::json(*steps) : nlohmann::json(schedule.T)},
        {"mri", mri_path.filename().generic_string()},
        {"mri_conditioning", diff.mri_conditioning}};
    std::ofstream os(out_base.string() + ".json", std::ios::trunc);
    if (!os) throw IoError("cannot write provenance json");
    os << prov.dump(2) << "\n";
}

std::string plasma_tag(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

int cmd_sample(const SampleArgs& args) {
    return run_guarded([&] {
        const RunConfig cfg = load_config_checked(args.config);
        nn::set_precision(cfg.precision_mode);
        const uint64_t seed = args.seed.value_or(cfg.seed);
        const SamplerKind sampler =
            args.sampler ? parse_sampler(*args.sampler) : cfg.sampler;
        if (args.steps && *args.steps < 1) throw UsageError("--steps must be >= 1");

        if (!std::filesystem::exists(cfg.ae_checkpoint()) ||
            !std::filesystem::exists(cfg.diffusion_checkpoint())) {
            std::cerr << "missing trained checkpoints under "
                      << cfg.resolve(cfg.checkpoint_dir).string()
                      << " (run `taugen train` first)\n";
            return int(kMissingArtifact);
        }
        const AutoencoderNet ae = load_ae(cfg.ae_checkpoint(), nullptr, nullptr);
        const LoadedDiffusion diff = load_diffusion(cfg.diffusion_checkpoint());
        const NoiseSchedule schedule = diff.schedule.build();

        const auto out_dir = args.out_dir ? *args.out_dir : cfg.resolve(cfg.output_dir);
        std::filesystem::create_directories(out_dir);

        if (args.manifest) {
            // Per-subject generation for evaluation pipelines.
            const DatasetManifest m = load_manifest(*args.manifest);
            Split split = parse_split(args.split);
            size_t count = 0;
            for (size_t i = 0; i < m.entries.size(); ++i) {
                const auto& e = m.entries[i];
                if (e.split != split) continue;
                const Volume mri = read_volume(m.dir / e.mri);
                sample_one(cfg, ae, diff, schedule, mri, e.mri, e.plasma, mix64(seed, i),
                           sampler, args.steps, out_dir / (e.subject_id + "_gen"));
                ++count;
            }
            std::cout << "generated: " << count << " volumes in " << out_dir.string() << "\n";
            return int(kOk);
        }

        if (!args.mri) throw UsageError("pass --mri <volume.tgv> or --manifest <manifest.json>");
        std::vector<double> plasmas;
        std::stringstream ss(args.plasma_list);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.empty()) continue;
            size_t pos = 0;
            double v = 0;
            try {
                v = std::stod(tok, &pos);
            } catch (const std::exception&) {
                throw UsageError("bad plasma value: '" + tok + "'");
            }
            if (pos != tok.size() || !std::isfinite(v) || v < 0.0)
                throw UsageError("plasma values must be finite and >= 0, got '" + tok + "'");
            plasmas.push_back(v);
        }
        if (plasmas.empty()) throw UsageError("--plasma needs at least one value");

        const Volume mri = read_volume(*args.mri);
        for (double v : plasmas) {
            sample_one(cfg, ae, diff, schedule, mri, *args.mri, v, seed, sampler, args.steps,
                       out_dir / ("sample_p" + plasma_tag(v) + "_s" + std::to_string(seed)));
            std::cout << (out_dir / ("sample_p" + plasma_tag(v) + "_s" + std::to_string(seed)))
                             .string()
                      << ".tgv\n";
        }
        return int(kOk);
    });
}

int cmd_eval(const EvalArgs& args) {
    return run_guarded([&] {
        const RunConfig cfg = load_config_checked(args.config);
        nn::set_precision(cfg.precision_mode);

        PlasmaBins::Mode mode = cfg.bins_mode;
        if (args.bins) {
            if (*args.bins == "paper")
                mode = PlasmaBins::Mode::paper;
            else if (*args.bins == "full")
                mode = PlasmaBins::Mode::full;
            else
                throw UsageError("--bins must be 'paper' or 'full'");
        }

        const DatasetManifest m = load_manifest(args.real_manifest);
        std::vector<size_t> selected;
        if (args.split == "all") {
            selected.resize(m.entries.size());
            for (size_t i = 0; i < selected.size(); ++i) selected[i] = i;
        } else {
            selected = m.indices(parse_split(args.split));
        }
        if (selected.empty()) throw PairingError("no entries in split '" + args.split + "'");

        // Load everything first so a missing file aborts before any output.
        std::vector<Volume> reals, gens;
        std::vector<LabelAtlas> atlases;
        std::vector<EvalSample> samples;
        reals.reserve(selected.size());
        gens.reserve(selected.size());
        atlases.reserve(selected.size());
        for (size_t idx : selected) {
            const auto& e = m.entries[idx];
            const auto gen_path = args.gen_dir / (e.subject_id + "_gen.tgv");
            if (!std::filesystem::exists(gen_path))
                throw PairingError("no generated volume for subject '" + e.subject_id + "' (" +
                                   gen_path.string() + ")");
            reals.push_back(read_volume(m.dir / e.pet));
            gens.push_back(read_volume(gen_path));
            atlases.push_back(read_atlas(m.dir / e.atlas));
        }
        for (size_t i = 0; i < selected.size(); ++i) {
            const auto& e = m.entries[selected[i]];
            samples.push_back({e.subject_id, e.plasma, &reals[i], &gens[i], &atlases[i]});
        }

        const PlasmaBins bins = PlasmaBins::make(mode);
        const RegionStats stats = compute_region_stats(samples, bins);
        const MseMatrix matrix = mse_matrix(stats);

        const auto out_dir = args.out_dir ? *args.out_dir : cfg.resolve(cfg.output_dir) / "eval";
        emit_tables(matrix, stats, out_dir);
        emit_report_json(matrix, stats, out_dir / "report.json");

        std::cout << "eval tables: " << out_dir.string() << "\n"
                  << "samples: " << stats.rows.size() << " (unbinned: " << stats.unbinned
                  << ")\n";
        return int(kOk);
    });
}

}  // namespace taugen::cli
