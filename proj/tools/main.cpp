#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
    using namespace taugen::cli;

    CLI::App app{"taugen: text-guided 3D latent diffusion for volumetric image synthesis"};
    app.require_subcommand(1);

    PhantomGenArgs pg;
    auto* gen = app.add_subcommand("phantom-gen", "Generate a synthetic paired dataset");
    gen->add_option("-c,--config", pg.config, "Run config JSON")->envname("TAUGEN_CONFIG");
    gen->add_option("-n,--count", pg.count, "Number of samples")->required();
    gen->add_option("--seed", pg.seed, "Seed override");
    gen->add_option("--split-fraction", pg.split_fraction, "Leading train fraction");
    gen->add_option("--plasma-const", pg.plasma_const,
                    "Use a constant plasma value instead of uniform [0,12]");
    gen->add_option("-o,--out", pg.out_dir, "Output directory (default: paths.data_dir)");
    gen->add_flag("--force", pg.force, "Overwrite an existing dataset");

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train a pipeline stage");
    train->add_option("-c,--config", tr.config, "Run config JSON")->envname("TAUGEN_CONFIG");
    train->add_option("--stage", tr.stage, "ae | diffusion")->required();
    train->add_option("--seed", tr.seed, "Seed override");
    train->add_flag("--force-restart", tr.force_restart, "Ignore an existing checkpoint");

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "Generate volumes from a trained model");
    sample->add_option("-c,--config", sa.config, "Run config JSON")->envname("TAUGEN_CONFIG");
    sample->add_option("--mri", sa.mri, "Structural volume for a plasma sweep");
    sample->add_option("--plasma", sa.plasma_list, "Comma-separated plasma values");
    sample->add_option("--manifest", sa.manifest, "Generate one volume per manifest subject");
    sample->add_option("--split", sa.split, "Manifest split to generate (train|test)");
    sample->add_option("--seed", sa.seed, "Seed override");
    sample->add_option("--sampler", sa.sampler, "ddpm | ddim");
    sample->add_option("--steps", sa.steps, "DDIM step count");
    sample->add_option("-o,--out", sa.out_dir, "Output directory");

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Region-stratified comparison of real vs generated");
    eval->add_option("-c,--config", ev.config, "Run config JSON")->envname("TAUGEN_CONFIG");
    eval->add_option("--real", ev.real_manifest, "Manifest of real volumes")->required();
    eval->add_option("--gen", ev.gen_dir, "Directory of <subject>_gen.tgv volumes")->required();
    eval->add_option("-o,--out", ev.out_dir, "Output directory for tables");
    eval->add_option("--bins", ev.bins, "paper | full");
    eval->add_option("--split", ev.split, "Manifest split to evaluate (train|test|all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    if (gen->parsed()) return cmd_phantom_gen(pg);
    if (train->parsed()) return cmd_train(tr);
    if (sample->parsed()) return cmd_sample(sa);
    if (eval->parsed()) return cmd_eval(ev);
    return kUsage;
}
