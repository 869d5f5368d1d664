#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace taugen::cli {

// Exit codes: 0 ok, 2 usage, 3 missing dependency artifact, 4 data pairing
// error, 5 numeric failure.
enum ExitCode {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kMissingArtifact = 3,
    kPairing = 4,
    kNumeric = 5,
};

struct PhantomGenArgs {
    std::filesystem::path config;
    long long count = 0;
    std::optional<uint64_t> seed;
    double split_fraction = 0.8;
    std::optional<double> plasma_const;
    std::optional<std::filesystem::path> out_dir;
    bool force = false;
};

struct TrainArgs {
    std::filesystem::path config;
    std::string stage;  // "ae" | "diffusion"
    std::optional<uint64_t> seed;
    bool force_restart = false;
};

struct SampleArgs {
    std::filesystem::path config;
    std::optional<std::filesystem::path> mri;
    std::string plasma_list;  // comma-separated, with --mri
    std::optional<std::filesystem::path> manifest;
    std::string split = "test";  // with --manifest
    std::optional<uint64_t> seed;
    std::optional<std::string> sampler;
    std::optional<int> steps;
    std::optional<std::filesystem::path> out_dir;
};

struct EvalArgs {
    std::filesystem::path config;
    std::filesystem::path real_manifest;
    std::filesystem::path gen_dir;
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::string> bins;
    std::string split = "test";
};

int cmd_phantom_gen(const PhantomGenArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_sample(const SampleArgs& args);
int cmd_eval(const EvalArgs& args);

}  // namespace taugen::cli
