#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "taugen/manifest.hpp"
#include "taugen/volume.hpp"

namespace taugen {

struct RegionSpec {
    std::string name;
    uint32_t label = 0;
    std::array<double, 3> center{};  // voxel coordinates (x, y, z)
    std::array<double, 3> radii{};
    double onset = 0.0;  // plasma value at the half-rise point
    double slope = 1.0;
    double structural_intensity = 0.5;
};

// Monotone logistic plasma -> uptake law for one region.
struct UptakeLaw {
    double baseline = 0.0;
    double u_max = 1.0;
    double onset = 0.0;
    double slope = 1.0;

    double operator()(double plasma) const;
};

struct PhantomConfig {
    int nx = 32, ny = 32, nz = 16;
    std::array<double, 3> brain_center{15.5, 15.5, 7.5};
    std::array<double, 3> brain_radii{14.0, 14.0, 7.0};
    double baseline = 0.12;
    double u_max = 0.88;
    double noise_sigma = 0.01;
    double structural_gray = 0.45;
    double bias_amplitude = 0.08;
    // Per-sample anatomy variation (drawn from the sample seed): region
    // centers shift by up to center_jitter voxels per axis and radii scale
    // by 1 +- radii_jitter. This is what makes the structural volume
    // informative about tau beyond the plasma value.
    double center_jitter = 1.0;
    double radii_jitter = 0.12;
    std::vector<RegionSpec> regions;

    static PhantomConfig defaults();
    static PhantomConfig load(const std::filesystem::path& path);
    static PhantomConfig from_json_string(const std::string& text);
    void save(const std::filesystem::path& path) const;
    std::string to_json_string() const;

    UptakeLaw law(const RegionSpec& r) const { return {baseline, u_max, r.onset, r.slope}; }

    // Region geometry/range checks plus the staging-order constraint on the
    // six canonical regions. Throws ConfigError.
    void validate() const;

    // The sample-specific anatomy: jittered regions, rejected and redrawn
    // (deterministically) if a draw would overlap.
    std::vector<RegionSpec> sample_regions(uint64_t seed) const;

    LabelAtlas make_atlas() const;  // nominal (unjittered) geometry
    static LabelAtlas atlas_for(const std::vector<RegionSpec>& regions, int nx, int ny, int nz);
};

struct PlasmaSampler {
    enum class Kind { uniform, constant };
    Kind kind = Kind::uniform;
    double lo = 0.0, hi = 12.0;  // uniform
    double value = 0.0;          // constant

    static PlasmaSampler uniform_range(double lo, double hi);
    static PlasmaSampler constant(double v);
};

// Deterministic in (cfg, plasma, seed). Tau uptake follows the per-region
// law inside labeled regions, baseline inside the brain mask, 0 outside,
// with additive Gaussian noise clamped back to [0,1]. The structural volume
// does not depend on plasma.
PairedSample generate_sample(const PhantomConfig& cfg, double plasma, uint64_t seed);

struct DatasetOptions {
    double split_fraction = 0.8;  // leading fraction tagged train
    PlasmaSampler plasma;
    bool force = false;  // overwrite an existing manifest
};

// Writes n pet/mri pairs, one shared atlas, and manifest.json into out_dir.
// Returns the manifest path. Byte-identical outputs for equal inputs.
std::filesystem::path generate_dataset(const PhantomConfig& cfg, size_t n, uint64_t seed,
                                       const std::filesystem::path& out_dir,
                                       const DatasetOptions& opts = {});

}  // namespace taugen
