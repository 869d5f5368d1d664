#include "taugen/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include <json.hpp>

#include "taugen/errors.hpp"
#include "taugen/rng.hpp"

namespace taugen {

namespace {

inline double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

inline bool inside_ellipsoid(double x, double y, double z, const std::array<double, 3>& c,
                             const std::array<double, 3>& r) {
    const double dx = (x - c[0]) / r[0];
    const double dy = (y - c[1]) / r[1];
    const double dz = (z - c[2]) / r[2];
    return dx * dx + dy * dy + dz * dz <= 1.0;
}

// Tau staging order: earliest-rising region first.
const std::array<const char*, 6> kStagingOrder = {
    "Entorhinal", "Hippocampus", "Parahippocampal",
    "Fusiform",   "Inferior Temporal", "Posterior Cingulate"};

}  // namespace

double UptakeLaw::operator()(double plasma) const {
    return baseline + (u_max - baseline) * sigmoid(slope * (plasma - onset));
}

PhantomConfig PhantomConfig::defaults() {
    PhantomConfig cfg;
    auto region = [](const char* name, uint32_t label, std::array<double, 3> center,
                     double onset, double intensity) {
        RegionSpec r;
        r.name = name;
        r.label = label;
        r.center = center;
        r.radii = {4.3, 4.3, 2.8};
        r.onset = onset;
        r.slope = 1.1;
        r.structural_intensity = intensity;
        return r;
    };
    cfg.regions = {
        region("Parahippocampal", 1, {9.0, 22.0, 5.0}, 5.0, 0.62),
        region("Fusiform", 2, {22.0, 22.0, 5.0}, 6.5, 0.66),
        region("Inferior Temporal", 3, {9.0, 15.5, 11.0}, 8.0, 0.70),
        region("Hippocampus", 4, {22.0, 9.0, 5.0}, 3.5, 0.74),
        region("Posterior Cingulate", 5, {22.0, 15.5, 11.0}, 9.5, 0.78),
        region("Entorhinal", 6, {9.0, 9.0, 5.0}, 2.0, 0.82),
    };
    return cfg;
}

void PhantomConfig::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw ConfigError("phantom dims must be positive");
    if (!(baseline >= 0.0 && baseline < u_max && u_max <= 1.0))
        throw ConfigError("phantom requires 0 <= baseline < u_max <= 1");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (center_jitter < 0.0 || radii_jitter < 0.0 || radii_jitter >= 1.0)
        throw ConfigError("jitter must satisfy center_jitter >= 0 and 0 <= radii_jitter < 1");
    if (regions.empty()) throw ConfigError("phantom needs at least one region");

    std::set<uint32_t> labels;
    std::map<std::string, const RegionSpec*> by_name;
    for (const auto& r : regions) {
        if (r.label == 0) throw ConfigError("region '" + r.name + "': label 0 is reserved for background");
        if (!labels.insert(r.label).second)
            throw ConfigError("duplicate region label " + std::to_string(r.label));
        for (double rad : r.radii)
            if (!(rad > 0.0)) throw ConfigError("region '" + r.name + "': radii must be positive");
        if (r.slope < 0.0) throw ConfigError("region '" + r.name + "': slope must be >= 0");
        by_name[r.name] = &r;
    }

    // Staging order applies whenever all six canonical regions are present.
    bool all_canonical = true;
    for (const char* name : kStagingOrder) all_canonical &= by_name.count(name) > 0;
    if (all_canonical) {
        for (size_t i = 0; i + 1 < kStagingOrder.size(); ++i) {
            const double a = by_name[kStagingOrder[i]]->onset;
            const double b = by_name[kStagingOrder[i + 1]]->onset;
            if (a > b)
                throw ConfigError(std::string("onset ordering violated: ") + kStagingOrder[i] +
                                  " must rise no later than " + kStagingOrder[i + 1]);
        }
    }

    // Regions must not overlap anywhere on the voxel grid.
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const RegionSpec* hit = nullptr;
                for (const auto& r : regions) {
                    if (!inside_ellipsoid(x, y, z, r.center, r.radii)) continue;
                    if (hit)
                        throw ConfigError("regions '" + hit->name + "' and '" + r.name +
                                          "' overlap at voxel (" + std::to_string(x) + "," +
                                          std::to_string(y) + "," + std::to_string(z) + ")");
                    hit = &r;
                }
            }
}

LabelAtlas PhantomConfig::atlas_for(const std::vector<RegionSpec>& regions, int nx, int ny,
                                    int nz) {
    LabelAtlas atlas;
    atlas.nx = nx;
    atlas.ny = ny;
    atlas.nz = nz;
    atlas.labels.assign(atlas.voxels(), 0);
    for (const auto& r : regions) atlas.region_table[r.label] = r.name;
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                for (const auto& r : regions)
                    if (inside_ellipsoid(x, y, z, r.center, r.radii)) {
                        atlas.labels[atlas.index(z, y, x)] = r.label;
                        break;
                    }
    return atlas;
}

LabelAtlas PhantomConfig::make_atlas() const {
    return atlas_for(regions, nx, ny, nz);
}

namespace {

bool regions_disjoint(const std::vector<RegionSpec>& regions, int nx, int ny, int nz) {
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                bool hit = false;
                for (const auto& r : regions) {
                    if (!inside_ellipsoid(x, y, z, r.center, r.radii)) continue;
                    if (hit) return false;
                    hit = true;
                }
            }
    return true;
}

}  // namespace

std::vector<RegionSpec> PhantomConfig::sample_regions(uint64_t seed) const {
    if (center_jitter == 0.0 && radii_jitter == 0.0) return regions;
    RngState rng = RngState(seed).substream("geom");
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<RegionSpec> out = regions;
        for (auto& r : out) {
            for (int a = 0; a < 3; ++a)
                r.center[a] += rng.uniform(-center_jitter, center_jitter);
            const double f = 1.0 + rng.uniform(-radii_jitter, radii_jitter);
            for (int a = 0; a < 3; ++a) r.radii[a] *= f;
        }
        if (regions_disjoint(out, nx, ny, nz)) return out;
    }
    // Overlap after many draws means the nominal layout leaves no slack.
    throw ConfigError("geometry jitter keeps producing overlapping regions; "
                      "reduce center_jitter/radii_jitter or spread the regions");
}

PairedSample generate_sample(const PhantomConfig& cfg, double plasma, uint64_t seed) {
    if (!(plasma >= 0.0) || !std::isfinite(plasma))
        throw ParameterError("plasma must be finite and >= 0");
    cfg.validate();

    const std::vector<RegionSpec> anatomy = cfg.sample_regions(seed);

    PairedSample s;
    s.subject_id = "phantom-" + std::to_string(seed);
    s.plasma = plasma;
    s.atlas = PhantomConfig::atlas_for(anatomy, cfg.nx, cfg.ny, cfg.nz);

    std::map<uint32_t, double> uptake_by_label;
    for (const auto& r : anatomy) uptake_by_label[r.label] = cfg.law(r)(plasma);
    std::map<uint32_t, double> intensity_by_label;
    for (const auto& r : anatomy) intensity_by_label[r.label] = r.structural_intensity;

    RngState base(seed);
    RngState tau_rng = base.substream("tau");
    RngState bias_rng = base.substream("bias");

    // Low-order smooth bias field; coefficients depend only on the seed.
    std::array<double, 4> bias_coeff{};
    for (double& c : bias_coeff) c = bias_rng.uniform(-1.0, 1.0);

    Volume tau(cfg.nx, cfg.ny, cfg.nz, 1, ValueUnit::normalized01);
    Volume mri(cfg.nx, cfg.ny, cfg.nz, 1, ValueUnit::normalized01);

    for (int z = 0; z < cfg.nz; ++z)
        for (int y = 0; y < cfg.ny; ++y)
            for (int x = 0; x < cfg.nx; ++x) {
                const size_t i = tau.index(0, z, y, x);
                const uint32_t label = s.atlas.labels[s.atlas.index(z, y, x)];
                const bool in_brain =
                    inside_ellipsoid(x, y, z, cfg.brain_center, cfg.brain_radii);

                double t = 0.0;
                double m = 0.0;
                if (label != 0) {
                    t = uptake_by_label[label];
                    m = intensity_by_label[label];
                } else if (in_brain) {
                    t = cfg.baseline;
                    m = cfg.structural_gray;
                }
                if (in_brain || label != 0) {
                    const double X = double(x) / cfg.nx, Y = double(y) / cfg.ny,
                                 Z = double(z) / cfg.nz;
                    m += cfg.bias_amplitude *
                         (bias_coeff[0] * std::sin(std::numbers::pi * X) +
                          bias_coeff[1] * std::cos(std::numbers::pi * Y) +
                          bias_coeff[2] * std::sin(std::numbers::pi * Z) +
                          bias_coeff[3] * X * Y);
                }
                t += cfg.noise_sigma * tau_rng.normal();

                tau.data[i] = float(std::clamp(t, 0.0, 1.0));
                mri.data[i] = float(std::clamp(m, 0.0, 1.0));
            }

    s.pet = std::move(tau);
    s.mri = std::move(mri);
    return s;
}

PlasmaSampler PlasmaSampler::uniform_range(double lo, double hi) {
    PlasmaSampler p;
    p.kind = Kind::uniform;
    p.lo = lo;
    p.hi = hi;
    return p;
}

PlasmaSampler PlasmaSampler::constant(double v) {
    PlasmaSampler p;
    p.kind = Kind::constant;
    p.value = v;
    return p;
}

std::filesystem::path generate_dataset(const PhantomConfig& cfg, size_t n, uint64_t seed,
                                       const std::filesystem::path& out_dir,
                                       const DatasetOptions& opts) {
    if (n < 1) throw ParameterError("dataset size must be >= 1");
    if (!(opts.split_fraction >= 0.0 && opts.split_fraction <= 1.0))
        throw ParameterError("split_fraction must be in [0,1]");
    cfg.validate();

    const auto manifest_path = out_dir / "manifest.json";
    if (std::filesystem::exists(manifest_path) && !opts.force)
        throw IoError("output already contains " + manifest_path.string() +
                      " (use force to overwrite)");
    std::filesystem::create_directories(out_dir);

    const size_t n_train = size_t(std::llround(double(n) * opts.split_fraction));

    DatasetManifest m;
    m.dir = out_dir;
    for (size_t i = 0; i < n; ++i) {
        const uint64_t sample_seed = mix64(seed, i);
        double plasma = 0.0;
        switch (opts.plasma.kind) {
            case PlasmaSampler::Kind::uniform: {
                RngState r(sample_seed);
                plasma = r.substream("plasma").uniform(opts.plasma.lo, opts.plasma.hi);
                break;
            }
            case PlasmaSampler::Kind::constant:
                plasma = opts.plasma.value;
                break;
        }

        PairedSample s = generate_sample(cfg, plasma, sample_seed);

        char id[16];
        std::snprintf(id, sizeof(id), "s%04zu", i);
        ManifestEntry e;
        e.subject_id = id;
        e.pet = std::string(id) + "_pet.tgv";
        e.mri = std::string(id) + "_mri.tgv";
        e.atlas = std::string(id) + "_atlas.tgv";  // per-sample anatomy
        e.plasma = plasma;
        e.split = i < n_train ? Split::train : Split::test;

        write_volume(s.pet, out_dir / e.pet);
        write_volume(s.mri, out_dir / e.mri);
        write_atlas(s.atlas, out_dir / e.atlas);
        m.entries.push_back(std::move(e));
    }

    write_manifest(m, manifest_path);
    return manifest_path;
}

PhantomConfig PhantomConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open phantom config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

PhantomConfig PhantomConfig::from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed phantom config: ") + e.what());
    }

    PhantomConfig cfg = PhantomConfig::defaults();
    try {
        if (j.contains("dims")) {
            cfg.nx = j["dims"].at(0).get<int>();
            cfg.ny = j["dims"].at(1).get<int>();
            cfg.nz = j["dims"].at(2).get<int>();
        }
        if (j.contains("brain")) {
            const auto& b = j["brain"];
            for (int i = 0; i < 3; ++i) {
                cfg.brain_center[i] = b.at("center").at(i).get<double>();
                cfg.brain_radii[i] = b.at("radii").at(i).get<double>();
            }
        }
        cfg.baseline = j.value("baseline", cfg.baseline);
        cfg.u_max = j.value("u_max", cfg.u_max);
        cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
        cfg.structural_gray = j.value("structural_gray", cfg.structural_gray);
        cfg.bias_amplitude = j.value("bias_amplitude", cfg.bias_amplitude);
        cfg.center_jitter = j.value("center_jitter", cfg.center_jitter);
        cfg.radii_jitter = j.value("radii_jitter", cfg.radii_jitter);
        if (j.contains("regions")) {
            cfg.regions.clear();
            for (const auto& rj : j["regions"]) {
                RegionSpec r;
                r.name = rj.at("name").get<std::string>();
                r.label = rj.at("label").get<uint32_t>();
                for (int i = 0; i < 3; ++i) {
                    r.center[i] = rj.at("center").at(i).get<double>();
                    r.radii[i] = rj.at("radii").at(i).get<double>();
                }
                r.onset = rj.at("onset").get<double>();
                r.slope = rj.at("slope").get<double>();
                r.structural_intensity = rj.value("structural_intensity", 0.5);
                cfg.regions.push_back(std::move(r));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("phantom config field error: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

void PhantomConfig::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write phantom config: " + path.string());
    os << to_json_string() << "\n";
}

std::string PhantomConfig::to_json_string() const {
    nlohmann::json regions_json = nlohmann::json::array();
    for (const auto& r : regions) {
        regions_json.push_back({{"name", r.name},
                                {"label", r.label},
                                {"center", r.center},
                                {"radii", r.radii},
                                {"onset", r.onset},
                                {"slope", r.slope},
                                {"structural_intensity", r.structural_intensity}});
    }
    const nlohmann::json j = {{"dims", {nx, ny, nz}},
                              {"brain", {{"center", brain_center}, {"radii", brain_radii}}},
                              {"baseline", baseline},
                              {"u_max", u_max},
                              {"noise_sigma", noise_sigma},
                              {"structural_gray", structural_gray},
                              {"bias_amplitude", bias_amplitude},
                              {"center_jitter", center_jitter},
                              {"radii_jitter", radii_jitter},
                              {"regions", regions_json}};
    return j.dump(2);
}

}  // namespace taugen
