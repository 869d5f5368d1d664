#include "taugen/manifest.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "taugen/errors.hpp"

namespace taugen {

std::string split_name(Split s) {
    return s == Split::train ? "train" : "test";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split tag: '" + s + "' (expected train|test)");
}

size_t DatasetManifest::count(Split s) const {
    size_t n = 0;
    for (const auto& e : entries) n += (e.split == s);
    return n;
}

std::vector<size_t> DatasetManifest::indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == s) out.push_back(i);
    return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path.string());

    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw ValidationError("manifest must be a JSON array of entries");

    DatasetManifest m;
    m.dir = path.parent_path();

    for (const auto& item : j) {
        if (!item.is_object()) throw ValidationError("manifest entry must be an object");
        ManifestEntry e;
        try {
            e.subject_id = item.at("subject_id").get<std::string>();
            e.pet = item.at("pet").get<std::string>();
            e.mri = item.at("mri").get<std::string>();
            e.atlas = item.at("atlas").get<std::string>();
            e.plasma = item.at("plasma").get<double>();
            e.split = parse_split(item.at("split").get<std::string>());
        } catch (const nlohmann::json::exception& ex) {
            throw ValidationError("manifest entry missing or mistyped field: " +
                                  std::string(ex.what()));
        }
        if (!std::isfinite(e.plasma) || e.plasma < 0.0)
            throw ValidationError("entry '" + e.subject_id + "': plasma must be finite and >= 0");
        m.entries.push_back(std::move(e));
    }

    // Validate every referenced file and the per-entry dims agreement.
    for (const auto& e : m.entries) {
        const Volume pet = read_volume(m.dir / e.pet);
        const Volume mri = read_volume(m.dir / e.mri);
        const LabelAtlas atlas = read_atlas(m.dir / e.atlas);
        if (!pet.same_dims(mri))
            throw ValidationError("entry '" + e.subject_id + "': pet dims do not match mri dims");
        if (pet.nx != atlas.nx || pet.ny != atlas.ny || pet.nz != atlas.nz)
            throw ValidationError("entry '" + e.subject_id + "': atlas dims do not match volume dims");
    }
    return m;
}

PairedSample load_sample(const DatasetManifest& m, size_t index) {
    if (index >= m.entries.size()) throw ParameterError("sample index out of range");
    const auto& e = m.entries[index];
    PairedSample s;
    s.subject_id = e.subject_id;
    s.pet = read_volume(m.dir / e.pet);
    s.mri = read_volume(m.dir / e.mri);
    s.atlas = read_atlas(m.dir / e.atlas);
    s.plasma = e.plasma;
    return s;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : m.entries) {
        j.push_back({{"subject_id", e.subject_id},
                     {"pet", e.pet.generic_string()},
                     {"mri", e.mri.generic_string()},
                     {"atlas", e.atlas.generic_string()},
                     {"plasma", e.plasma},
                     {"split", split_name(e.split)},
                     {"registered", true}});
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write manifest: " + path.string());
    os << j.dump(2) << "\n";
}

}  // namespace taugen
