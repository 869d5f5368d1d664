#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "taugen/volume.hpp"

namespace taugen {

enum class Split { train, test };

std::string split_name(Split s);
Split parse_split(const std::string& s);

// Path record for one subject; paths are resolved against the manifest dir.
struct ManifestEntry {
    std::string subject_id;
    std::filesystem::path pet;
    std::filesystem::path mri;
    std::filesystem::path atlas;
    double plasma = 0.0;
    Split split = Split::train;
};

struct DatasetManifest {
    std::filesystem::path dir;  // resolution base for entry paths
    std::vector<ManifestEntry> entries;

    size_t count(Split s) const;
    std::vector<size_t> indices(Split s) const;
};

// Fully materialized sample.
struct PairedSample {
    std::string subject_id;
    Volume pet;
    Volume mri;
    LabelAtlas atlas;
    double plasma = 0.0;
};

// Parses the JSON manifest and validates every entry: referenced files must
// exist and parse, pet/mri/atlas dims must agree, plasma must be >= 0.
DatasetManifest load_manifest(const std::filesystem::path& path);

PairedSample load_sample(const DatasetManifest& m, size_t index);

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

}  // namespace taugen
