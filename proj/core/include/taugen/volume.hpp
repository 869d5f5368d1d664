#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace taugen {

enum class ValueUnit { raw, suvr, normalized01, latent };

// Dense 3D scalar field. Storage is channel-major, then z, then y, then x
// fastest — the same order as the TGV1 byte layout. `value_unit` is in-memory
// metadata and is not persisted in the file format.
struct Volume {
    int nx = 0, ny = 0, nz = 0;
    int channels = 1;
    ValueUnit value_unit = ValueUnit::raw;
    std::vector<float> data;

    Volume() = default;
    Volume(int nx_, int ny_, int nz_, int channels_ = 1, ValueUnit unit = ValueUnit::raw);

    size_t voxels() const { return static_cast<size_t>(nx) * ny * nz; }
    size_t size() const { return voxels() * channels; }

    size_t index(int c, int z, int y, int x) const {
        return ((static_cast<size_t>(c) * nz + z) * ny + y) * static_cast<size_t>(nx) + x;
    }
    float& at(int c, int z, int y, int x) { return data[index(c, z, y, x)]; }
    float at(int c, int z, int y, int x) const { return data[index(c, z, y, x)]; }

    bool same_dims(const Volume& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }

    // Throws DataError when the data length, finiteness, or the
    // normalized01 range invariant is violated.
    void validate() const;

    // Dims, channels and bit-level data equality; value_unit is not compared.
    bool operator==(const Volume& o) const;
};

// TGV1: "TGV1" magic, u32 LE nx, ny, nz, channels, then
// channels*nz*ny*nx float32 LE values, x fastest.
Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);

// clamp((x - lo) / (hi - lo), 0, 1) per value; requires hi > lo.
Volume normalize01(const Volume& v, double lo, double hi);

// Integer label field over the same grid as its paired volumes, plus the
// label -> region-name table loaded from the `.regions.json` sidecar.
struct LabelAtlas {
    int nx = 0, ny = 0, nz = 0;
    std::vector<uint32_t> labels;
    std::map<uint32_t, std::string> region_table;

    size_t voxels() const { return static_cast<size_t>(nx) * ny * nz; }
    size_t index(int z, int y, int x) const {
        return (static_cast<size_t>(z) * ny + y) * static_cast<size_t>(nx) + x;
    }
    uint32_t at(int z, int y, int x) const { return labels[index(z, y, x)]; }

    void validate() const;
};

// Sidecar path for an atlas file: extension replaced by ".regions.json".
std::filesystem::path atlas_region_table_path(const std::filesystem::path& atlas_path);

LabelAtlas read_atlas(const std::filesystem::path& tgv_path);
void write_atlas(const LabelAtlas& atlas, const std::filesystem::path& tgv_path);

}  // namespace taugen
