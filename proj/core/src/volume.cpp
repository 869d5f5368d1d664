#include "taugen/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "taugen/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "TGV1 I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace taugen {

namespace {

constexpr char kMagic[4] = {'T', 'G', 'V', '1'};
constexpr uint64_t kMaxElements = uint64_t(1) << 31;

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

Volume::Volume(int nx_, int ny_, int nz_, int channels_, ValueUnit unit)
    : nx(nx_), ny(ny_), nz(nz_), channels(channels_), value_unit(unit) {
    if (nx <= 0 || ny <= 0 || nz <= 0 || channels <= 0)
        throw ParameterError("Volume dims and channels must be positive");
    data.assign(size(), 0.0f);
}

void Volume::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0 || channels <= 0)
        throw DataError("Volume dims and channels must be positive");
    if (data.size() != size())
        throw DataError("Volume data length " + std::to_string(data.size()) +
                        " does not match dims (expected " + std::to_string(size()) + ")");
    const bool norm = value_unit == ValueUnit::normalized01;
    for (float f : data) {
        if (!std::isfinite(f)) throw DataError("Volume contains a non-finite value");
        if (norm && (f < 0.0f || f > 1.0f))
            throw DataError("normalized01 volume has a value outside [0,1]");
    }
}

bool Volume::operator==(const Volume& o) const {
    if (nx != o.nx || ny != o.ny || nz != o.nz || channels != o.channels) return false;
    if (data.size() != o.data.size()) return false;
    return data.empty() ||
           std::memcmp(data.data(), o.data.data(), data.size() * sizeof(float)) == 0;
}

Volume read_volume(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open volume file: " + path.string());

    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a TGV1 file: " + path.string());

    const uint32_t nx = read_u32(is), ny = read_u32(is), nz = read_u32(is);
    const uint32_t channels = read_u32(is);
    if (!is) throw SizeError("truncated TGV1 header: " + path.string());
    if (nx == 0 || ny == 0 || nz == 0 || channels == 0)
        throw FormatError("TGV1 header has zero dimension: " + path.string());

    const uint64_t count = uint64_t(channels) * nx * ny * nz;
    if (count > kMaxElements)
        throw FormatError("TGV1 header claims an implausible size: " + path.string());

    Volume v;
    v.nx = int(nx);
    v.ny = int(ny);
    v.nz = int(nz);
    v.channels = int(channels);
    v.data.resize(count);
    is.read(reinterpret_cast<char*>(v.data.data()),
            std::streamsize(count * sizeof(float)));
    if (size_t(is.gcount()) != count * sizeof(float))
        throw SizeError("TGV1 payload truncated (" + std::to_string(is.gcount()) +
                        " of " + std::to_string(count * sizeof(float)) + " bytes): " +
                        path.string());

    for (float f : v.data)
        if (!std::isfinite(f))
            throw DataError("TGV1 payload contains a non-finite value: " + path.string());
    return v;
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
    v.validate();  // nothing is written for an invalid volume
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open volume file for writing: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, uint32_t(v.nx));
    write_u32(os, uint32_t(v.ny));
    write_u32(os, uint32_t(v.nz));
    write_u32(os, uint32_t(v.channels));
    os.write(reinterpret_cast<const char*>(v.data.data()),
             std::streamsize(v.data.size() * sizeof(float)));
    if (!os) throw IoError("write failed: " + path.string());
}

Volume normalize01(const Volume& v, double lo, double hi) {
    if (!(hi > lo)) throw ParameterError("normalize01 requires hi > lo");
    v.validate();
    Volume out = v;
    const double inv = 1.0 / (hi - lo);
    for (float& f : out.data) {
        const double y = (double(f) - lo) * inv;
        f = float(std::clamp(y, 0.0, 1.0));
    }
    out.value_unit = ValueUnit::normalized01;
    return out;
}

void LabelAtlas::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw DataError("LabelAtlas dims must be positive");
    if (labels.size() != voxels()) throw DataError("LabelAtlas label count does not match dims");
    for (uint32_t l : labels) {
        if (l != 0 && !region_table.count(l))
            throw ValidationError("atlas label " + std::to_string(l) +
                                  " missing from region table");
    }
}

std::filesystem::path atlas_region_table_path(const std::filesystem::path& atlas_path) {
    std::filesystem::path p = atlas_path;
    p.replace_extension(".regions.json");
    return p;
}

LabelAtlas read_atlas(const std::filesystem::path& tgv_path) {
    const Volume v = read_volume(tgv_path);
    if (v.channels != 1)
        throw FormatError("atlas must be single-channel: " + tgv_path.string());

    LabelAtlas atlas;
    atlas.nx = v.nx;
    atlas.ny = v.ny;
    atlas.nz = v.nz;
    atlas.labels.resize(v.data.size());
    for (size_t i = 0; i < v.data.size(); ++i) {
        const float f = v.data[i];
        if (f < 0.0f || f > 1e6f || f != std::floor(f))
            throw DataError("atlas voxel " + std::to_string(i) +
                            " is not a small non-negative integer: " + tgv_path.string());
        atlas.labels[i] = uint32_t(f);
    }

    const auto table_path = atlas_region_table_path(tgv_path);
    std::ifstream is(table_path);
    if (!is) throw IoError("cannot open atlas region table: " + table_path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed region table " + table_path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError("region table must be a JSON object of label -> name");
    for (const auto& [key, value] : j.items()) {
        size_t pos = 0;
        unsigned long label = 0;
        try {
            label = std::stoul(key, &pos);
        } catch (const std::exception&) {
            throw ValidationError("region table key is not an integer label: " + key);
        }
        if (pos != key.size()) throw ValidationError("region table key is not an integer label: " + key);
        if (!value.is_string()) throw ValidationError("region name for label " + key + " must be a string");
        atlas.region_table[uint32_t(label)] = value.get<std::string>();
    }

    atlas.validate();
    return atlas;
}

void write_atlas(const LabelAtlas& atlas, const std::filesystem::path& tgv_path) {
    atlas.validate();
    Volume v(atlas.nx, atlas.ny, atlas.nz, 1);
    for (size_t i = 0; i < atlas.labels.size(); ++i) v.data[i] = float(atlas.labels[i]);
    write_volume(v, tgv_path);

    nlohmann::json j = nlohmann::json::object();
    for (const auto& [label, name] : atlas.region_table) j[std::to_string(label)] = name;
    const auto table_path = atlas_region_table_path(tgv_path);
    std::ofstream os(table_path, std::ios::trunc);
    if (!os) throw IoError("cannot write atlas region table: " + table_path.string());
    os << j.dump(2) << "\n";
}

}  // namespace taugen
