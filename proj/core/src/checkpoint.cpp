#include "taugen/nn/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "taugen/errors.hpp"

namespace taugen::nn {

namespace {

constexpr char kMagic[4] = {'T', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void append_f32(std::vector<char>& blob, const Tensor& t) {
    const size_t at = blob.size();
    blob.resize(at + t.v.size() * 4);
    float* out = reinterpret_cast<float*>(blob.data() + at);
    for (size_t i = 0; i < t.v.size(); ++i) out[i] = float(t.v[i]);
}

Tensor read_f32(const std::vector<char>& blob, uint64_t offset, std::vector<int> shape) {
    Tensor t(shape, 0.0);
    const size_t bytes = t.v.size() * 4;
    if (offset + bytes > blob.size()) throw SizeError("checkpoint blob truncated");
    const float* src = reinterpret_cast<const float*>(blob.data() + offset);
    for (size_t i = 0; i < t.v.size(); ++i) {
        if (!std::isfinite(src[i])) throw DataError("checkpoint tensor has non-finite value");
        t.v[i] = double(src[i]);
    }
    return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& ps,
                     const std::string& meta_json) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_json);
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError("checkpoint meta is not valid JSON: " + std::string(e.what()));
    }

    std::vector<char> blob;
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, e] : ps.params) {  // std::map: name-sorted, deterministic
        nlohmann::json rec;
        rec["shape"] = e.value.shape;
        rec["offset"] = blob.size();
        append_f32(blob, e.value);
        rec["m_offset"] = blob.size();
        append_f32(blob, e.m);
        rec["v_offset"] = blob.size();
        append_f32(blob, e.v);
        tensors[name] = std::move(rec);
    }

    const nlohmann::json index = {
        {"meta", meta}, {"step", ps.step_count}, {"tensors", tensors}};
    const std::string index_str = index.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + path.string());
    os.write(kMagic, 4);
    os.write(reinterpret_cast<const char*>(&kVersion), 4);
    const uint64_t jlen = index_str.size();
    os.write(reinterpret_cast<const char*>(&jlen), 8);
    os.write(index_str.data(), std::streamsize(index_str.size()));
    os.write(blob.data(), std::streamsize(blob.size()));
    if (!os) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());

    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a checkpoint file: " + path.string());
    uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    uint64_t jlen = 0;
    is.read(reinterpret_cast<char*>(&jlen), 8);
    if (!is || jlen > (uint64_t(1) << 30)) throw FormatError("bad checkpoint index length");

    std::string index_str(jlen, '\0');
    is.read(index_str.data(), std::streamsize(jlen));
    if (!is) throw SizeError("checkpoint index truncated: " + path.string());

    std::vector<char> blob((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());

    nlohmann::json index;
    try {
        index = nlohmann::json::parse(index_str);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint index: " + std::string(e.what()));
    }

    Checkpoint ck;
    ck.store.step_count = index.at("step").get<int64_t>();
    ck.meta_json = index.at("meta").dump();
    for (const auto& [name, rec] : index.at("tensors").items()) {
        const auto shape = rec.at("shape").get<std::vector<int>>();
        ParamStore::Entry e;
        e.value = read_f32(blob, rec.at("offset").get<uint64_t>(), shape);
        e.m = read_f32(blob, rec.at("m_offset").get<uint64_t>(), shape);
        e.v = read_f32(blob, rec.at("v_offset").get<uint64_t>(), shape);
        ck.store.params.emplace(name, std::move(e));
    }
    return ck;
}

}  // namespace taugen::nn
