#pragma once

#include <filesystem>
#include <string>

#include "taugen/nn/optim.hpp"

namespace taugen::nn {

// Single-file checkpoint: "TGCK" magic, u32 version, u64 JSON length, the
// JSON index {meta, step, tensors: {name: {shape, offset, m_offset,
// v_offset}}}, then one float32 LE blob holding values and Adam moments.
// Offsets are relative to the blob start. Byte-deterministic for equal
// stores and metadata.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& ps,
                     const std::string& meta_json = "{}");

struct Checkpoint {
    ParamStore store;
    std::string meta_json;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace taugen::nn
