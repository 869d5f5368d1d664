#pragma once

#include <filesystem>
#include <unistd.h>
#include <string>

#include "taugen/nn/tensor.hpp"

namespace taugen::testing {

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("taugen_" + tag + "_" + std::to_string(++counter) + "_" +
                std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

// Scoped precision mode.
struct WithPrecision {
    nn::Precision saved;
    explicit WithPrecision(nn::Precision p) : saved(nn::precision()) { nn::set_precision(p); }
    ~WithPrecision() { nn::set_precision(saved); }
};

}  // namespace taugen::testing
