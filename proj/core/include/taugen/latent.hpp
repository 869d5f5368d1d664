#pragma once

#include <vector>

#include "taugen/nn/tensor.hpp"

namespace taugen {

// Compressed feature grid produced by the autoencoder; also the carrier for
// diffusion states z_t. Layout matches nn::Tensor (C, nz, ny, nx), x fastest.
struct LatentGrid {
    int channels = 0;
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> v;

    LatentGrid() = default;
    LatentGrid(int channels_, int nx_, int ny_, int nz_, double fill = 0.0);

    size_t numel() const { return size_t(channels) * nx * ny * nz; }
    bool same_shape(const LatentGrid& o) const {
        return channels == o.channels && nx == o.nx && ny == o.ny && nz == o.nz;
    }

    nn::Tensor to_tensor() const;  // (C, nz, ny, nx)
    static LatentGrid from_tensor(const nn::Tensor& t);
};

}  // namespace taugen
