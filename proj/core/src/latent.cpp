#include "taugen/latent.hpp"

#include "taugen/errors.hpp"

namespace taugen {

LatentGrid::LatentGrid(int channels_, int nx_, int ny_, int nz_, double fill)
    : channels(channels_), nx(nx_), ny(ny_), nz(nz_) {
    if (channels <= 0 || nx <= 0 || ny <= 0 || nz <= 0)
        throw ShapeError("LatentGrid dims must be positive");
    v.assign(numel(), fill);
}

nn::Tensor LatentGrid::to_tensor() const {
    nn::Tensor t;
    t.shape = {channels, nz, ny, nx};
    t.v = v;
    return t;
}

LatentGrid LatentGrid::from_tensor(const nn::Tensor& t) {
    if (t.rank() != 4) throw ShapeError("latent tensor must be (C,D,H,W), got " + t.shape_str());
    LatentGrid g;
    g.channels = t.shape[0];
    g.nz = t.shape[1];
    g.ny = t.shape[2];
    g.nx = t.shape[3];
    g.v = t.v;
    return g;
}

}  // namespace taugen
