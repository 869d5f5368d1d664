#pragma once

#include "taugen/nn/graph.hpp"

namespace taugen::nn {

// Elementwise / reductions -------------------------------------------------

Var add(Var a, Var b);              // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);              // Hadamard
Var scale(Var a, double s);
Var silu(Var a);                    // x * sigmoid(x)
Var sum(Var a);                     // scalar
Var mean(Var a);                    // scalar
Var sumsq(Var a);                   // scalar sum of squares
Var mse(Var a, Var b);              // scalar mean squared difference

// Shape plumbing -----------------------------------------------------------

Var reshape(Var a, std::vector<int> shape);
Var concat_channels(Var a, Var b);           // (Ca,D,H,W)+(Cb,D,H,W) -> (Ca+Cb,D,H,W)
Var slice_channels(Var a, int c0, int c1);   // [c0, c1)
Var spatial_tokens(Var a);                   // (C,D,H,W) -> (N,C), N = D*H*W
Var tokens_to_spatial(Var a, int d, int h, int w);  // inverse of spatial_tokens

// Per-channel bias over a (C,D,H,W) map; b has shape (C).
Var add_channel_bias(Var a, Var b);

// Dense algebra ------------------------------------------------------------

Var matmul(Var a, Var b);        // (N,K) x (K,M) -> (N,M)
Var transpose(Var a);            // (N,M) -> (M,N)
Var linear(Var x, Var w, Var b); // x:(N,in) w:(out,in) b:(out) -> (N,out)

// Row-wise exp-normalize with max subtraction; rows sum to 1.
Var softmax_rows(Var a);         // (N,M) -> (N,M)

// Spatial ops on (C,D,H,W) ------------------------------------------------

// Cross-correlation with odd kernel k; w:(Cout,Cin,k,k,k), b:(Cout).
// Output dim: (D + 2*padding - k) / stride + 1 per axis.
Var conv3d(Var x, Var w, Var b, int stride = 1, int padding = 1);

// Group normalization with affine (gamma, beta per channel).
Var group_norm(Var x, Var gamma, Var beta, int groups, double eps = 1e-5);

Var upsample_nearest2(Var x);    // (C,D,H,W) -> (C,2D,2H,2W)
Var downsample_nearest2(Var x);  // even dims required; keeps voxel (2z,2y,2x)

// Separable trilinear 2x upsampling (half-voxel aligned, edges clamped).
Var upsample_trilinear2(Var x);  // (C,D,H,W) -> (C,2D,2H,2W)

// Sub-voxel rearrangement: channel group (a,b,d) of input channel block c
// becomes output voxel offset (a,b,d) of channel c.
Var voxel_shuffle2(Var x);  // (8C,D,H,W) -> (C,2D,2H,2W)

}  // namespace taugen::nn
