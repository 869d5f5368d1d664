#include "taugen/nn/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <utility>

#include "taugen/errors.hpp"

namespace taugen::nn {

namespace {

bool f32_mode() {
    return precision() == Precision::f32;
}

void round_buf(double* p, size_t n) {
    if (!f32_mode()) return;
    for (size_t i = 0; i < n; ++i) p[i] = double(float(p[i]));
}

void round_buf(Tensor& t) {
    round_buf(t.v.data(), t.v.size());
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    round_buf(value);
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

// parent.grad += scale * g, with mode rounding.
void add_into(Node& parent, const double* g, size_t n, double scale = 1.0) {
    if (!parent.requires_grad) return;
    Tensor& dst = parent.ensure_grad();
    const bool r = f32_mode();
    for (size_t i = 0; i < n; ++i) dst.v[i] = round_mode(dst.v[i] + scale * g[i], r);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw ShapeError(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
}

void check_rank4(const Var& a, const char* op) {
    if (a->value.rank() != 4)
        throw ShapeError(std::string(op) + ": expected a (C,D,H,W) tensor, got " +
                         a->value.shape_str());
}

// ---- GEMM kernels ---------------------------------------------------------
//
// All matrices are row-major double buffers. In f32 mode the product runs in
// single precision (operands are f32-representable by construction); results
// land in double buffers and are rounded by the caller's add path.

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRow = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRow = Eigen::Map<const RowMat<T>>;

enum class Trans { N, T };

// C (m x n) op= A' * B' where A' is A (or its transpose) etc.
// acc == false overwrites C, acc == true accumulates (in double).
void gemm(Trans ta, Trans tb, int m, int n, int k, const double* A, const double* B, double* C,
          bool acc) {
    auto run = [&](const auto& a, const auto& b) {
        using Prod = RowMat<double>;
        Prod prod;
        if (f32_mode()) {
            RowMat<float> af = a.template cast<float>();
            RowMat<float> bf = b.template cast<float>();
            RowMat<float> pf(m, n);
            pf.noalias() = af * bf;
            prod = pf.cast<double>();
        } else {
            prod.resize(m, n);
            prod.noalias() = a * b;
        }
        MapRow<double> cm(C, m, n);
        if (acc)
            cm += prod;
        else
            cm = prod;
    };

    if (ta == Trans::N && tb == Trans::N)
        run(CMapRow<double>(A, m, k), CMapRow<double>(B, k, n));
    else if (ta == Trans::N && tb == Trans::T)
        run(CMapRow<double>(A, m, k), CMapRow<double>(B, n, k).transpose());
    else if (ta == Trans::T && tb == Trans::N)
        run(CMapRow<double>(A, k, m).transpose(), CMapRow<double>(B, k, n));
    else
        run(CMapRow<double>(A, k, m).transpose(), CMapRow<double>(B, n, k).transpose());
}

}  // namespace

// ---- Elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor out(a->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->value.v[i] + b->value.v[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        add_into(*n.parents[0], n.grad.v.data(), n.grad.v.size());
        add_into(*n.parents[1], n.grad.v.data(), n.grad.v.size());
    });
}

Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->value.v[i] - b->value.v[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        add_into(*n.parents[0], n.grad.v.data(), n.grad.v.size());
        add_into(*n.parents[1], n.grad.v.data(), n.grad.v.size(), -1.0);
    });
}

Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->value.v[i] * b->value.v[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const bool r = f32_mode();
        if (pa.requires_grad) {
            Tensor& da = pa.ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i)
                da.v[i] = round_mode(da.v[i] + n.grad.v[i] * pb.value.v[i], r);
        }
        if (pb.requires_grad) {
            Tensor& db = pb.ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i)
                db.v[i] = round_mode(db.v[i] + n.grad.v[i] * pa.value.v[i], r);
        }
    });
}

Var scale(Var a, double s) {
    Tensor out(a->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->value.v[i] * s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        add_into(*n.parents[0], n.grad.v.data(), n.grad.v.size(), s);
    });
}

Var silu(Var a) {
    Tensor out(a->value.shape);
    for (size_t i = 0; i < out.v.size(); ++i) {
        const double x = a->value.v[i];
        out.v[i] = x / (1.0 + std::exp(-x));
    }
    return make_op(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        for (size_t i = 0; i < n.grad.v.size(); ++i) {
            const double x = p.value.v[i];
            const double s = 1.0 / (1.0 + std::exp(-x));
            d.v[i] = round_mode(d.v[i] + n.grad.v[i] * s * (1.0 + x * (1.0 - s)), r);
        }
    });
}

Var sum(Var a) {
    double acc = 0.0;
    for (double x : a->value.v) acc += x;
    return make_op(Tensor::scalar(acc), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        const double g = n.grad.v[0];
        for (double& x : d.v) x = round_mode(x + g, r);
    });
}

Var mean(Var a) {
    const double inv = 1.0 / double(a->value.numel());
    double acc = 0.0;
    for (double x : a->value.v) acc += x;
    return make_op(Tensor::scalar(acc * inv), {a}, [inv](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        const double g = n.grad.v[0] * inv;
        for (double& x : d.v) x = round_mode(x + g, r);
    });
}

Var sumsq(Var a) {
    double acc = 0.0;
    for (double x : a->value.v) acc += x * x;
    return make_op(Tensor::scalar(acc), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        const double g = n.grad.v[0];
        for (size_t i = 0; i < d.v.size(); ++i)
            d.v[i] = round_mode(d.v[i] + 2.0 * g * p.value.v[i], r);
    });
}

Var mse(Var a, Var b) {
    check_same_shape(a, b, "mse");
    const double inv = 1.0 / double(a->value.numel());
    double acc = 0.0;
    for (size_t i = 0; i < a->value.v.size(); ++i) {
        const double d = a->value.v[i] - b->value.v[i];
        acc += d * d;
    }
    return make_op(Tensor::scalar(acc * inv), {a, b}, [inv](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const bool r = f32_mode();
        const double g = 2.0 * n.grad.v[0] * inv;
        if (pa.requires_grad) {
            Tensor& da = pa.ensure_grad();
            for (size_t i = 0; i < da.v.size(); ++i)
                da.v[i] = round_mode(da.v[i] + g * (pa.value.v[i] - pb.value.v[i]), r);
        }
        if (pb.requires_grad) {
            Tensor& db = pb.ensure_grad();
            for (size_t i = 0; i < db.v.size(); ++i)
                db.v[i] = round_mode(db.v[i] - g * (pa.value.v[i] - pb.value.v[i]), r);
        }
    });
}

// ---- Shape plumbing --------------------------------------------------------

Var reshape(Var a, std::vector<int> shape) {
    if (shape_numel(shape) != a->value.numel())
        throw ShapeError("reshape: element count mismatch " + a->value.shape_str() + " -> " +
                         nn::shape_str(shape));
    Tensor out;
    out.shape = std::move(shape);
    out.v = a->value.v;
    return make_op(std::move(out), {a}, [](Node& n) {
        add_into(*n.parents[0], n.grad.v.data(), n.grad.v.size());
    });
}

Var concat_channels(Var a, Var b) {
    check_rank4(a, "concat_channels");
    check_rank4(b, "concat_channels");
    const auto& sa = a->value.shape;
    const auto& sb = b->value.shape;
    if (sa[1] != sb[1] || sa[2] != sb[2] || sa[3] != sb[3])
        throw ShapeError("concat_channels: spatial dims differ " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
    Tensor out({sa[0] + sb[0], sa[1], sa[2], sa[3]});
    std::copy(a->value.v.begin(), a->value.v.end(), out.v.begin());
    std::copy(b->value.v.begin(), b->value.v.end(), out.v.begin() + a->value.v.size());
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const size_t na = n.parents[0]->value.v.size();
        add_into(*n.parents[0], n.grad.v.data(), na);
        add_into(*n.parents[1], n.grad.v.data() + na, n.parents[1]->value.v.size());
    });
}

Var slice_channels(Var a, int c0, int c1) {
    check_rank4(a, "slice_channels");
    const auto& s = a->value.shape;
    if (c0 < 0 || c1 > s[0] || c0 >= c1)
        throw ShapeError("slice_channels: bad range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") for " + a->value.shape_str());
    const size_t spatial = size_t(s[1]) * s[2] * s[3];
    Tensor out({c1 - c0, s[1], s[2], s[3]});
    std::copy(a->value.v.begin() + c0 * spatial, a->value.v.begin() + c1 * spatial,
              out.v.begin());
    return make_op(std::move(out), {a}, [c0, spatial](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        double* dst = d.v.data() + c0 * spatial;
        for (size_t i = 0; i < n.grad.v.size(); ++i)
            dst[i] = round_mode(dst[i] + n.grad.v[i], r);
    });
}

Var spatial_tokens(Var a) {
    check_rank4(a, "spatial_tokens");
    const auto& s = a->value.shape;
    const int C = s[0];
    const int64_t N = int64_t(s[1]) * s[2] * s[3];
    Tensor out({int(N), C});
    for (int c = 0; c < C; ++c)
        for (int64_t n = 0; n < N; ++n) out.v[n * C + c] = a->value.v[c * N + n];
    return make_op(std::move(out), {a}, [C, N](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        for (int c = 0; c < C; ++c)
            for (int64_t i = 0; i < N; ++i)
                d.v[c * N + i] = round_mode(d.v[c * N + i] + n.grad.v[i * C + c], r);
    });
}

Var tokens_to_spatial(Var a, int d, int h, int w) {
    if (a->value.rank() != 2)
        throw ShapeError("tokens_to_spatial: expected (N,C), got " + a->value.shape_str());
    const int64_t N = a->value.shape[0];
    const int C = a->value.shape[1];
    if (N != int64_t(d) * h * w)
        throw ShapeError("tokens_to_spatial: token count does not match spatial dims");
    Tensor out({C, d, h, w});
    for (int c = 0; c < C; ++c)
        for (int64_t n = 0; n < N; ++n) out.v[c * N + n] = a->value.v[n * C + c];
    return make_op(std::move(out), {a}, [C, N](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const bool r = f32_mode();
        for (int c = 0; c < C; ++c)
            for (int64_t i = 0; i < N; ++i)
                g.v[i * C + c] = round_mode(g.v[i * C + c] + n.grad.v[c * N + i], r);
    });
}

Var add_channel_bias(Var a, Var b) {
    check_rank4(a, "add_channel_bias");
    const auto& s = a->value.shape;
    if (b->value.rank() != 1 || b->value.shape[0] != s[0])
        throw ShapeError("add_channel_bias: bias shape " + b->value.shape_str() +
                         " does not match channels of " + a->value.shape_str());
    const size_t spatial = size_t(s[1]) * s[2] * s[3];
    Tensor out(a->value.shape);
    for (int c = 0; c < s[0]; ++c) {
        const double bc = b->value.v[c];
        for (size_t i = 0; i < spatial; ++i)
            out.v[c * spatial + i] = a->value.v[c * spatial + i] + bc;
    }
    return make_op(std::move(out), {a, b}, [spatial](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const int C = pa.value.shape[0];
        if (pa.requires_grad) add_into(pa, n.grad.v.data(), n.grad.v.size());
        if (pb.requires_grad) {
            Tensor& db = pb.ensure_grad();
            const bool r = f32_mode();
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (size_t i = 0; i < spatial; ++i) acc += n.grad.v[c * spatial + i];
                db.v[c] = round_mode(db.v[c] + acc, r);
            }
        }
    });
}

// ---- Dense algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 ||
        a->value.shape[1] != b->value.shape[0])
        throw ShapeError("matmul: incompatible shapes " + a->value.shape_str() + " x " +
                         b->value.shape_str());
    const int N = a->value.shape[0], K = a->value.shape[1], M = b->value.shape[1];
    Tensor out({N, M});
    gemm(Trans::N, Trans::N, N, M, K, a->value.v.data(), b->value.v.data(), out.v.data(), false);
    return make_op(std::move(out), {a, b}, [N, K, M](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            Tensor& da = pa.ensure_grad();
            gemm(Trans::N, Trans::T, N, K, M, n.grad.v.data(), pb.value.v.data(), da.v.data(),
                 true);
            round_buf(da);
        }
        if (pb.requires_grad) {
            Tensor& db = pb.ensure_grad();
            gemm(Trans::T, Trans::N, K, M, N, pa.value.v.data(), n.grad.v.data(), db.v.data(),
                 true);
            round_buf(db);
        }
    });
}

Var transpose(Var a) {
    if (a->value.rank() != 2)
        throw ShapeError("transpose: expected a matrix, got " + a->value.shape_str());
    const int N = a->value.shape[0], M = a->value.shape[1];
    Tensor out({M, N});
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < M; ++j) out.v[size_t(j) * N + i] = a->value.v[size_t(i) * M + j];
    return make_op(std::move(out), {a}, [N, M](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < M; ++j)
                d.v[size_t(i) * M + j] =
                    round_mode(d.v[size_t(i) * M + j] + n.grad.v[size_t(j) * N + i], r);
    });
}

Var linear(Var x, Var w, Var b) {
    if (x->value.rank() != 2 || w->value.rank() != 2)
        throw ShapeError("linear: x and w must be matrices");
    const int N = x->value.shape[0], In = x->value.shape[1];
    const int Out = w->value.shape[0];
    if (w->value.shape[1] != In)
        throw ShapeError("linear: weight shape " + w->value.shape_str() +
                         " does not match input " + x->value.shape_str());
    if (b->value.rank() != 1 || b->value.shape[0] != Out)
        throw ShapeError("linear: bias shape " + b->value.shape_str() + " must be (" +
                         std::to_string(Out) + ")");

    Tensor out({N, Out});
    gemm(Trans::N, Trans::T, N, Out, In, x->value.v.data(), w->value.v.data(), out.v.data(),
         false);
    for (int i = 0; i < N; ++i)
        for (int o = 0; o < Out; ++o) out.v[size_t(i) * Out + o] += b->value.v[o];

    return make_op(std::move(out), {x, w, b}, [N, In, Out](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Node& pb = *n.parents[2];
        if (px.requires_grad) {
            Tensor& dx = px.ensure_grad();
            gemm(Trans::N, Trans::N, N, In, Out, n.grad.v.data(), pw.value.v.data(), dx.v.data(),
                 true);
            round_buf(dx);
        }
        if (pw.requires_grad) {
            Tensor& dw = pw.ensure_grad();
            gemm(Trans::T, Trans::N, Out, In, N, n.grad.v.data(), px.value.v.data(), dw.v.data(),
                 true);
            round_buf(dw);
        }
        if (pb.requires_grad) {
            Tensor& db = pb.ensure_grad();
            const bool r = f32_mode();
            for (int o = 0; o < Out; ++o) {
                double acc = 0.0;
                for (int i = 0; i < N; ++i) acc += n.grad.v[size_t(i) * Out + o];
                db.v[o] = round_mode(db.v[o] + acc, r);
            }
        }
    });
}

Var softmax_rows(Var a) {
    if (a->value.rank() != 2)
        throw ShapeError("softmax_rows: expected (N,M), got " + a->value.shape_str());
    const int N = a->value.shape[0], M = a->value.shape[1];
    Tensor out({N, M});
    for (int i = 0; i < N; ++i) {
        const double* row = a->value.v.data() + size_t(i) * M;
        double mx = row[0];
        for (int j = 1; j < M; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        double* orow = out.v.data() + size_t(i) * M;
        for (int j = 0; j < M; ++j) {
            orow[j] = std::exp(row[j] - mx);
            s += orow[j];
        }
        const double inv = 1.0 / s;
        for (int j = 0; j < M; ++j) orow[j] *= inv;
    }
    return make_op(std::move(out), {a}, [N, M](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        for (int i = 0; i < N; ++i) {
            const double* y = n.value.v.data() + size_t(i) * M;
            const double* g = n.grad.v.data() + size_t(i) * M;
            double dot = 0.0;
            for (int j = 0; j < M; ++j) dot += g[j] * y[j];
            double* di = d.v.data() + size_t(i) * M;
            for (int j = 0; j < M; ++j) di[j] = round_mode(di[j] + y[j] * (g[j] - dot), r);
        }
    });
}

// ---- conv3d -----------------------------------------------------------------

namespace {

struct ConvDims {
    int Cin, D, H, W;
    int Cout, k;
    int stride, pad;
    int Do, Ho, Wo;
    int64_t N;  // output voxels
    int K;      // Cin * k^3
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 4) throw ShapeError("conv3d: input must be (C,D,H,W), got " + x.shape_str());
    if (w.rank() != 5)
        throw ShapeError("conv3d: kernel must be (Cout,Cin,k,k,k), got " + w.shape_str());
    ConvDims d;
    d.Cin = x.shape[0];
    d.D = x.shape[1];
    d.H = x.shape[2];
    d.W = x.shape[3];
    d.Cout = w.shape[0];
    d.k = w.shape[2];
    if (w.shape[1] != d.Cin)
        throw ShapeError("conv3d: kernel Cin " + std::to_string(w.shape[1]) +
                         " does not match input channels " + std::to_string(d.Cin));
    if (w.shape[3] != d.k || w.shape[4] != d.k) throw ShapeError("conv3d: kernel must be cubic");
    if (d.k % 2 == 0) throw ShapeError("conv3d: kernel size must be odd");
    if (stride < 1 || pad < 0) throw ParameterError("conv3d: stride must be >= 1 and padding >= 0");
    d.stride = stride;
    d.pad = pad;
    d.Do = (d.D + 2 * pad - d.k) / stride + 1;
    d.Ho = (d.H + 2 * pad - d.k) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.k) / stride + 1;
    if (d.Do < 1 || d.Ho < 1 || d.Wo < 1)
        throw ShapeError("conv3d: output would be empty for input " + x.shape_str());
    d.N = int64_t(d.Do) * d.Ho * d.Wo;
    d.K = d.Cin * d.k * d.k * d.k;
    return d;
}

// Tiles are whole output x-rows so the inner loops never decode flat
// indices; the voxel target keeps the per-tile col/dcol buffers inside the
// last-level cache.
int64_t conv_tile_rows(const ConvDims& c) {
    const int64_t target = std::max<int64_t>(1, (1 << 21) / std::max(1, c.K));
    return std::max<int64_t>(1, target / std::max(1, c.Wo));
}

// Valid ox range for a kernel tap: 0 <= ox*stride - pad + kx < W.
inline void ox_range(int kx, int pad, int stride, int W, int Wo, int& lo, int& hi) {
    lo = kx >= pad ? 0 : (pad - kx + stride - 1) / stride;
    hi = std::min(Wo - 1, (W - 1 - kx + pad) / stride);
}

// Gather an im2col tile: rows = kernel taps, cols = output voxels of the
// output x-rows [r0, r1). r indexes (oz, oy) pairs.
template <typename T>
void im2col_tile(const double* x, const ConvDims& c, int64_t r0, int64_t r1, T* col) {
    const int64_t tile = (r1 - r0) * c.Wo;
    for (int ci = 0; ci < c.Cin; ++ci) {
        const double* xc = x + size_t(ci) * c.D * c.H * c.W;
        for (int kz = 0; kz < c.k; ++kz)
            for (int ky = 0; ky < c.k; ++ky)
                for (int kx = 0; kx < c.k; ++kx) {
                    const int row = ((ci * c.k + kz) * c.k + ky) * c.k + kx;
                    T* dst = col + int64_t(row) * tile;
                    int lo, hi;
                    ox_range(kx, c.pad, c.stride, c.W, c.Wo, lo, hi);
                    for (int64_t r = r0; r < r1; ++r, dst += c.Wo) {
                        const int oy = int(r % c.Ho);
                        const int oz = int(r / c.Ho);
                        const int iz = oz * c.stride - c.pad + kz;
                        const int iy = oy * c.stride - c.pad + ky;
                        if (iz < 0 || iz >= c.D || iy < 0 || iy >= c.H || lo > hi) {
                            std::fill(dst, dst + c.Wo, T(0));
                            continue;
                        }
                        const double* src = xc + (int64_t(iz) * c.H + iy) * c.W;
                        for (int ox = 0; ox < lo; ++ox) dst[ox] = T(0);
                        const int base = lo * c.stride - c.pad + kx;
                        if (c.stride == 1) {
                            const double* s = src + base;
                            for (int ox = lo; ox <= hi; ++ox) dst[ox] = T(s[ox - lo]);
                        } else {
                            for (int ox = lo; ox <= hi; ++ox)
                                dst[ox] = T(src[base + (ox - lo) * c.stride]);
                        }
                        for (int ox = hi + 1; ox < c.Wo; ++ox) dst[ox] = T(0);
                    }
                }
    }
}

// Scatter-add the tile gradient back onto the input grid.
template <typename T>
void col2im_tile(const T* dcol, const ConvDims& c, int64_t r0, int64_t r1, double* dx) {
    const int64_t tile = (r1 - r0) * c.Wo;
    for (int ci = 0; ci < c.Cin; ++ci) {
        double* xc = dx + size_t(ci) * c.D * c.H * c.W;
        for (int kz = 0; kz < c.k; ++kz)
            for (int ky = 0; ky < c.k; ++ky)
                for (int kx = 0; kx < c.k; ++kx) {
                    const int row = ((ci * c.k + kz) * c.k + ky) * c.k + kx;
                    const T* src = dcol + int64_t(row) * tile;
                    int lo, hi;
                    ox_range(kx, c.pad, c.stride, c.W, c.Wo, lo, hi);
                    for (int64_t r = r0; r < r1; ++r, src += c.Wo) {
                        const int oy = int(r % c.Ho);
                        const int oz = int(r / c.Ho);
                        const int iz = oz * c.stride - c.pad + kz;
                        const int iy = oy * c.stride - c.pad + ky;
                        if (iz < 0 || iz >= c.D || iy < 0 || iy >= c.H || lo > hi) continue;
                        double* out = xc + (int64_t(iz) * c.H + iy) * c.W;
                        const int base = lo * c.stride - c.pad + kx;
                        if (c.stride == 1) {
                            double* o = out + base;
                            for (int ox = lo; ox <= hi; ++ox) o[ox - lo] += double(src[ox]);
                        } else {
                            for (int ox = lo; ox <= hi; ++ox)
                                out[base + (ox - lo) * c.stride] += double(src[ox]);
                        }
                    }
                }
    }
}

template <typename T>
void conv3d_forward(const double* x, const double* w, const double* b, const ConvDims& c,
                    double* out) {
    const int64_t rows = int64_t(c.Do) * c.Ho;
    const int64_t tile_rows = conv_tile_rows(c);
    std::vector<T> col;
    std::vector<T> wT(size_t(c.Cout) * c.K);
    for (size_t i = 0; i < wT.size(); ++i) wT[i] = T(w[i]);
    std::vector<T> prod;
    for (int64_t r0 = 0; r0 < rows; r0 += tile_rows) {
        const int64_t r1 = std::min(rows, r0 + tile_rows);
        const int64_t tile = (r1 - r0) * c.Wo;
        col.resize(size_t(c.K) * tile);
        prod.resize(size_t(c.Cout) * tile);
        im2col_tile<T>(x, c, r0, r1, col.data());
        MapRow<T>(prod.data(), c.Cout, tile).noalias() =
            CMapRow<T>(wT.data(), c.Cout, c.K) * CMapRow<T>(col.data(), c.K, tile);
        for (int co = 0; co < c.Cout; ++co) {
            const double bias = b[co];
            double* dst = out + size_t(co) * c.N + r0 * c.Wo;
            const T* src = prod.data() + size_t(co) * tile;
            for (int64_t j = 0; j < tile; ++j) dst[j] = double(src[j]) + bias;
        }
    }
}

// dx as a transposed convolution routed through the forward kernel: stride-1
// convolution of the (dilated) output gradient with the channel-transposed,
// spatially flipped weights. Valid whenever pad <= k-1.
template <typename T>
void conv3d_backward_input(const double* w, const double* g, const ConvDims& c, double* dx) {
    std::vector<double> wflip(size_t(c.Cin) * c.Cout * c.k * c.k * c.k);
    const int k = c.k;
    for (int co = 0; co < c.Cout; ++co)
        for (int ci = 0; ci < c.Cin; ++ci)
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const size_t src =
                            ((((size_t(co) * c.Cin + ci) * k + kz) * k + ky) * k + kx);
                        const size_t dst = ((((size_t(ci) * c.Cout + co) * k + (k - 1 - kz)) * k +
                                            (k - 1 - ky)) * k +
                                           (k - 1 - kx));
                        wflip[dst] = w[src];
                    }

    // Zero-stuffed gradient for stride > 1, right-padded so the stride-1
    // convolution emits exactly D/H/W outputs (the tail remainder
    // (D + 2p - k) mod stride needs extra zeros, not truncation).
    const int pad_t = k - 1 - c.pad;
    const int Dd = (c.Do - 1) * c.stride + 1 + (c.D + 2 * c.pad - k) % c.stride;
    const int Hd = (c.Ho - 1) * c.stride + 1 + (c.H + 2 * c.pad - k) % c.stride;
    const int Wd = (c.Wo - 1) * c.stride + 1 + (c.W + 2 * c.pad - k) % c.stride;
    std::vector<double> dilated;
    const double* gsrc = g;
    if (c.stride > 1) {
        dilated.assign(size_t(c.Cout) * Dd * Hd * Wd, 0.0);
        for (int co = 0; co < c.Cout; ++co)
            for (int z = 0; z < c.Do; ++z)
                for (int y = 0; y < c.Ho; ++y) {
                    const double* src = g + ((size_t(co) * c.Do + z) * c.Ho + y) * c.Wo;
                    double* dst = dilated.data() +
                                  ((size_t(co) * Dd + z * c.stride) * Hd + y * c.stride) * Wd;
                    for (int x = 0; x < c.Wo; ++x) dst[size_t(x) * c.stride] = src[x];
                }
        gsrc = dilated.data();
    }

    ConvDims ct;
    ct.Cin = c.Cout;
    ct.D = Dd;
    ct.H = Hd;
    ct.W = Wd;
    ct.Cout = c.Cin;
    ct.k = k;
    ct.stride = 1;
    ct.pad = pad_t;
    ct.Do = Dd + 2 * pad_t - k + 1;
    ct.Ho = Hd + 2 * pad_t - k + 1;
    ct.Wo = Wd + 2 * pad_t - k + 1;
    ct.N = int64_t(ct.Do) * ct.Ho * ct.Wo;
    ct.K = ct.Cin * k * k * k;
    if (ct.Do != c.D || ct.Ho != c.H || ct.Wo != c.W)
        throw ShapeError("conv3d backward: transposed geometry mismatch");

    const std::vector<double> zero_bias(size_t(c.Cin), 0.0);
    std::vector<double> out(size_t(c.Cin) * ct.N);
    conv3d_forward<T>(gsrc, wflip.data(), zero_bias.data(), ct, out.data());
    for (size_t i = 0; i < out.size(); ++i) dx[i] += out[i];
}

template <typename T>
void conv3d_backward(const double* x, const double* w, const double* g, const ConvDims& c,
                     double* dx, double* dw, double* db) {
    const int64_t rows = int64_t(c.Do) * c.Ho;
    const int64_t tile_rows = conv_tile_rows(c);
    std::vector<T> col, gtile, dcolT;
    std::vector<T> wT;
    std::vector<double> dw_acc;
    const bool dx_fast = dx && c.pad <= c.k - 1;
    if (dx && !dx_fast) {
        wT.resize(size_t(c.Cout) * c.K);
        for (size_t i = 0; i < wT.size(); ++i) wT[i] = T(w[i]);
    }
    if (dw) dw_acc.assign(size_t(c.Cout) * c.K, 0.0);

    if (dx_fast) conv3d_backward_input<T>(w, g, c, dx);

    for (int64_t r0 = 0; r0 < rows && (dw || (dx && !dx_fast)); r0 += tile_rows) {
        const int64_t r1 = std::min(rows, r0 + tile_rows);
        const int64_t tile = (r1 - r0) * c.Wo;

        gtile.resize(size_t(c.Cout) * tile);
        for (int co = 0; co < c.Cout; ++co) {
            const double* src = g + size_t(co) * c.N + r0 * c.Wo;
            T* dst = gtile.data() + size_t(co) * tile;
            for (int64_t j = 0; j < tile; ++j) dst[j] = T(src[j]);
        }

        if (dw) {
            col.resize(size_t(c.K) * tile);
            im2col_tile<T>(x, c, r0, r1, col.data());
            RowMat<T> dwt(c.Cout, c.K);
            dwt.noalias() = CMapRow<T>(gtile.data(), c.Cout, tile) *
                            CMapRow<T>(col.data(), c.K, tile).transpose();
            for (size_t i = 0; i < dw_acc.size(); ++i) dw_acc[i] += double(dwt.data()[i]);
        }

        if (dx && !dx_fast) {
            dcolT.resize(size_t(c.K) * tile);
            MapRow<T>(dcolT.data(), c.K, tile).noalias() =
                CMapRow<T>(wT.data(), c.Cout, c.K).transpose() *
                CMapRow<T>(gtile.data(), c.Cout, tile);
            col2im_tile<T>(dcolT.data(), c, r0, r1, dx);
        }
    }

    if (dw)
        for (size_t i = 0; i < dw_acc.size(); ++i) dw[i] += dw_acc[i];
    if (db) {
        for (int co = 0; co < c.Cout; ++co) {
            double acc = 0.0;
            const double* src = g + size_t(co) * c.N;
            for (int64_t j = 0; j < c.N; ++j) acc += src[j];
            db[co] += acc;
        }
    }
}

}  // namespace

Var conv3d(Var x, Var w, Var b, int stride, int padding) {
    const ConvDims c = conv_dims(x->value, w->value, stride, padding);
    if (b->value.rank() != 1 || b->value.shape[0] != c.Cout)
        throw ShapeError("conv3d: bias must be (Cout)");

    Tensor out({c.Cout, c.Do, c.Ho, c.Wo});
    if (f32_mode())
        conv3d_forward<float>(x->value.v.data(), w->value.v.data(), b->value.v.data(), c,
                              out.v.data());
    else
        conv3d_forward<double>(x->value.v.data(), w->value.v.data(), b->value.v.data(), c,
                               out.v.data());

    return make_op(std::move(out), {x, w, b}, [c](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Node& pb = *n.parents[2];
        double* dx = nullptr;
        double* dw = nullptr;
        double* db = nullptr;
        // Backward accumulates in fresh zero buffers, then adds into the
        // parents' grads so repeated use of a parent stays correct.
        Tensor dx_buf, dw_buf, db_buf;
        if (px.requires_grad) {
            dx_buf = Tensor(px.value.shape, 0.0);
            dx = dx_buf.v.data();
        }
        if (pw.requires_grad) {
            dw_buf = Tensor(pw.value.shape, 0.0);
            dw = dw_buf.v.data();
        }
        if (pb.requires_grad) {
            db_buf = Tensor(pb.value.shape, 0.0);
            db = db_buf.v.data();
        }
        if (!dx && !dw && !db) return;
        if (f32_mode())
            conv3d_backward<float>(px.value.v.data(), pw.value.v.data(), n.grad.v.data(), c, dx,
                                   dw, db);
        else
            conv3d_backward<double>(px.value.v.data(), pw.value.v.data(), n.grad.v.data(), c, dx,
                                    dw, db);
        if (dx) add_into(px, dx_buf.v.data(), dx_buf.v.size());
        if (dw) add_into(pw, dw_buf.v.data(), dw_buf.v.size());
        if (db) add_into(pb, db_buf.v.data(), db_buf.v.size());
    });
}

// ---- group_norm ---------------------------------------------------------------

Var group_norm(Var x, Var gamma, Var beta, int groups, double eps) {
    check_rank4(x, "group_norm");
    const auto& s = x->value.shape;
    const int C = s[0];
    if (groups < 1 || C % groups != 0)
        throw ShapeError("group_norm: groups " + std::to_string(groups) +
                         " must divide channels " + std::to_string(C));
    if (gamma->value.rank() != 1 || gamma->value.shape[0] != C || beta->value.rank() != 1 ||
        beta->value.shape[0] != C)
        throw ShapeError("group_norm: gamma/beta must be (C)");

    const size_t spatial = size_t(s[1]) * s[2] * s[3];
    const int cg = C / groups;
    const size_t group_n = cg * spatial;

    std::vector<double> mu(groups), inv_std(groups);
    Tensor out(x->value.shape);
    for (int g = 0; g < groups; ++g) {
        const double* xg = x->value.v.data() + size_t(g) * group_n;
        double m = 0.0;
        for (size_t i = 0; i < group_n; ++i) m += xg[i];
        m /= double(group_n);
        double var = 0.0;
        for (size_t i = 0; i < group_n; ++i) {
            const double d = xg[i] - m;
            var += d * d;
        }
        var /= double(group_n);
        mu[g] = m;
        inv_std[g] = 1.0 / std::sqrt(var + eps);
    }
    for (int c = 0; c < C; ++c) {
        const int g = c / cg;
        const double gm = gamma->value.v[c], bt = beta->value.v[c];
        const double m = mu[g], is = inv_std[g];
        const double* xc = x->value.v.data() + size_t(c) * spatial;
        double* oc = out.v.data() + size_t(c) * spatial;
        for (size_t i = 0; i < spatial; ++i) oc[i] = gm * (xc[i] - m) * is + bt;
    }

    return make_op(std::move(out), {x, gamma, beta},
                   [groups, cg, spatial, group_n, mu, inv_std](Node& n) {
                       Node& px = *n.parents[0];
                       Node& pg = *n.parents[1];
                       Node& pb = *n.parents[2];
                       const int C = px.value.shape[0];
                       const bool r = f32_mode();

                       if (pg.requires_grad || pb.requires_grad) {
                           Tensor* dg = pg.requires_grad ? &pg.ensure_grad() : nullptr;
                           Tensor* db = pb.requires_grad ? &pb.ensure_grad() : nullptr;
                           for (int c = 0; c < C; ++c) {
                               const int g = c / cg;
                               const double* xc = px.value.v.data() + size_t(c) * spatial;
                               const double* gc = n.grad.v.data() + size_t(c) * spatial;
                               double sg = 0.0, sb = 0.0;
                               for (size_t i = 0; i < spatial; ++i) {
                                   sb += gc[i];
                                   sg += gc[i] * (xc[i] - mu[g]) * inv_std[g];
                               }
                               if (dg) dg->v[c] = round_mode(dg->v[c] + sg, r);
                               if (db) db->v[c] = round_mode(db->v[c] + sb, r);
                           }
                       }

                       if (px.requires_grad) {
                           Tensor& dx = px.ensure_grad();
                           const double* gamma_v = pg.value.v.data();
                           for (int g = 0; g < groups; ++g) {
                               const double m = mu[g], is = inv_std[g];
                               // dxhat = g * gamma_c; reduce its mean and its
                               // correlation with xhat over the group.
                               double m1 = 0.0, m2 = 0.0;
                               for (int cc = 0; cc < cg; ++cc) {
                                   const int c = g * cg + cc;
                                   const double gm = gamma_v[c];
                                   const double* gc = n.grad.v.data() + size_t(c) * spatial;
                                   const double* xc = px.value.v.data() + size_t(c) * spatial;
                                   for (size_t i = 0; i < spatial; ++i) {
                                       const double dxh = gc[i] * gm;
                                       m1 += dxh;
                                       m2 += dxh * (xc[i] - m) * is;
                                   }
                               }
                               m1 /= double(group_n);
                               m2 /= double(group_n);
                               double* dxg = dx.v.data() + size_t(g) * group_n;
                               for (int cc = 0; cc < cg; ++cc) {
                                   const int c = g * cg + cc;
                                   const double gm = gamma_v[c];
                                   const double* gc = n.grad.v.data() + size_t(c) * spatial;
                                   const double* xc = px.value.v.data() + size_t(c) * spatial;
                                   double* dxc = dxg + size_t(cc) * spatial;
                                   for (size_t i = 0; i < spatial; ++i) {
                                       const double xh = (xc[i] - m) * is;
                                       const double dxh = gc[i] * gm;
                                       dxc[i] = round_mode(
                                           dxc[i] + is * (dxh - m1 - xh * m2), r);
                                   }
                               }
                           }
                       }
                   });
}

// ---- resampling -----------------------------------------------------------------

Var upsample_nearest2(Var x) {
    check_rank4(x, "upsample_nearest2");
    const auto& s = x->value.shape;
    const int C = s[0], D = s[1], H = s[2], W = s[3];
    Tensor out({C, 2 * D, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int z = 0; z < 2 * D; ++z)
            for (int y = 0; y < 2 * H; ++y) {
                const double* src =
                    x->value.v.data() + ((size_t(c) * D + z / 2) * H + y / 2) * W;
                double* dst = out.v.data() + ((size_t(c) * 2 * D + z) * 2 * H + y) * 2 * W;
                for (int xx = 0; xx < 2 * W; ++xx) dst[xx] = src[xx / 2];
            }
    return make_op(std::move(out), {x}, [C, D, H, W](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        for (int c = 0; c < C; ++c)
            for (int z = 0; z < 2 * D; ++z)
                for (int y = 0; y < 2 * H; ++y) {
                    const double* g =
                        n.grad.v.data() + ((size_t(c) * 2 * D + z) * 2 * H + y) * 2 * W;
                    double* dst = d.v.data() + ((size_t(c) * D + z / 2) * H + y / 2) * W;
                    for (int xx = 0; xx < 2 * W; ++xx)
                        dst[xx / 2] = round_mode(dst[xx / 2] + g[xx], r);
                }
    });
}

namespace {

// Per-axis taps for 2x trilinear: output o samples input (o + 0.5)/2 - 0.5,
// clamped at the borders.
struct LinTap {
    int lo, hi;
    double w_hi;  // weight of hi; lo gets 1 - w_hi
};

std::vector<LinTap> linear_taps(int in_dim) {
    std::vector<LinTap> taps(size_t(in_dim) * 2);
    for (int o = 0; o < 2 * in_dim; ++o) {
        const double src = (o + 0.5) / 2.0 - 0.5;
        const int lo = int(std::floor(src));
        LinTap t;
        t.w_hi = src - lo;
        t.lo = std::clamp(lo, 0, in_dim - 1);
        t.hi = std::clamp(lo + 1, 0, in_dim - 1);
        taps[size_t(o)] = t;
    }
    return taps;
}

}  // namespace

Var upsample_trilinear2(Var x) {
    check_rank4(x, "upsample_trilinear2");
    const auto& s = x->value.shape;
    const int C = s[0], D = s[1], H = s[2], W = s[3];
    const auto tz = linear_taps(D), ty = linear_taps(H), tx = linear_taps(W);

    Tensor out({C, 2 * D, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c) {
        const double* in = x->value.v.data() + size_t(c) * D * H * W;
        double* dst = out.v.data() + size_t(c) * 8 * D * H * W;
        for (int z = 0; z < 2 * D; ++z)
            for (int y = 0; y < 2 * H; ++y) {
                const LinTap& az = tz[size_t(z)];
                const LinTap& ay = ty[size_t(y)];
                const double* p00 = in + (size_t(az.lo) * H + ay.lo) * W;
                const double* p01 = in + (size_t(az.lo) * H + ay.hi) * W;
                const double* p10 = in + (size_t(az.hi) * H + ay.lo) * W;
                const double* p11 = in + (size_t(az.hi) * H + ay.hi) * W;
                const double wz = az.w_hi, wy = ay.w_hi;
                const double w00 = (1 - wz) * (1 - wy), w01 = (1 - wz) * wy;
                const double w10 = wz * (1 - wy), w11 = wz * wy;
                double* row = dst + (size_t(z) * 2 * H + y) * 2 * W;
                for (int xx = 0; xx < 2 * W; ++xx) {
                    const LinTap& ax = tx[size_t(xx)];
                    const double plane_lo = w00 * p00[ax.lo] + w01 * p01[ax.lo] +
                                            w10 * p10[ax.lo] + w11 * p11[ax.lo];
                    const double plane_hi = w00 * p00[ax.hi] + w01 * p01[ax.hi] +
                                            w10 * p10[ax.hi] + w11 * p11[ax.hi];
                    row[xx] = plane_lo * (1 - ax.w_hi) + plane_hi * ax.w_hi;
                }
            }
    }
    return make_op(std::move(out), {x}, [C, D, H, W, tz, ty, tx](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        // Accumulate into a scratch in full precision, round once.
        Tensor acc(p.value.shape, 0.0);
        for (int c = 0; c < C; ++c) {
            double* din = acc.v.data() + size_t(c) * D * H * W;
            const double* g = n.grad.v.data() + size_t(c) * 8 * D * H * W;
            for (int z = 0; z < 2 * D; ++z)
                for (int y = 0; y < 2 * H; ++y) {
                    const LinTap& az = tz[size_t(z)];
                    const LinTap& ay = ty[size_t(y)];
                    double* p00 = din + (size_t(az.lo) * H + ay.lo) * W;
                    double* p01 = din + (size_t(az.lo) * H + ay.hi) * W;
                    double* p10 = din + (size_t(az.hi) * H + ay.lo) * W;
                    double* p11 = din + (size_t(az.hi) * H + ay.hi) * W;
                    const double wz = az.w_hi, wy = ay.w_hi;
                    const double w00 = (1 - wz) * (1 - wy), w01 = (1 - wz) * wy;
                    const double w10 = wz * (1 - wy), w11 = wz * wy;
                    const double* row = g + (size_t(z) * 2 * H + y) * 2 * W;
                    for (int xx = 0; xx < 2 * W; ++xx) {
                        const LinTap& ax = tx[size_t(xx)];
                        const double g_lo = row[xx] * (1 - ax.w_hi);
                        const double g_hi = row[xx] * ax.w_hi;
                        p00[ax.lo] += w00 * g_lo;
                        p01[ax.lo] += w01 * g_lo;
                        p10[ax.lo] += w10 * g_lo;
                        p11[ax.lo] += w11 * g_lo;
                        p00[ax.hi] += w00 * g_hi;
                        p01[ax.hi] += w01 * g_hi;
                        p10[ax.hi] += w10 * g_hi;
                        p11[ax.hi] += w11 * g_hi;
                    }
                }
        }
        add_into(p, acc.v.data(), acc.v.size());
    });
}

Var voxel_shuffle2(Var x) {
    check_rank4(x, "voxel_shuffle2");
    const auto& s = x->value.shape;
    if (s[0] % 8)
        throw ShapeError("voxel_shuffle2 needs channels divisible by 8, got " +
                         x->value.shape_str());
    const int C = s[0] / 8, D = s[1], H = s[2], W = s[3];
    Tensor out({C, 2 * D, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int d = 0; d < 2; ++d) {
                    const int cin = c * 8 + (a * 2 + b) * 2 + d;
                    const double* in = x->value.v.data() + size_t(cin) * D * H * W;
                    for (int z = 0; z < D; ++z)
                        for (int y = 0; y < H; ++y) {
                            const double* src = in + (size_t(z) * H + y) * W;
                            double* dst = out.v.data() +
                                          ((size_t(c) * 2 * D + 2 * z + a) * 2 * H + 2 * y + b) *
                                              2 * W +
                                          d;
                            for (int xx = 0; xx < W; ++xx) dst[2 * xx] = src[xx];
                        }
                }
    return make_op(std::move(out), {x}, [C, D, H, W](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const bool r = f32_mode();
        for (int c = 0; c < C; ++c)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    for (int d = 0; d < 2; ++d) {
                        const int cin = c * 8 + (a * 2 + b) * 2 + d;
                        double* dst = g.v.data() + size_t(cin) * D * H * W;
                        for (int z = 0; z < D; ++z)
                            for (int y = 0; y < H; ++y) {
                                const double* src =
                                    n.grad.v.data() +
                                    ((size_t(c) * 2 * D + 2 * z + a) * 2 * H + 2 * y + b) * 2 * W +
                                    d;
                                double* row = dst + (size_t(z) * H + y) * W;
                                for (int xx = 0; xx < W; ++xx)
                                    row[xx] = round_mode(row[xx] + src[2 * xx], r);
                            }
                    }
    });
}

Var downsample_nearest2(Var x) {
    check_rank4(x, "downsample_nearest2");
    const auto& s = x->value.shape;
    if (s[1] % 2 || s[2] % 2 || s[3] % 2)
        throw ShapeError("downsample_nearest2: dims must be even, got " + x->value.shape_str());
    const int C = s[0], D = s[1] / 2, H = s[2] / 2, W = s[3] / 2;
    Tensor out({C, D, H, W});
    for (int c = 0; c < C; ++c)
        for (int z = 0; z < D; ++z)
            for (int y = 0; y < H; ++y) {
                const double* src =
                    x->value.v.data() + ((size_t(c) * 2 * D + 2 * z) * 2 * H + 2 * y) * 2 * W;
                double* dst = out.v.data() + ((size_t(c) * D + z) * H + y) * W;
                for (int xx = 0; xx < W; ++xx) dst[xx] = src[2 * xx];
            }
    return make_op(std::move(out), {x}, [C, D, H, W](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        Tensor& d = p.ensure_grad();
        const bool r = f32_mode();
        for (int c = 0; c < C; ++c)
            for (int z = 0; z < D; ++z)
                for (int y = 0; y < H; ++y) {
                    const double* g = n.grad.v.data() + ((size_t(c) * D + z) * H + y) * W;
                    double* dst =
                        d.v.data() + ((size_t(c) * 2 * D + 2 * z) * 2 * H + 2 * y) * 2 * W;
                    for (int xx = 0; xx < W; ++xx)
                        dst[2 * xx] = round_mode(dst[2 * xx] + g[xx], r);
                }
    });
}

}  // namespace taugen::nn
