#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace taugen::nn {

// Global numeric mode. f64 runs everything in doubles (used by the
// verification suites); f32 rounds op outputs through float and runs the
// matrix kernels in single precision.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

inline double round_mode(double x, bool f32) {
    return f32 ? double(float(x)) : x;
}

// Dense row-major tensor of doubles. Values are stored in double regardless
// of mode; f32 mode keeps every stored value exactly representable in float.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_, double fill = 0.0);
    static Tensor scalar(double x);
    static Tensor from(std::vector<int> shape_, std::vector<double> values);

    int64_t numel() const;
    int dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    double& operator[](int64_t i) { return v[size_t(i)]; }
    double operator[](int64_t i) const { return v[size_t(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace taugen::nn
