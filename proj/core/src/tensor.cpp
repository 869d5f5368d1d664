#include "taugen/nn/tensor.hpp"

#include <sstream>

#include "taugen/errors.hpp"

namespace taugen::nn {

namespace {
Precision g_precision = Precision::f64;
}

Precision precision() {
    return g_precision;
}

void set_precision(Precision p) {
    g_precision = p;
}

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape_, double fill) : shape(std::move(shape_)) {
    v.assign(size_t(shape_numel(shape)), fill);
}

Tensor Tensor::scalar(double x) {
    Tensor t({1});
    t.v[0] = x;
    return t;
}

Tensor Tensor::from(std::vector<int> shape_, std::vector<double> values) {
    Tensor t;
    t.shape = std::move(shape_);
    if (int64_t(values.size()) != shape_numel(t.shape))
        throw ShapeError("value count does not match shape " + nn::shape_str(t.shape));
    t.v = std::move(values);
    return t;
}

int64_t Tensor::numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string Tensor::shape_str() const {
    return nn::shape_str(shape);
}

}  // namespace taugen::nn
