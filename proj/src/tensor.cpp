#include "q2n/tensor.hpp"

#include <cmath>

namespace q2n {

const char* dtype_name(DType d) {
    return d == DType::f32 ? "f32" : "f64";
}

DType dtype_from_name(const std::string& name) {
    if (name == "f32") return DType::f32;
    if (name == "f64") return DType::f64;
    throw format_error("unknown dtype \"" + name + "\"");
}

std::size_t dtype_size(DType d) {
    return d == DType::f32 ? 4 : 8;
}

Tensor::Tensor(int64_t r, int64_t c, DType dt) : rows(r), cols(c), dtype(dt) {
    if (r < 1 || c < 1) {
        throw argument_error("tensor shape must be at least 1x1, got " + std::to_string(r) + "x" +
                             std::to_string(c));
    }
    data.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
}

Tensor Tensor::zeros(int64_t r, int64_t c, DType dt) {
    return Tensor(r, c, dt);
}

Tensor Tensor::identity(int64_t n) {
    Tensor t(n, n);
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

bool all_finite(const Tensor& t) {
    return first_non_finite(t) < 0;
}

int64_t first_non_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (!std::isfinite(t.data[i])) return static_cast<int64_t>(i);
    }
    return -1;
}

void validate_bundle(const LayerBundle& b) {
    if (b.weight.cols != b.activations.rows) {
        throw dimension_error("layer \"" + b.name + "\": weight is " + std::to_string(b.weight.rows) +
                              "x" + std::to_string(b.weight.cols) + " but activations are " +
                              std::to_string(b.activations.rows) + "x" +
                              std::to_string(b.activations.cols) +
                              "; weight.cols must equal activations.rows");
    }
}

} // namespace q2n
