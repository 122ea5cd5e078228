#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "q2n/errors.hpp"

namespace q2n {

enum class DType { f32, f64 };

const char* dtype_name(DType d);
DType dtype_from_name(const std::string& name);
std::size_t dtype_size(DType d);

// Dense row-major 2-D matrix. Storage is always f64; the dtype tag records
// how the payload is serialized (f32 inputs are widened on load and narrowed
// again on save).
struct Tensor {
    int64_t rows = 0;
    int64_t cols = 0;
    DType dtype = DType::f64;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int64_t r, int64_t c, DType dt = DType::f64);

    double& at(int64_t i, int64_t j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    double* row(int64_t i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int64_t i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

    std::size_t size() const { return data.size(); }

    static Tensor zeros(int64_t r, int64_t c, DType dt = DType::f64);
    static Tensor identity(int64_t n);

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

bool all_finite(const Tensor& t);

// Index of the first non-finite element in row-major order, or -1.
int64_t first_non_finite(const Tensor& t);

// A weight matrix paired with the calibration activations feeding it.
// weight is n x m, activations m x c (columns are calibration samples).
struct LayerBundle {
    Tensor weight;
    Tensor activations;
    std::string name;
};

// Throws dimension_error unless weight.cols == activations.rows.
void validate_bundle(const LayerBundle& b);

} // namespace q2n
