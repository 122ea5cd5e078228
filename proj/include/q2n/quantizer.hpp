#pragma once

#include <cstdint>
#include <vector>

#include "q2n/tensor.hpp"

namespace q2n {

// Sentinel for "one group spanning the whole row".
inline constexpr int64_t kPerRow = 0;

struct QuantConfig {
    int bits = 2;                 // b in [2, 8]
    int64_t group_size = kPerRow; // must divide the weight column count

    int64_t resolved_group(int64_t cols) const { return group_size == kPerRow ? cols : group_size; }
};

// Throws argument_error when cfg cannot quantize a matrix with `cols` columns.
void validate_quant_config(const QuantConfig& cfg, int64_t cols);

struct CodeGrid {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<int32_t> data;

    CodeGrid() = default;
    CodeGrid(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0) {}

    int32_t& at(int64_t i, int64_t j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    int32_t at(int64_t i, int64_t j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

// Fake-quantized weights plus the integer codes and per-(row, group)
// affine grid. Reconstruction w_q = s * (code - z) holds exactly.
struct QuantResult {
    Tensor w_q;      // n x m dequantized values
    CodeGrid codes;  // n x m, each in [0, 2^bits - 1]
    Tensor scales;   // n x num_groups, strictly positive
    Tensor zeros;    // n x num_groups
    int bits = 2;
    int64_t group_cols = 0; // columns per group (m when per-row)

    int64_t num_groups() const { return w_q.cols / group_cols; }
    int64_t group_of(int64_t j) const { return j / group_cols; }
};

// Plain round-to-nearest quantization, round-half-to-even. Per group:
// s = (max-min)/(2^b - 1) and z = clamp(round(-min/s), 0, 2^b - 1); a
// zero-range group stores s = 1, z = -min, code 0 so the constant value
// survives exactly.
QuantResult rtn_quantize(const Tensor& w, const QuantConfig& cfg);

// Column-sequential quantization with error compensation through the
// damped inverse Gram matrix of the calibration input X (m x c). Group
// parameters are refreshed from the compensated weights when a group is
// entered. Reduces to rtn_quantize when X is isotropic.
QuantResult gptq_quantize(const Tensor& w, const Tensor& x, const QuantConfig& cfg,
                          double damp = 0.01);

// Same as above but reusing an already computed Gram matrix XX^T.
QuantResult gptq_quantize_with_gram(const Tensor& w, const Tensor& gram_x, const QuantConfig& cfg,
                                    double damp = 0.01);

// Returns the stored reconstruction (bit-identical to w_q).
Tensor dequantize(const QuantResult& q);

} // namespace q2n
