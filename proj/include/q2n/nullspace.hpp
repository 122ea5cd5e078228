#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "q2n/linalg.hpp"
#include "q2n/quantizer.hpp"
#include "q2n/tensor.hpp"

namespace q2n {

// Empirical defaults: ratio threshold t, leading eigenvalues excluded from
// the ratio, and the regularization pull toward alpha = 1.
inline constexpr double kDefaultRatioThreshold = 0.1;
inline constexpr int64_t kDefaultExcludedTop = 1;
inline constexpr double kDefaultLambdaReg = 0.2;

// Settings grid for the gradient-descent comparison.
inline constexpr std::array<int64_t, 3> kBpEpochPresets = {20, 50, 100};
inline constexpr std::array<double, 3> kBpLearningRatePresets = {5e-4, 1e-3, 2e-3};

// Outcome of a rank-index selection over a descending eigenvalue sequence.
// k counts the leading eigenvectors kept OUT of the null-space basis, so
// U1 = U[:, k:] spans m - k trailing directions. For the prefix-suffix
// selector, ratio_at_k is the ratio achieved at k and threshold_t the
// bound it satisfied; the alternative selectors store their effective
// absolute cutoff in threshold_t and 0 in ratio_at_k.
struct RatioSelection {
    int64_t k = 0;
    double ratio_at_k = 0.0;
    int64_t excluded_top = 0;
    double threshold_t = 0.0;
};

// Smallest k (in the full index space, k >= excluded_top + 1) such that the
// eigenvalue mass after k is at most t times the mass in
// (excluded_top, k]. An all-zero prefix returns k = m (empty basis).
RatioSelection select_rank_index(const std::vector<double>& values,
                                 double t = kDefaultRatioThreshold,
                                 int64_t excluded_top = kDefaultExcludedTop);

// Rank-estimation style cutoff: k = count of values > rel_cutoff * max.
// rel_cutoff < 0 selects the default m * machine-epsilon.
RatioSelection select_rank_torch_style(const std::vector<double>& values, double rel_cutoff = -1.0);

// Keep values larger than factor * smallest; falls back to the torch-style
// cutoff when the smallest value is zero, and clamps k to at least 1 so the
// projector never swallows the whole space.
RatioSelection select_rank_nscl_style(const std::vector<double>& values, double factor = 50.0);

struct NullSpaceProjection {
    RatioSelection selection;
    Projector delta;
};

NullSpaceProjection build_projection(const EigenBasis& basis, const RatioSelection& selection);

// Per-output-channel scaling factors. Channels whose unconstrained optimum
// would flip sign are kept at exactly 1 and listed in opted_out.
struct AlphaVector {
    std::vector<double> values;
    double lambda_reg = kDefaultLambdaReg;
    std::vector<int64_t> opted_out;
};

// Closed-form minimizer of
//   ||(W - Wq) Delta - (W - alpha (.) Wq)||_F^2 + lambda ||alpha - 1||^2
// via alpha_i = (<wq_i, h_i> + lambda) / (<wq_i, wq_i> + lambda) with
// H = W - (W - Wq) Delta.
AlphaVector solve_alpha(const Tensor& w, const Tensor& wq, const Projector& delta,
                        double lambda_reg = kDefaultLambdaReg);

// Value of the objective above at a given alpha.
double alpha_objective(const Tensor& w, const Tensor& wq, const Projector& delta,
                       const std::vector<double>& alpha, double lambda_reg);

struct BpStats {
    double objective = 0.0;
    bool diverged = false;
    int64_t epochs_run = 0;
};

// Plain gradient descent on the same objective from alpha = 1; validation
// baseline only, never part of the main pipeline. Divergence (objective
// rising 10 consecutive steps) stops the loop and is reported through
// stats, not thrown.
AlphaVector bp_oracle(const Tensor& w, const Tensor& wq, const Projector& delta, double lambda_reg,
                      int64_t epochs, double lr, BpStats* stats = nullptr);

// Absorbs alpha into the scale grid: scales[i, g] *= alpha_i. Codes and
// zero-points are untouched; throws when any alpha_i is not strictly
// positive and finite.
QuantResult apply_alpha(const QuantResult& q, const AlphaVector& alpha);

} // namespace q2n
