#pragma once

#include <string>
#include <vector>

#include "q2n/nullspace.hpp"
#include "q2n/quantizer.hpp"
#include "q2n/tensor.hpp"

namespace q2n {

enum class SelectorKind { psr, torch_rank, nscl };
enum class QuantizerKind { rtn, gptq };

const char* selector_name(SelectorKind s);
SelectorKind selector_from_name(const std::string& name);
const char* quantizer_name(QuantizerKind q);
QuantizerKind quantizer_from_name(const std::string& name);

struct RunOptions {
    QuantConfig qcfg;
    QuantizerKind quantizer = QuantizerKind::gptq;
    SelectorKind selector = SelectorKind::psr;
    double t = kDefaultRatioThreshold;
    int64_t excluded_top = kDefaultExcludedTop;
    double lambda_reg = kDefaultLambdaReg;
    double damp = 0.01;
    bool apply_correction = true; // false: alpha pinned to 1 (baseline pass-through)
};

// One experiment record: errors before/after the null-space correction,
// the selected cut, alpha statistics and stage timings.
struct LayerReport {
    std::string layer_name;
    std::string quantizer;
    int bits = 0;
    int64_t group_cols = 0;
    std::string selector;
    double t = 0.0;
    double lambda_reg = 0.0;
    int64_t k = 0;
    double trace_delta = 0.0;
    double err_baseline = 0.0;
    double err_q2n = 0.0;
    double err_relative_drop = 0.0;
    double alpha_min = 0.0;
    double alpha_max = 0.0;
    double alpha_mean = 0.0;
    int64_t channels_opted_out = 0;
    double ms_eig = 0.0;
    double ms_alpha = 0.0;
    double ms_total = 0.0;
};

struct RunOutcome {
    QuantResult result;
    LayerReport report;
};

// ||W X - W' X||_F in double precision.
double layer_error(const Tensor& w, const Tensor& w_prime, const Tensor& x);

// Quantize, decompose the activation Gram matrix, select the cut, build the
// projector, solve alpha and absorb it into the scales. GPTQ reuses the
// same Gram matrix as the decomposition.
RunOutcome run_q2n(const LayerBundle& bundle, const RunOptions& opts);

// Exhaustive grid over t x lambda sharing the quantization and
// decomposition; rows sorted by err_q2n ascending (ties by t then lambda).
// Honors the Q2N_THREADS cap for parallel grid points.
std::vector<LayerReport> sweep(const LayerBundle& bundle, const RunOptions& opts,
                               const std::vector<double>& t_grid,
                               const std::vector<double>& lambda_grid);

struct BenchRow {
    int64_t m = 0;
    double ms_eig = 0.0;
    double ms_svd = 0.0;
    double speedup = 0.0;  // ms_svd / ms_eig
    double max_disc = 0.0; // max |lambda_i - sigma_i| / lambda_max
};

// Times sym_eig against svd_oracle on random PSD matrices of each size.
std::vector<BenchRow> bench_decomposition(const std::vector<int64_t>& sizes, uint64_t seed = 0);

// --- reporting -------------------------------------------------------------

// Fixed CSV schema shared by run and sweep.
extern const char* const kReportCsvHeader;
std::string report_csv_row(const LayerReport& r);

// JSON sidecar text (timings nested under "timings").
std::string report_json(const LayerReport& r);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// Thread budget: min(Q2N_THREADS, hardware concurrency), at least 1.
int thread_budget();

} // namespace q2n
