#include "q2n/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "q2n/calibgen.hpp"
#include "q2n/linalg.hpp"

namespace q2n {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct AlphaStats {
    double min = 1.0, max = 1.0, mean = 1.0;
};

AlphaStats alpha_stats(const std::vector<double>& values) {
    AlphaStats s;
    if (values.empty()) return s;
    s.min = values[0];
    s.max = values[0];
    double acc = 0.0;
    for (double v : values) {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
        acc += v;
    }
    s.mean = acc / static_cast<double>(values.size());
    return s;
}

double trace_of(const Tensor& m) {
    double tr = 0.0;
    for (int64_t i = 0; i < m.rows; ++i) tr += m.at(i, i);
    return tr;
}

RatioSelection run_selector(SelectorKind kind, const std::vector<double>& values, double t,
                            int64_t excluded_top) {
    switch (kind) {
        case SelectorKind::psr: return select_rank_index(values, t, excluded_top);
        case SelectorKind::torch_rank: return select_rank_torch_style(values);
        case SelectorKind::nscl: return select_rank_nscl_style(values);
    }
    throw argument_error("unknown selector");
}

QuantResult run_quantizer(QuantizerKind kind, const Tensor& w, const Tensor& gram_x,
                          const QuantConfig& cfg, double damp) {
    switch (kind) {
        case QuantizerKind::rtn: return rtn_quantize(w, cfg);
        case QuantizerKind::gptq: return gptq_quantize_with_gram(w, gram_x, cfg, damp);
    }
    throw argument_error("unknown quantizer");
}

// Runs fn(i) for i in [0, count) on up to thread_budget() threads.
template <typename Fn>
void parallel_for(int64_t count, Fn&& fn) {
    int threads = std::min<int64_t>(thread_budget(), count);
    if (threads <= 1) {
        for (int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            int64_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

const char* selector_name(SelectorKind s) {
    switch (s) {
        case SelectorKind::psr: return "psr";
        case SelectorKind::torch_rank: return "torch";
        case SelectorKind::nscl: return "nscl";
    }
    return "?";
}

SelectorKind selector_from_name(const std::string& name) {
    if (name == "psr") return SelectorKind::psr;
    if (name == "torch") return SelectorKind::torch_rank;
    if (name == "nscl") return SelectorKind::nscl;
    throw argument_error("unknown selector \"" + name + "\" (expected psr, torch or nscl)");
}

const char* quantizer_name(QuantizerKind q) {
    return q == QuantizerKind::rtn ? "rtn" : "gptq";
}

QuantizerKind quantizer_from_name(const std::string& name) {
    if (name == "rtn") return QuantizerKind::rtn;
    if (name == "gptq") return QuantizerKind::gptq;
    throw argument_error("unknown quantizer \"" + name + "\" (expected rtn or gptq)");
}

double layer_error(const Tensor& w, const Tensor& w_prime, const Tensor& x) {
    if (!w.same_shape(w_prime)) {
        throw dimension_error("layer_error: weight shapes differ");
    }
    if (w.cols != x.rows) {
        throw dimension_error("layer_error: weights have " + std::to_string(w.cols) +
                              " columns but activations " + std::to_string(x.rows) + " rows");
    }
    Tensor d(w.rows, w.cols);
    for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = w.data[i] - w_prime.data[i];
    return frobenius_norm(matmul(d, x));
}

RunOutcome run_q2n(const LayerBundle& bundle, const RunOptions& opts) {
    validate_bundle(bundle);
    auto t_start = Clock::now();

    const Tensor& w = bundle.weight;
    const Tensor& x = bundle.activations;

    Tensor g = gram(x);
    QuantResult baseline = run_quantizer(opts.quantizer, w, g, opts.qcfg, opts.damp);

    auto t_eig = Clock::now();
    EigenBasis basis = sym_eig(g);
    double ms_eig = ms_since(t_eig);

    RatioSelection sel = run_selector(opts.selector, basis.values, opts.t, opts.excluded_top);
    NullSpaceProjection proj = build_projection(basis, sel);

    auto t_alpha = Clock::now();
    AlphaVector alpha;
    if (opts.apply_correction) {
        alpha = solve_alpha(w, baseline.w_q, proj.delta, opts.lambda_reg);
    } else {
        alpha.lambda_reg = opts.lambda_reg;
        alpha.values.assign(static_cast<std::size_t>(w.rows), 1.0);
    }
    QuantResult corrected = apply_alpha(baseline, alpha);
    double ms_alpha = ms_since(t_alpha);

    RunOutcome out;
    out.result = std::move(corrected);

    LayerReport& r = out.report;
    r.layer_name = bundle.name.empty() ? "layer" : bundle.name;
    r.quantizer = quantizer_name(opts.quantizer);
    r.bits = opts.qcfg.bits;
    r.group_cols = baseline.group_cols;
    r.selector = selector_name(opts.selector);
    r.t = opts.t;
    r.lambda_reg = opts.lambda_reg;
    r.k = sel.k;
    r.trace_delta = trace_of(proj.delta.matrix);
    r.err_baseline = layer_error(w, baseline.w_q, x);
    r.err_q2n = layer_error(w, out.result.w_q, x);
    r.err_relative_drop =
        r.err_baseline > 0.0 ? (r.err_baseline - r.err_q2n) / r.err_baseline : 0.0;
    AlphaStats st = alpha_stats(alpha.values);
    r.alpha_min = st.min;
    r.alpha_max = st.max;
    r.alpha_mean = st.mean;
    r.channels_opted_out = static_cast<int64_t>(alpha.opted_out.size());
    r.ms_eig = ms_eig;
    r.ms_alpha = ms_alpha;
    r.ms_total = ms_since(t_start);
    return out;
}

std::vector<LayerReport> sweep(const LayerBundle& bundle, const RunOptions& opts,
                               const std::vector<double>& t_grid,
                               const std::vector<double>& lambda_grid) {
    if (t_grid.empty() || lambda_grid.empty()) {
        throw argument_error("sweep: grids must be non-empty");
    }
    validate_bundle(bundle);

    const Tensor& w = bundle.weight;
    const Tensor& x = bundle.activations;

    auto t_start = Clock::now();
    Tensor g = gram(x);
    QuantResult baseline = run_quantizer(opts.quantizer, w, g, opts.qcfg, opts.damp);

    auto t_eig = Clock::now();
    EigenBasis basis = sym_eig(g);
    double ms_eig = ms_since(t_eig);
    double err_baseline = layer_error(w, baseline.w_q, x);

    struct Cell {
        double t, lambda;
    };
    std::vector<Cell> cells;
    for (double tv : t_grid) {
        for (double lv : lambda_grid) cells.push_back({tv, lv});
    }

    std::vector<LayerReport> rows(cells.size());
    parallel_for(static_cast<int64_t>(cells.size()), [&](int64_t idx) {
        const Cell& cell = cells[static_cast<std::size_t>(idx)];
        auto t_cell = Clock::now();
        RatioSelection sel = run_selector(opts.selector, basis.values, cell.t, opts.excluded_top);
        NullSpaceProjection proj = build_projection(basis, sel);
        auto t_alpha = Clock::now();
        AlphaVector alpha;
        if (opts.apply_correction) {
            alpha = solve_alpha(w, baseline.w_q, proj.delta, cell.lambda);
        } else {
            alpha.lambda_reg = cell.lambda;
            alpha.values.assign(static_cast<std::size_t>(w.rows), 1.0);
        }
        QuantResult corrected = apply_alpha(baseline, alpha);
        double ms_alpha = ms_since(t_alpha);

        LayerReport& r = rows[static_cast<std::size_t>(idx)];
        r.layer_name = bundle.name.empty() ? "layer" : bundle.name;
        r.quantizer = quantizer_name(opts.quantizer);
        r.bits = opts.qcfg.bits;
        r.group_cols = baseline.group_cols;
        r.selector = selector_name(opts.selector);
        r.t = cell.t;
        r.lambda_reg = cell.lambda;
        r.k = sel.k;
        r.trace_delta = trace_of(proj.delta.matrix);
        r.err_baseline = err_baseline;
        r.err_q2n = layer_error(w, corrected.w_q, x);
        r.err_relative_drop =
            r.err_baseline > 0.0 ? (r.err_baseline - r.err_q2n) / r.err_baseline : 0.0;
        AlphaStats st = alpha_stats(alpha.values);
        r.alpha_min = st.min;
        r.alpha_max = st.max;
        r.alpha_mean = st.mean;
        r.channels_opted_out = static_cast<int64_t>(alpha.opted_out.size());
        r.ms_eig = ms_eig;
        r.ms_alpha = ms_alpha;
        r.ms_total = ms_eig + ms_since(t_cell);
    });
    (void)t_start;

    std::stable_sort(rows.begin(), rows.end(), [](const LayerReport& a, const LayerReport& b) {
        if (a.err_q2n != b.err_q2n) return a.err_q2n < b.err_q2n;
        if (a.t != b.t) return a.t < b.t;
        return a.lambda_reg < b.lambda_reg;
    });
    return rows;
}

std::vector<BenchRow> bench_decomposition(const std::vector<int64_t>& sizes, uint64_t seed) {
    std::vector<BenchRow> rows;
    rows.reserve(sizes.size());
    for (int64_t m : sizes) {
        if (m < 2) throw argument_error("bench: sizes must be >= 2");
        Tensor base = gen_weights(m, m + 16, seed ^ static_cast<uint64_t>(m));
        Tensor g = gram(base);

        BenchRow row;
        row.m = m;
        auto t0 = Clock::now();
        EigenBasis eig = sym_eig(g);
        row.ms_eig = ms_since(t0);
        auto t1 = Clock::now();
        EigenBasis svd = svd_oracle(g);
        row.ms_svd = ms_since(t1);
        row.speedup = row.ms_eig > 0.0 ? row.ms_svd / row.ms_eig : 0.0;

        double lmax = std::max(eig.values[0], 1e-300);
        double disc = 0.0;
        for (std::size_t i = 0; i < eig.values.size(); ++i) {
            disc = std::max(disc, std::fabs(eig.values[i] - svd.values[i]));
        }
        row.max_disc = disc / lmax;
        rows.push_back(row);
    }
    return rows;
}

const char* const kReportCsvHeader =
    "layer,quantizer,bits,group,t,lambda,k,trace_delta,err_baseline,err_q2n,rel_drop,"
    "alpha_min,alpha_max,alpha_mean,opt_out,ms_eig,ms_alpha,ms_total";

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string report_csv_row(const LayerReport& r) {
    std::string s;
    s += r.layer_name;
    s += ',';
    s += r.quantizer;
    s += ',';
    s += std::to_string(r.bits);
    s += ',';
    s += std::to_string(r.group_cols);
    s += ',';
    s += format_double(r.t);
    s += ',';
    s += format_double(r.lambda_reg);
    s += ',';
    s += std::to_string(r.k);
    s += ',';
    s += format_double(r.trace_delta);
    s += ',';
    s += format_double(r.err_baseline);
    s += ',';
    s += format_double(r.err_q2n);
    s += ',';
    s += format_double(r.err_relative_drop);
    s += ',';
    s += format_double(r.alpha_min);
    s += ',';
    s += format_double(r.alpha_max);
    s += ',';
    s += format_double(r.alpha_mean);
    s += ',';
    s += std::to_string(r.channels_opted_out);
    s += ',';
    s += format_double(r.ms_eig);
    s += ',';
    s += format_double(r.ms_alpha);
    s += ',';
    s += format_double(r.ms_total);
    return s;
}

std::string report_json(const LayerReport& r) {
    nlohmann::ordered_json j;
    j["layer"] = r.layer_name;
    j["quantizer"] = r.quantizer;
    j["bits"] = r.bits;
    j["group"] = r.group_cols;
    j["t"] = r.t;
    j["lambda"] = r.lambda_reg;
    j["selector"] = r.selector;
    j["k"] = r.k;
    j["trace_delta"] = r.trace_delta;
    j["err_baseline"] = r.err_baseline;
    j["err_q2n"] = r.err_q2n;
    j["rel_drop"] = r.err_relative_drop;
    j["alpha_min"] = r.alpha_min;
    j["alpha_max"] = r.alpha_max;
    j["alpha_mean"] = r.alpha_mean;
    j["opt_out"] = r.channels_opted_out;
    j["timings"] = {{"ms_eig", r.ms_eig}, {"ms_alpha", r.ms_alpha}, {"ms_total", r.ms_total}};
    return j.dump(2) + "\n";
}

int thread_budget() {
    unsigned hw = std::thread::hardware_concurrency();
    int budget = hw > 0 ? static_cast<int>(hw) : 1;
    if (const char* env = std::getenv("Q2N_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) budget = std::min<long>(budget, v);
    }
    return std::max(budget, 1);
}

} // namespace q2n
