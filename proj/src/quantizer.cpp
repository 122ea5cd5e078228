#include "q2n/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "q2n/linalg.hpp"

namespace q2n {

namespace {

struct GroupParams {
    double scale = 1.0;
    double zero = 0.0;
    bool degenerate = false;
};

GroupParams group_params(double mn, double mx, int bits) {
    GroupParams p;
    double maxq = static_cast<double>((1 << bits) - 1);
    if (mx == mn) {
        // Zero-range group: quantize exactly with s = 1 and a scalar
        // zero-point so s * (0 - z) reproduces the constant.
        p.scale = 1.0;
        p.zero = -mn;
        p.degenerate = true;
        return p;
    }
    p.scale = (mx - mn) / maxq;
    p.zero = std::clamp(std::nearbyint(-mn / p.scale), 0.0, maxq);
    return p;
}

int32_t quantize_one(double w, const GroupParams& p, int bits) {
    if (p.degenerate) return 0;
    double maxq = static_cast<double>((1 << bits) - 1);
    double q = std::clamp(std::nearbyint(w / p.scale) + p.zero, 0.0, maxq);
    return static_cast<int32_t>(q);
}

double dequant_one(int32_t code, const GroupParams& p) {
    return p.scale * (static_cast<double>(code) - p.zero);
}

void require_finite_weights(const Tensor& w, const char* who) {
    int64_t bad = first_non_finite(w);
    if (bad >= 0) {
        throw data_error(std::string(who) + ": non-finite weight at row-major index " +
                         std::to_string(bad));
    }
}

QuantResult make_result(const Tensor& w, const QuantConfig& cfg) {
    QuantResult q;
    int64_t gc = cfg.resolved_group(w.cols);
    q.bits = cfg.bits;
    q.group_cols = gc;
    q.w_q = Tensor(w.rows, w.cols);
    q.codes = CodeGrid(w.rows, w.cols);
    q.scales = Tensor(w.rows, w.cols / gc);
    q.zeros = Tensor(w.rows, w.cols / gc);
    return q;
}

} // namespace

void validate_quant_config(const QuantConfig& cfg, int64_t cols) {
    if (cfg.bits < 2 || cfg.bits > 8) {
        throw argument_error("bits must lie in [2, 8], got " + std::to_string(cfg.bits));
    }
    if (cfg.group_size == kPerRow) return;
    if (cfg.group_size < 1 || cols % cfg.group_size != 0) {
        throw argument_error("group size " + std::to_string(cfg.group_size) +
                             " does not divide column count " + std::to_string(cols));
    }
}

QuantResult rtn_quantize(const Tensor& w, const QuantConfig& cfg) {
    validate_quant_config(cfg, w.cols);
    require_finite_weights(w, "rtn_quantize");

    QuantResult q = make_result(w, cfg);
    const int64_t gc = q.group_cols;
    for (int64_t i = 0; i < w.rows; ++i) {
        const double* wi = w.row(i);
        for (int64_t g = 0; g < q.num_groups(); ++g) {
            const int64_t j0 = g * gc;
            double mn = wi[j0], mx = wi[j0];
            for (int64_t j = j0 + 1; j < j0 + gc; ++j) {
                mn = std::min(mn, wi[j]);
                mx = std::max(mx, wi[j]);
            }
            GroupParams p = group_params(mn, mx, cfg.bits);
            q.scales.at(i, g) = p.scale;
            q.zeros.at(i, g) = p.zero;
            for (int64_t j = j0; j < j0 + gc; ++j) {
                int32_t code = quantize_one(wi[j], p, cfg.bits);
                q.codes.at(i, j) = code;
                q.w_q.at(i, j) = dequant_one(code, p);
            }
        }
    }
    return q;
}

QuantResult gptq_quantize_with_gram(const Tensor& w, const Tensor& gram_x, const QuantConfig& cfg,
                                    double damp) {
    validate_quant_config(cfg, w.cols);
    require_finite_weights(w, "gptq_quantize");
    if (!(damp > 0.0 && damp <= 1.0)) {
        throw argument_error("damp must lie in (0, 1], got " + std::to_string(damp));
    }
    if (gram_x.rows != w.cols || gram_x.cols != w.cols) {
        throw dimension_error("gptq_quantize: Gram matrix is " + std::to_string(gram_x.rows) + "x" +
                              std::to_string(gram_x.cols) + " but weights have " +
                              std::to_string(w.cols) + " columns");
    }

    const int64_t n = w.rows;
    const int64_t m = w.cols;

    // H = XX^T + damp * mean(diag(XX^T)) * I, then the upper Cholesky
    // factor of H^{-1} drives the column-by-column compensation.
    double mean_diag = 0.0;
    for (int64_t j = 0; j < m; ++j) mean_diag += gram_x.at(j, j);
    mean_diag /= static_cast<double>(m);

    Tensor h = gram_x;
    for (int64_t j = 0; j < m; ++j) h.at(j, j) += damp * mean_diag;

    Tensor linv;
    try {
        Tensor l = cholesky_lower(h);
        // Forward-substitute L * A = I to get A = L^{-1}.
        linv = Tensor(m, m);
        for (int64_t col = 0; col < m; ++col) {
            for (int64_t r = col; r < m; ++r) {
                double acc = (r == col) ? 1.0 : 0.0;
                const double* lr = l.row(r);
                for (int64_t k2 = col; k2 < r; ++k2) acc -= lr[k2] * linv.at(k2, col);
                linv.at(r, col) = acc / lr[r];
            }
        }
    } catch (const numerical_error&) {
        throw numerical_error("gptq_quantize: H is not invertible after damping");
    }
    // H^{-1} = L^{-T} L^{-1} = (L^{-1})^T (L^{-1}).
    Tensor hinv(m, m);
    for (int64_t r = 0; r < m; ++r) {
        for (int64_t c = r; c < m; ++c) {
            double acc = 0.0;
            // Column dots of L^{-1}; nonzeros start at row max(r, c).
            for (int64_t k2 = c; k2 < m; ++k2) acc += linv.at(k2, r) * linv.at(k2, c);
            hinv.at(r, c) = acc;
            hinv.at(c, r) = acc;
        }
    }
    Tensor u = transpose(cholesky_lower(hinv)); // H^{-1} = U^T U, U upper

    QuantResult q = make_result(w, cfg);
    const int64_t gc = q.group_cols;

    Tensor wcur = w;
    std::vector<GroupParams> params(static_cast<std::size_t>(n));
    std::vector<double> err(static_cast<std::size_t>(n));

    for (int64_t j = 0; j < m; ++j) {
        if (j % gc == 0) {
            // Group parameters come from the compensated weights as the
            // group is entered.
            const int64_t g = j / gc;
            for (int64_t i = 0; i < n; ++i) {
                const double* wi = wcur.row(i);
                double mn = wi[j], mx = wi[j];
                for (int64_t j2 = j + 1; j2 < j + gc; ++j2) {
                    mn = std::min(mn, wi[j2]);
                    mx = std::max(mx, wi[j2]);
                }
                params[static_cast<std::size_t>(i)] = group_params(mn, mx, cfg.bits);
                q.scales.at(i, g) = params[static_cast<std::size_t>(i)].scale;
                q.zeros.at(i, g) = params[static_cast<std::size_t>(i)].zero;
            }
        }
        const double ujj = u.at(j, j);
        for (int64_t i = 0; i < n; ++i) {
            const GroupParams& p = params[static_cast<std::size_t>(i)];
            int32_t code = quantize_one(wcur.at(i, j), p, cfg.bits);
            double deq = dequant_one(code, p);
            q.codes.at(i, j) = code;
            q.w_q.at(i, j) = deq;
            err[static_cast<std::size_t>(i)] = (wcur.at(i, j) - deq) / ujj;
        }
        const double* uj = u.row(j);
        for (int64_t i = 0; i < n; ++i) {
            double ei = err[static_cast<std::size_t>(i)];
            if (ei == 0.0) continue;
            double* wi = wcur.row(i);
            for (int64_t c = j + 1; c < m; ++c) wi[c] -= ei * uj[c];
        }
    }
    return q;
}

QuantResult gptq_quantize(const Tensor& w, const Tensor& x, const QuantConfig& cfg, double damp) {
    if (x.rows != w.cols) {
        throw dimension_error("gptq_quantize: weights are " + std::to_string(w.rows) + "x" +
                              std::to_string(w.cols) + " but activations are " +
                              std::to_string(x.rows) + "x" + std::to_string(x.cols));
    }
    return gptq_quantize_with_gram(w, gram(x), cfg, damp);
}

Tensor dequantize(const QuantResult& q) {
    return q.w_q;
}

} // namespace q2n
