#include "q2n/nullspace.hpp"

#include <cfloat>
#include <cmath>
#include <string>

namespace q2n {

namespace {

void require_descending(const std::vector<double>& values, const char* who) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] < 0.0) {
            throw argument_error(std::string(who) + ": eigenvalues must be non-negative");
        }
        if (i > 0 && values[i] > values[i - 1]) {
            throw argument_error(std::string(who) + ": eigenvalues must be descending");
        }
    }
    if (values.empty()) throw argument_error(std::string(who) + ": empty spectrum");
}

// H = W - (W - Wq) * Delta.
Tensor compensation_target(const Tensor& w, const Tensor& wq, const Projector& delta) {
    if (!w.same_shape(wq)) {
        throw dimension_error("alpha solve: W is " + std::to_string(w.rows) + "x" +
                              std::to_string(w.cols) + " but Wq is " + std::to_string(wq.rows) +
                              "x" + std::to_string(wq.cols));
    }
    if (delta.matrix.rows != w.cols || delta.matrix.cols != w.cols) {
        throw dimension_error("alpha solve: projector is " + std::to_string(delta.matrix.rows) +
                              "x" + std::to_string(delta.matrix.cols) + " but weights have " +
                              std::to_string(w.cols) + " columns");
    }
    Tensor e(w.rows, w.cols);
    for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] = w.data[i] - wq.data[i];
    Tensor ed = matmul(e, delta.matrix);
    Tensor h(w.rows, w.cols);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] = w.data[i] - ed.data[i];
    int64_t bad = first_non_finite(h);
    if (bad >= 0) {
        throw numerical_error("alpha solve: non-finite compensation target at row-major index " +
                              std::to_string(bad));
    }
    return h;
}

} // namespace

RatioSelection select_rank_index(const std::vector<double>& values, double t, int64_t excluded_top) {
    require_descending(values, "select_rank_index");
    const int64_t m = static_cast<int64_t>(values.size());
    if (!(t > 0.0)) throw argument_error("ratio threshold t must be > 0");
    if (excluded_top < 0 || excluded_top >= m) {
        throw argument_error("excluded_top must lie in [0, m), got " + std::to_string(excluded_top));
    }

    // Suffix sums accumulated right-to-left; no cancellation anywhere.
    std::vector<double> suffix(static_cast<std::size_t>(m) + 1, 0.0);
    for (int64_t i = m - 1; i >= 0; --i) {
        suffix[static_cast<std::size_t>(i)] =
            suffix[static_cast<std::size_t>(i + 1)] + values[static_cast<std::size_t>(i)];
    }

    RatioSelection sel;
    sel.excluded_top = excluded_top;
    sel.threshold_t = t;
    double prefix = 0.0;
    for (int64_t k = excluded_top + 1; k <= m; ++k) {
        prefix += values[static_cast<std::size_t>(k - 1)];
        if (prefix == 0.0) {
            // Nothing left to hold the ratio against: empty basis.
            sel.k = m;
            sel.ratio_at_k = 0.0;
            return sel;
        }
        double ratio = suffix[static_cast<std::size_t>(k)] / prefix;
        if (ratio <= t) {
            sel.k = k;
            sel.ratio_at_k = ratio;
            return sel;
        }
    }
    sel.k = m;
    sel.ratio_at_k = 0.0;
    return sel;
}

RatioSelection select_rank_torch_style(const std::vector<double>& values, double rel_cutoff) {
    require_descending(values, "select_rank_torch_style");
    const int64_t m = static_cast<int64_t>(values.size());
    if (rel_cutoff < 0.0) rel_cutoff = static_cast<double>(m) * DBL_EPSILON;
    double cutoff = rel_cutoff * values[0];
    int64_t k = 0;
    while (k < m && values[static_cast<std::size_t>(k)] > cutoff) ++k;
    RatioSelection sel;
    sel.k = k;
    sel.threshold_t = cutoff;
    return sel;
}

RatioSelection select_rank_nscl_style(const std::vector<double>& values, double factor) {
    require_descending(values, "select_rank_nscl_style");
    const int64_t m = static_cast<int64_t>(values.size());
    double lambda_min = values[static_cast<std::size_t>(m - 1)];
    if (lambda_min == 0.0) return select_rank_torch_style(values);
    double cutoff = factor * lambda_min;
    int64_t k = 0;
    while (k < m && values[static_cast<std::size_t>(k)] > cutoff) ++k;
    if (k == 0) k = 1; // never project the whole space away
    RatioSelection sel;
    sel.k = k;
    sel.threshold_t = cutoff;
    return sel;
}

NullSpaceProjection build_projection(const EigenBasis& basis, const RatioSelection& selection) {
    NullSpaceProjection p;
    p.selection = selection;
    p.delta = projector_from_basis(basis.vectors, selection.k);
    return p;
}

AlphaVector solve_alpha(const Tensor& w, const Tensor& wq, const Projector& delta,
                        double lambda_reg) {
    if (!(lambda_reg > 0.0)) throw argument_error("lambda_reg must be > 0");
    Tensor h = compensation_target(w, wq, delta);

    AlphaVector a;
    a.lambda_reg = lambda_reg;
    a.values.resize(static_cast<std::size_t>(w.rows));
    for (int64_t i = 0; i < w.rows; ++i) {
        const double* wqi = wq.row(i);
        const double* hi = h.row(i);
        double num = 0.0, den = 0.0;
        for (int64_t j = 0; j < w.cols; ++j) {
            num += wqi[j] * hi[j];
            den += wqi[j] * wqi[j];
        }
        double alpha = (num + lambda_reg) / (den + lambda_reg);
        if (!(alpha > 0.0) || !std::isfinite(alpha)) {
            // Negative scaling would corrupt the quantization grid; the
            // channel opts out and keeps its original scales.
            a.opted_out.push_back(i);
            alpha = 1.0;
        }
        a.values[static_cast<std::size_t>(i)] = alpha;
    }
    return a;
}

double alpha_objective(const Tensor& w, const Tensor& wq, const Projector& delta,
                       const std::vector<double>& alpha, double lambda_reg) {
    if (alpha.size() != static_cast<std::size_t>(w.rows)) {
        throw dimension_error("alpha_objective: alpha length " + std::to_string(alpha.size()) +
                              " does not match " + std::to_string(w.rows) + " rows");
    }
    Tensor e(w.rows, w.cols);
    for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] = w.data[i] - wq.data[i];
    Tensor ed = matmul(e, delta.matrix);

    double obj = 0.0;
    for (int64_t i = 0; i < w.rows; ++i) {
        const double* wi = w.row(i);
        const double* wqi = wq.row(i);
        const double* edi = ed.row(i);
        double ai = alpha[static_cast<std::size_t>(i)];
        for (int64_t j = 0; j < w.cols; ++j) {
            double r = edi[j] - (wi[j] - ai * wqi[j]);
            obj += r * r;
        }
        obj += lambda_reg * (ai - 1.0) * (ai - 1.0);
    }
    return obj;
}

AlphaVector bp_oracle(const Tensor& w, const Tensor& wq, const Projector& delta, double lambda_reg,
                      int64_t epochs, double lr, BpStats* stats) {
    if (epochs < 1) throw argument_error("bp_oracle: epochs must be >= 1");
    if (!(lr > 0.0)) throw argument_error("bp_oracle: learning rate must be > 0");
    if (!(lambda_reg > 0.0)) throw argument_error("bp_oracle: lambda_reg must be > 0");
    if (!w.same_shape(wq)) throw dimension_error("bp_oracle: W and Wq shapes differ");

    // Work from the raw objective ||E Delta - (W - alpha Wq)||^2 + reg; the
    // residual is rebuilt every step so this stays an independent check on
    // the closed form.
    Tensor e(w.rows, w.cols);
    for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] = w.data[i] - wq.data[i];
    Tensor ed = matmul(e, delta.matrix);

    const int64_t n = w.rows;
    const int64_t m = w.cols;
    std::vector<double> alpha(static_cast<std::size_t>(n), 1.0);
    std::vector<double> grad(static_cast<std::size_t>(n), 0.0);

    auto objective_at = [&](const std::vector<double>& a) {
        double obj = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double* wi = w.row(i);
            const double* wqi = wq.row(i);
            const double* edi = ed.row(i);
            double ai = a[static_cast<std::size_t>(i)];
            for (int64_t j = 0; j < m; ++j) {
                double r = edi[j] - wi[j] + ai * wqi[j];
                obj += r * r;
            }
            obj += lambda_reg * (ai - 1.0) * (ai - 1.0);
        }
        return obj;
    };

    double prev = objective_at(alpha);
    int rising = 0;
    bool diverged = false;
    int64_t step = 0;
    for (; step < epochs; ++step) {
        for (int64_t i = 0; i < n; ++i) {
            const double* wi = w.row(i);
            const double* wqi = wq.row(i);
            const double* edi = ed.row(i);
            double ai = alpha[static_cast<std::size_t>(i)];
            double g = 0.0;
            for (int64_t j = 0; j < m; ++j) {
                double r = edi[j] - wi[j] + ai * wqi[j];
                g += r * wqi[j];
            }
            grad[static_cast<std::size_t>(i)] = 2.0 * g + 2.0 * lambda_reg * (ai - 1.0);
        }
        for (int64_t i = 0; i < n; ++i) {
            alpha[static_cast<std::size_t>(i)] -= lr * grad[static_cast<std::size_t>(i)];
        }
        double cur = objective_at(alpha);
        if (cur > prev) {
            if (++rising >= 10) {
                diverged = true;
                ++step;
                break;
            }
        } else {
            rising = 0;
        }
        prev = cur;
    }

    if (stats) {
        stats->objective = prev;
        stats->diverged = diverged;
        stats->epochs_run = step;
    }

    AlphaVector a;
    a.lambda_reg = lambda_reg;
    a.values = std::move(alpha);
    return a;
}

QuantResult apply_alpha(const QuantResult& q, const AlphaVector& alpha) {
    if (alpha.values.size() != static_cast<std::size_t>(q.w_q.rows)) {
        throw dimension_error("apply_alpha: alpha length " + std::to_string(alpha.values.size()) +
                              " does not match " + std::to_string(q.w_q.rows) + " channels");
    }
    std::string bad;
    for (std::size_t i = 0; i < alpha.values.size(); ++i) {
        double ai = alpha.values[i];
        if (!(ai > 0.0) || !std::isfinite(ai)) {
            if (!bad.empty()) bad += ", ";
            bad += std::to_string(i);
        }
    }
    if (!bad.empty()) {
        throw argument_error("apply_alpha: non-positive alpha would flip scale signs on channels " +
                             bad);
    }

    QuantResult out = q;
    for (int64_t i = 0; i < out.scales.rows; ++i) {
        double ai = alpha.values[static_cast<std::size_t>(i)];
        for (int64_t g = 0; g < out.scales.cols; ++g) {
            double s = out.scales.at(i, g) * ai;
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw argument_error("apply_alpha: scale underflow on channel " + std::to_string(i));
            }
            out.scales.at(i, g) = s;
        }
    }
    for (int64_t i = 0; i < out.w_q.rows; ++i) {
        for (int64_t j = 0; j < out.w_q.cols; ++j) {
            int64_t g = out.group_of(j);
            out.w_q.at(i, j) =
                out.scales.at(i, g) * (static_cast<double>(out.codes.at(i, j)) - out.zeros.at(i, g));
        }
    }
    return out;
}

} // namespace q2n
