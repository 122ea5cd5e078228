#include "q2n/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace q2n {

namespace {

void require_square(const Tensor& s, const char* who) {
    if (s.rows != s.cols) {
        throw argument_error(std::string(who) + " needs a square matrix, got " +
                             std::to_string(s.rows) + "x" + std::to_string(s.cols));
    }
}

void require_symmetric(const Tensor& s, const char* who) {
    double scale = std::max(1.0, max_abs(s));
    for (int64_t i = 0; i < s.rows; ++i) {
        for (int64_t j = i + 1; j < s.cols; ++j) {
            if (std::fabs(s.at(i, j) - s.at(j, i)) > 1e-8 * scale) {
                throw argument_error(std::string(who) + ": input is not symmetric at (" +
                                     std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
}

// Sorts descending by magnitude (stable in the original index) and applies
// the sign convention: largest-magnitude component of each vector becomes
// non-negative, lowest index wins ties. `zt` holds candidate vectors as rows.
EigenBasis finalize_basis(std::vector<double> raw_values, Tensor& zt) {
    int64_t n = zt.rows;
    std::vector<double> mag(raw_values.size());
    for (std::size_t i = 0; i < raw_values.size(); ++i) mag[i] = std::fabs(raw_values[i]);

    std::vector<int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int64_t a, int64_t b) {
        return mag[static_cast<std::size_t>(a)] > mag[static_cast<std::size_t>(b)];
    });

    EigenBasis eb;
    eb.values.resize(static_cast<std::size_t>(n));
    eb.vectors = Tensor(n, n);
    for (int64_t jout = 0; jout < n; ++jout) {
        int64_t src = perm[static_cast<std::size_t>(jout)];
        eb.values[static_cast<std::size_t>(jout)] = mag[static_cast<std::size_t>(src)];
        const double* v = zt.row(src);
        int64_t best = 0;
        double best_abs = std::fabs(v[0]);
        for (int64_t r = 1; r < n; ++r) {
            double a = std::fabs(v[r]);
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        double sign = v[best] < 0.0 ? -1.0 : 1.0;
        for (int64_t r = 0; r < n; ++r) eb.vectors.at(r, jout) = sign * v[r];
    }
    return eb;
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows) {
        throw dimension_error("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                              " times " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    Tensor c(a.rows, b.cols);
    for (int64_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int64_t l = 0; l < a.cols; ++l) {
            double ail = ai[l];
            if (ail == 0.0) continue;
            const double* bl = b.row(l);
            for (int64_t j = 0; j < b.cols; ++j) ci[j] += ail * bl[j];
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols != b.cols) {
        throw dimension_error("matmul_nt: inner dimensions differ (" + std::to_string(a.cols) +
                              " vs " + std::to_string(b.cols) + ")");
    }
    Tensor c(a.rows, b.rows);
    for (int64_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int64_t j = 0; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (int64_t l = 0; l < a.cols; ++l) acc += ai[l] * bj[l];
            ci[j] = acc;
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    Tensor t(a.cols, a.rows);
    for (int64_t i = 0; i < a.rows; ++i) {
        for (int64_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    }
    return t;
}

double frobenius_norm(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v * v;
    return std::sqrt(acc);
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

Tensor gram(const Tensor& x) {
    if (!all_finite(x)) throw data_error("gram: input has non-finite elements");
    int64_t m = x.rows;
    Tensor g(m, m);
    for (int64_t i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        for (int64_t j = i; j < m; ++j) {
            const double* xj = x.row(j);
            double acc = 0.0;
            for (int64_t l = 0; l < x.cols; ++l) acc += xi[l] * xj[l];
            g.at(i, j) = acc;
            g.at(j, i) = acc;
        }
    }
    return g;
}

EigenBasis sym_eig(const Tensor& s) {
    require_square(s, "sym_eig");
    require_symmetric(s, "sym_eig");
    const int64_t n = s.rows;

    // Symmetrized working copy.
    Tensor w(n, n);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) w.at(i, j) = 0.5 * (s.at(i, j) + s.at(j, i));
    }

    std::vector<double> d(static_cast<std::size_t>(n), 0.0);
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);

    // Householder reduction to tridiagonal form; reflector i lives on
    // indices i+1..n-1.
    std::vector<std::vector<double>> us;
    std::vector<double> betas;
    if (n > 2) {
        us.resize(static_cast<std::size_t>(n - 2));
        betas.assign(static_cast<std::size_t>(n - 2), 0.0);
    }
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    std::vector<double> q(static_cast<std::size_t>(n), 0.0);

    for (int64_t i = 0; i + 2 < n; ++i) {
        const int64_t lo = i + 1;
        double sigma2 = 0.0;
        for (int64_t r = lo; r < n; ++r) sigma2 += w.at(i, r) * w.at(i, r);
        double sigma = std::sqrt(sigma2);
        if (sigma == 0.0) {
            e[static_cast<std::size_t>(i)] = 0.0;
            continue;
        }
        double x0 = w.at(i, lo);
        double alpha = x0 >= 0.0 ? -sigma : sigma;
        double beta = 1.0 / (sigma * (sigma + std::fabs(x0)));

        std::vector<double>& u = us[static_cast<std::size_t>(i)];
        u.resize(static_cast<std::size_t>(n - lo));
        u[0] = x0 - alpha;
        for (int64_t r = lo + 1; r < n; ++r) u[static_cast<std::size_t>(r - lo)] = w.at(i, r);
        betas[static_cast<std::size_t>(i)] = beta;

        // p = beta * B * u on the trailing block.
        for (int64_t r = lo; r < n; ++r) {
            const double* wr = w.row(r);
            double acc = 0.0;
            for (int64_t c = lo; c < n; ++c) acc += wr[c] * u[static_cast<std::size_t>(c - lo)];
            p[static_cast<std::size_t>(r)] = beta * acc;
        }
        double k = 0.0;
        for (int64_t r = lo; r < n; ++r) {
            k += u[static_cast<std::size_t>(r - lo)] * p[static_cast<std::size_t>(r)];
        }
        k *= 0.5 * beta;
        for (int64_t r = lo; r < n; ++r) {
            q[static_cast<std::size_t>(r)] = p[static_cast<std::size_t>(r)] - k * u[static_cast<std::size_t>(r - lo)];
        }
        // Symmetric rank-2 update: B -= u q^T + q u^T.
        for (int64_t r = lo; r < n; ++r) {
            double ur = u[static_cast<std::size_t>(r - lo)];
            double qr = q[static_cast<std::size_t>(r)];
            double* wr = w.row(r);
            for (int64_t c = lo; c < n; ++c) {
                wr[c] -= ur * q[static_cast<std::size_t>(c)] + qr * u[static_cast<std::size_t>(c - lo)];
            }
        }
        e[static_cast<std::size_t>(i)] = alpha;
    }
    if (n >= 2) e[static_cast<std::size_t>(n - 2)] = w.at(n - 2, n - 1);
    e[static_cast<std::size_t>(n - 1)] = 0.0;
    for (int64_t j = 0; j < n; ++j) d[static_cast<std::size_t>(j)] = w.at(j, j);

    // Accumulate Q = H_0 H_1 ... H_{n-3} from the inside out, then keep its
    // transpose so QL rotations touch contiguous rows.
    Tensor qmat = Tensor::identity(n);
    for (int64_t i = n - 3; i >= 0; --i) {
        double beta = betas[static_cast<std::size_t>(i)];
        if (beta == 0.0) continue;
        const std::vector<double>& u = us[static_cast<std::size_t>(i)];
        const int64_t lo = i + 1;
        std::fill(p.begin() + lo, p.end(), 0.0);
        for (int64_t r = lo; r < n; ++r) {
            double ur = u[static_cast<std::size_t>(r - lo)];
            if (ur == 0.0) continue;
            const double* qr = qmat.row(r);
            for (int64_t c = lo; c < n; ++c) p[static_cast<std::size_t>(c)] += ur * qr[c];
        }
        for (int64_t r = lo; r < n; ++r) {
            double bur = beta * u[static_cast<std::size_t>(r - lo)];
            if (bur == 0.0) continue;
            double* qr = qmat.row(r);
            for (int64_t c = lo; c < n; ++c) qr[c] -= bur * p[static_cast<std::size_t>(c)];
        }
    }
    Tensor zt = transpose(qmat);

    // Implicit-shift QL on the tridiagonal (d, e), rotations applied to the
    // rows of zt.
    const double eps = std::ldexp(1.0, -52);
    double f = 0.0;
    double tst1 = 0.0;
    for (int64_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::fabs(d[static_cast<std::size_t>(l)]) +
                                  std::fabs(e[static_cast<std::size_t>(l)]));
        int64_t m = l;
        while (m < n) {
            if (std::fabs(e[static_cast<std::size_t>(m)]) <= eps * tst1) break;
            ++m;
        }
        if (m > l) {
            int iter = 0;
            do {
                ++iter;
                if (iter > 64) {
                    throw numerical_error("sym_eig: QL failed to converge at eigenvalue " +
                                          std::to_string(l) + ", residual " +
                                          std::to_string(std::fabs(e[static_cast<std::size_t>(l)])));
                }
                double g = d[static_cast<std::size_t>(l)];
                double pp = (d[static_cast<std::size_t>(l + 1)] - g) /
                            (2.0 * e[static_cast<std::size_t>(l)]);
                double r = std::hypot(pp, 1.0);
                if (pp < 0.0) r = -r;
                d[static_cast<std::size_t>(l)] = e[static_cast<std::size_t>(l)] / (pp + r);
                d[static_cast<std::size_t>(l + 1)] = e[static_cast<std::size_t>(l)] * (pp + r);
                double dl1 = d[static_cast<std::size_t>(l + 1)];
                double h = g - d[static_cast<std::size_t>(l)];
                for (int64_t i = l + 2; i < n; ++i) d[static_cast<std::size_t>(i)] -= h;
                f += h;

                pp = d[static_cast<std::size_t>(m)];
                double c = 1.0, c2 = 1.0, c3 = 1.0;
                double el1 = e[static_cast<std::size_t>(l + 1)];
                double ss = 0.0, s2 = 0.0;
                for (int64_t i = m - 1; i >= l; --i) {
                    c3 = c2;
                    c2 = c;
                    s2 = ss;
                    double gg = c * e[static_cast<std::size_t>(i)];
                    double hh = c * pp;
                    double rr = std::hypot(pp, e[static_cast<std::size_t>(i)]);
                    e[static_cast<std::size_t>(i + 1)] = ss * rr;
                    ss = e[static_cast<std::size_t>(i)] / rr;
                    c = pp / rr;
                    pp = c * d[static_cast<std::size_t>(i)] - ss * gg;
                    d[static_cast<std::size_t>(i + 1)] =
                        hh + ss * (c * gg + ss * d[static_cast<std::size_t>(i)]);

                    double* zi = zt.row(i);
                    double* zi1 = zt.row(i + 1);
                    for (int64_t r2 = 0; r2 < n; ++r2) {
                        double hz = zi1[r2];
                        double zv = zi[r2];
                        zi1[r2] = ss * zv + c * hz;
                        zi[r2] = c * zv - ss * hz;
                    }
                }
                pp = -ss * s2 * c3 * el1 * e[static_cast<std::size_t>(l)] / dl1;
                e[static_cast<std::size_t>(l)] = ss * pp;
                d[static_cast<std::size_t>(l)] = c * pp;
            } while (std::fabs(e[static_cast<std::size_t>(l)]) > eps * tst1);
        }
        d[static_cast<std::size_t>(l)] += f;
        e[static_cast<std::size_t>(l)] = 0.0;
    }

    return finalize_basis(std::move(d), zt);
}

EigenBasis svd_oracle(const Tensor& s) {
    require_square(s, "svd_oracle");
    require_symmetric(s, "svd_oracle");
    const int64_t n = s.rows;

    // Golub-Kahan-Reinsch: bidiagonalize, accumulate U and V, then QR-iterate
    // on the bidiagonal. `a` carries U at the end.
    Tensor a = s;
    Tensor v(n, n);
    std::vector<double> w(static_cast<std::size_t>(n), 0.0);
    std::vector<double> rv1(static_cast<std::size_t>(n), 0.0);

    auto sign_of = [](double val, double ref) { return ref >= 0.0 ? std::fabs(val) : -std::fabs(val); };

    double g = 0.0, scale = 0.0, anorm = 0.0;
    int64_t l = 0;

    for (int64_t i = 0; i < n; ++i) {
        l = i + 1;
        rv1[static_cast<std::size_t>(i)] = scale * g;
        g = scale = 0.0;
        {
            for (int64_t k = i; k < n; ++k) scale += std::fabs(a.at(k, i));
            if (scale != 0.0) {
                double ssum = 0.0;
                for (int64_t k = i; k < n; ++k) {
                    a.at(k, i) /= scale;
                    ssum += a.at(k, i) * a.at(k, i);
                }
                double fval = a.at(i, i);
                g = -sign_of(std::sqrt(ssum), fval);
                double h = fval * g - ssum;
                a.at(i, i) = fval - g;
                for (int64_t j = l; j < n; ++j) {
                    double acc = 0.0;
                    for (int64_t k = i; k < n; ++k) acc += a.at(k, i) * a.at(k, j);
                    double fac = acc / h;
                    for (int64_t k = i; k < n; ++k) a.at(k, j) += fac * a.at(k, i);
                }
                for (int64_t k = i; k < n; ++k) a.at(k, i) *= scale;
            }
        }
        w[static_cast<std::size_t>(i)] = scale * g;
        g = scale = 0.0;
        if (i != n - 1) {
            for (int64_t k = l; k < n; ++k) scale += std::fabs(a.at(i, k));
            if (scale != 0.0) {
                double ssum = 0.0;
                for (int64_t k = l; k < n; ++k) {
                    a.at(i, k) /= scale;
                    ssum += a.at(i, k) * a.at(i, k);
                }
                double fval = a.at(i, l);
                g = -sign_of(std::sqrt(ssum), fval);
                double h = fval * g - ssum;
                a.at(i, l) = fval - g;
                for (int64_t k = l; k < n; ++k) rv1[static_cast<std::size_t>(k)] = a.at(i, k) / h;
                for (int64_t j = l; j < n; ++j) {
                    double acc = 0.0;
                    for (int64_t k = l; k < n; ++k) acc += a.at(j, k) * a.at(i, k);
                    for (int64_t k = l; k < n; ++k) a.at(j, k) += acc * rv1[static_cast<std::size_t>(k)];
                }
                for (int64_t k = l; k < n; ++k) a.at(i, k) *= scale;
            }
        }
        anorm = std::max(anorm, std::fabs(w[static_cast<std::size_t>(i)]) +
                                    std::fabs(rv1[static_cast<std::size_t>(i)]));
    }

    // Right-hand accumulation.
    for (int64_t i = n - 1; i >= 0; --i) {
        if (i < n - 1) {
            if (g != 0.0) {
                for (int64_t j = l; j < n; ++j) v.at(j, i) = (a.at(i, j) / a.at(i, l)) / g;
                for (int64_t j = l; j < n; ++j) {
                    double acc = 0.0;
                    for (int64_t k = l; k < n; ++k) acc += a.at(i, k) * v.at(k, j);
                    for (int64_t k = l; k < n; ++k) v.at(k, j) += acc * v.at(k, i);
                }
            }
            for (int64_t j = l; j < n; ++j) {
                v.at(i, j) = 0.0;
                v.at(j, i) = 0.0;
            }
        }
        v.at(i, i) = 1.0;
        g = rv1[static_cast<std::size_t>(i)];
        l = i;
    }

    // Left-hand accumulation.
    for (int64_t i = n - 1; i >= 0; --i) {
        l = i + 1;
        g = w[static_cast<std::size_t>(i)];
        for (int64_t j = l; j < n; ++j) a.at(i, j) = 0.0;
        if (g != 0.0) {
            g = 1.0 / g;
            for (int64_t j = l; j < n; ++j) {
                double acc = 0.0;
                for (int64_t k = l; k < n; ++k) acc += a.at(k, i) * a.at(k, j);
                double fac = (acc / a.at(i, i)) * g;
                for (int64_t k = i; k < n; ++k) a.at(k, j) += fac * a.at(k, i);
            }
            for (int64_t j = i; j < n; ++j) a.at(j, i) *= g;
        } else {
            for (int64_t j = i; j < n; ++j) a.at(j, i) = 0.0;
        }
        a.at(i, i) += 1.0;
    }

    // Diagonalization of the bidiagonal form. U and V are kept transposed
    // from here on so the plane rotations stream over contiguous rows.
    Tensor ut = transpose(a);
    Tensor vt = transpose(v);
    auto rotate_rows = [n](Tensor& t, int64_t r1, int64_t r2, double c, double ss) {
        double* a1 = t.row(r1);
        double* a2 = t.row(r2);
        for (int64_t j = 0; j < n; ++j) {
            double y = a1[j];
            double z = a2[j];
            a1[j] = y * c + z * ss;
            a2[j] = z * c - y * ss;
        }
    };

    for (int64_t k = n - 1; k >= 0; --k) {
        for (int iter = 1;; ++iter) {
            if (iter > 64) {
                throw numerical_error("svd_oracle: QR failed to converge at singular value " +
                                      std::to_string(k));
            }
            bool flag = true;
            int64_t ll = k;
            for (;; --ll) {
                if (ll == 0 || std::fabs(rv1[static_cast<std::size_t>(ll)]) + anorm == anorm) {
                    flag = false;
                    break;
                }
                if (std::fabs(w[static_cast<std::size_t>(ll - 1)]) + anorm == anorm) break;
            }
            if (flag) {
                double c = 0.0;
                double ss = 1.0;
                int64_t nm = ll - 1;
                for (int64_t i = ll; i <= k; ++i) {
                    double fval = ss * rv1[static_cast<std::size_t>(i)];
                    rv1[static_cast<std::size_t>(i)] = c * rv1[static_cast<std::size_t>(i)];
                    if (std::fabs(fval) + anorm == anorm) break;
                    g = w[static_cast<std::size_t>(i)];
                    double h = std::hypot(fval, g);
                    w[static_cast<std::size_t>(i)] = h;
                    h = 1.0 / h;
                    c = g * h;
                    ss = -fval * h;
                    rotate_rows(ut, nm, i, c, ss);
                }
            }
            double z = w[static_cast<std::size_t>(k)];
            if (ll == k) {
                if (z < 0.0) {
                    w[static_cast<std::size_t>(k)] = -z;
                    double* vk = vt.row(k);
                    for (int64_t j = 0; j < n; ++j) vk[j] = -vk[j];
                }
                break;
            }
            int64_t nm = k - 1;
            double x = w[static_cast<std::size_t>(ll)];
            double y = w[static_cast<std::size_t>(nm)];
            g = rv1[static_cast<std::size_t>(nm)];
            double h = rv1[static_cast<std::size_t>(k)];
            double fval = ((y - z) * (y + z) + (g - h) * (g + h)) / (2.0 * h * y);
            g = std::hypot(fval, 1.0);
            fval = ((x - z) * (x + z) + h * ((y / (fval + sign_of(g, fval))) - h)) / x;
            double c = 1.0, ss = 1.0;
            for (int64_t j = ll; j <= nm; ++j) {
                int64_t i = j + 1;
                g = rv1[static_cast<std::size_t>(i)];
                y = w[static_cast<std::size_t>(i)];
                h = ss * g;
                g = c * g;
                z = std::hypot(fval, h);
                rv1[static_cast<std::size_t>(j)] = z;
                c = fval / z;
                ss = h / z;
                fval = x * c + g * ss;
                g = g * c - x * ss;
                h = y * ss;
                y *= c;
                rotate_rows(vt, j, i, c, ss);
                z = std::hypot(fval, h);
                w[static_cast<std::size_t>(j)] = z;
                if (z != 0.0) {
                    z = 1.0 / z;
                    c = fval * z;
                    ss = h * z;
                }
                fval = c * g + ss * y;
                x = c * y - ss * g;
                rotate_rows(ut, j, i, c, ss);
            }
            rv1[static_cast<std::size_t>(ll)] = 0.0;
            rv1[static_cast<std::size_t>(k)] = fval;
            w[static_cast<std::size_t>(k)] = x;
        }
    }

    return finalize_basis(std::move(w), ut);
}

Projector projector_from_basis(const Tensor& u, int64_t k) {
    require_square(u, "projector_from_basis");
    const int64_t m = u.rows;
    if (k < 0 || k > m) {
        throw argument_error("projector_from_basis: k must lie in [0, " + std::to_string(m) +
                             "], got " + std::to_string(k));
    }
    Projector pr;
    pr.matrix = Tensor(m, m);
    for (int64_t r = 0; r < m; ++r) {
        const double* ur = u.row(r);
        for (int64_t c = r; c < m; ++c) {
            const double* uc = u.row(c);
            double acc = 0.0;
            for (int64_t j = k; j < m; ++j) acc += ur[j] * uc[j];
            pr.matrix.at(r, c) = acc;
            pr.matrix.at(c, r) = acc;
        }
    }
    return pr;
}

double orthonormality_residual(const Tensor& v) {
    Tensor vt = transpose(v);
    Tensor g = matmul_nt(vt, vt); // V^T * V
    for (int64_t i = 0; i < g.rows; ++i) g.at(i, i) -= 1.0;
    return max_abs(g);
}

double reconstruction_residual(const EigenBasis& eb, const Tensor& s) {
    const int64_t n = s.rows;
    Tensor scaled = eb.vectors;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) scaled.at(i, j) *= eb.values[static_cast<std::size_t>(j)];
    }
    Tensor recon = matmul_nt(scaled, eb.vectors);
    double num = 0.0;
    for (std::size_t i = 0; i < recon.data.size(); ++i) {
        double diff = recon.data[i] - s.data[i];
        num += diff * diff;
    }
    return std::sqrt(num) / std::max(1.0, frobenius_norm(s));
}

Tensor cholesky_lower(const Tensor& a) {
    require_square(a, "cholesky_lower");
    const int64_t n = a.rows;
    Tensor l(n, n);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j <= i; ++j) {
            double acc = a.at(i, j);
            const double* li = l.row(i);
            const double* lj = l.row(j);
            for (int64_t k = 0; k < j; ++k) acc -= li[k] * lj[k];
            if (i == j) {
                if (!(acc > 0.0)) {
                    throw numerical_error("cholesky: non-positive pivot at index " +
                                          std::to_string(i));
                }
                l.at(i, i) = std::sqrt(acc);
            } else {
                l.at(i, j) = acc / l.at(j, j);
            }
        }
    }
    return l;
}

} // namespace q2n
