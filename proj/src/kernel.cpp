#include "kcr/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "kcr/eig.hpp"
#include "kcr/errors.hpp"

namespace kcr {

namespace {

KernelSpectrum clamp_spectrum(std::vector<double> eigenvalues, int n, int r0) {
    const double lmax = eigenvalues.empty() ? 0.0 : std::max(eigenvalues.front(), 0.0);
    const double tol = 1e-10 * std::max(1.0, lmax);
    for (double& v : eigenvalues) {
        if (v < -tol) {
            throw_numeric("spectrum: eigenvalue " + std::to_string(v) +
                          " below PSD tolerance");
        }
        if (v < 0.0) v = 0.0;
    }
    KernelSpectrum spec;
    spec.eigenvalues = std::move(eigenvalues);
    spec.n = n;
    spec.r0 = r0;
    return spec;
}

} // namespace

Matrix gram(const Matrix& f, bool normalize) {
    if (f.rows < 1 || f.cols < 1) {
        throw_dimension("gram: features are " + std::to_string(f.rows) + "x" +
                        std::to_string(f.cols) + ", need at least 1x1");
    }
    Matrix k = matmul_a_bt(f, f);
    if (normalize) {
        const double inv_n = 1.0 / static_cast<double>(f.rows);
        for (double& v : k.d) v *= inv_n;
    }
    return k;
}

KernelSpectrum spectrum(const Matrix& k_n) {
    const EigResult eig = sym_eig(k_n);
    return clamp_spectrum(eig.eigenvalues, k_n.rows, k_n.rows);
}

KernelSpectrum spectrum_from_features(const Matrix& f) {
    if (f.rows < 1 || f.cols < 1) {
        throw_dimension("spectrum_from_features: empty feature matrix");
    }
    const int n = f.rows;
    const int d = f.cols;
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix g = (n <= d) ? matmul_a_bt(f, f) : matmul_at_b(f, f);
    for (double& v : g.d) v *= inv_n;
    const EigResult eig = sym_eig(g);
    return clamp_spectrum(eig.eigenvalues, n, std::min(n, d));
}

KcResult kc_exact(const KernelSpectrum& spec) {
    const int r0 = spec.r0;
    if (static_cast<int>(spec.eigenvalues.size()) != r0) {
        throw_argument("kc_exact: spectrum holds " +
                       std::to_string(spec.eigenvalues.size()) +
                       " eigenvalues but r0 = " + std::to_string(r0));
    }
    if (spec.n < 1) throw_argument("kc_exact: sample count must be positive");
    const double n = static_cast<double>(spec.n);

    // suffix[h] = sum of eigenvalues strictly beyond index h
    std::vector<double> suffix(static_cast<size_t>(r0) + 1, 0.0);
    for (int h = r0 - 1; h >= 0; --h) {
        suffix[static_cast<size_t>(h)] =
            suffix[static_cast<size_t>(h) + 1] + spec.eigenvalues[static_cast<size_t>(h)];
    }

    KcResult best{std::numeric_limits<double>::infinity(), 0};
    for (int h = 0; h <= r0; ++h) {
        const double tail = std::max(suffix[static_cast<size_t>(h)], 0.0);
        const double value = static_cast<double>(h) / n + std::sqrt(tail / n);
        if (value < best.value) {
            best.value = value;
            best.argmin_h = h;
        }
    }
    return best;
}

double tnn_exact(const KernelSpectrum& spec, int r) {
    if (r < 0 || r > spec.r0) {
        throw_argument("tnn_exact: r = " + std::to_string(r) + " outside [0, " +
                       std::to_string(spec.r0) + "]");
    }
    double s = 0.0;
    for (int i = spec.r0 - 1; i >= r; --i) s += spec.eigenvalues[static_cast<size_t>(i)];
    return s;
}

NystromFactors nystrom(const Matrix& f, std::vector<int> landmark_indices, int r0) {
    const int n = f.rows;
    const int m = static_cast<int>(landmark_indices.size());
    if (n < 1 || f.cols < 1) throw_dimension("nystrom: empty feature matrix");
    if (m < 1 || m > n) {
        throw_argument("nystrom: landmark count " + std::to_string(m) +
                       " outside [1, " + std::to_string(n) + "]");
    }
    if (r0 < 1 || r0 > m) {
        throw_argument("nystrom: rank request " + std::to_string(r0) +
                       " outside [1, " + std::to_string(m) + "]");
    }
    std::vector<int> sorted = landmark_indices;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < m; ++i) {
        if (sorted[static_cast<size_t>(i)] < 0 || sorted[static_cast<size_t>(i)] >= n) {
            throw_argument("nystrom: landmark index out of range");
        }
        if (i > 0 && sorted[static_cast<size_t>(i)] == sorted[static_cast<size_t>(i) - 1]) {
            throw_argument("nystrom: duplicate landmark index " +
                           std::to_string(sorted[static_cast<size_t>(i)]));
        }
    }

    Matrix f_land(m, f.cols);
    for (int i = 0; i < m; ++i) {
        const double* src = f.row(landmark_indices[static_cast<size_t>(i)]);
        std::copy(src, src + f.cols, f_land.row(i));
    }

    const Matrix w = matmul_a_bt(f_land, f_land);
    const EigResult eig = sym_eig(w);
    const double lmax = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.front();
    if (!(lmax > 0.0)) {
        throw_degenerate("nystrom: degenerate landmark gram (all eigenvalues zero)");
    }

    int rank = 0;
    while (rank < r0 && eig.eigenvalues[static_cast<size_t>(rank)] > 1e-12 * lmax) ++rank;
    if (rank < 1) {
        throw_degenerate("nystrom: degenerate landmark gram (no usable eigenvalue)");
    }

    NystromFactors out;
    out.landmark_indices = std::move(landmark_indices);
    out.lambda.assign(eig.eigenvalues.begin(), eig.eigenvalues.begin() + rank);
    out.q = Matrix(m, rank);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < rank; ++j) out.q(i, j) = eig.vectors(i, j);

    // u_j = sqrt(m/n) / lambda_j * C q_j with C = F F_land^T; at full
    // landmarks this collapses to the exact unit eigenvectors of K_n.
    const Matrix c = matmul_a_bt(f, f_land);
    Matrix u = matmul(c, out.q);
    const double root = std::sqrt(static_cast<double>(m) / static_cast<double>(n));
    for (int j = 0; j < rank; ++j) {
        const double s = root / out.lambda[static_cast<size_t>(j)];
        for (int i = 0; i < n; ++i) u(i, j) *= s;
    }
    u.check_finite("nystrom eigenvector estimate");
    out.p = matmul_at_b(f, u);
    out.u_tilde = std::move(u);
    return out;
}

NystromFactors nystrom(const Matrix& f, int m_land, int r0, Rng& rng) {
    if (m_land < 1 || m_land > f.rows) {
        throw_argument("nystrom: landmark count " + std::to_string(m_land) +
                       " outside [1, " + std::to_string(f.rows) + "]");
    }
    return nystrom(f, rng.sample_without_replacement(f.rows, m_land), r0);
}

double tnn_approx(const Matrix& f, const Matrix& u_r) {
    if (u_r.rows != f.rows && u_r.cols != 0) {
        throw_dimension("tnn_approx: U has " + std::to_string(u_r.rows) +
                        " rows, features have " + std::to_string(f.rows));
    }
    if (f.rows < 1) throw_dimension("tnn_approx: empty feature matrix");
    const double n = static_cast<double>(f.rows);
    const double projected = (u_r.cols == 0) ? 0.0 : frob_sq(matmul_at_b(f, u_r));
    return std::max(0.0, (frob_sq(f) - projected) / n);
}

Matrix tnn_approx_grad(const Matrix& f, const Matrix& u_r) {
    if (u_r.rows != f.rows && u_r.cols != 0) {
        throw_dimension("tnn_approx_grad: U has " + std::to_string(u_r.rows) +
                        " rows, features have " + std::to_string(f.rows));
    }
    if (f.rows < 1) throw_dimension("tnn_approx_grad: empty feature matrix");
    const double two_over_n = 2.0 / static_cast<double>(f.rows);
    if (u_r.cols == 0) return scale(f, two_over_n);
    const Matrix ut_f = matmul_at_b(u_r, f);
    Matrix g = matmul(u_r, ut_f);
    for (size_t i = 0; i < g.d.size(); ++i) g.d[i] = two_over_n * (f.d[i] - g.d[i]);
    return g;
}

KcResult akc(const Matrix& f, const NystromFactors& factors) {
    if (factors.u_tilde.rows != f.rows) {
        throw_dimension("akc: factors built for n = " +
                        std::to_string(factors.u_tilde.rows) + ", features have n = " +
                        std::to_string(f.rows));
    }
    if (factors.p.rows != f.cols) {
        throw_dimension("akc: projection cache built for d = " +
                        std::to_string(factors.p.rows) + ", features have d = " +
                        std::to_string(f.cols));
    }
    const int r = factors.rank();
    const double n = static_cast<double>(f.rows);
    const double trace_kn = frob_sq(f) / n;

    std::vector<double> score(static_cast<size_t>(r), 0.0);
    for (int j = 0; j < r; ++j) {
        double s = 0.0;
        for (int i = 0; i < factors.p.rows; ++i) s += factors.p(i, j) * factors.p(i, j);
        score[static_cast<size_t>(j)] = s / n;
    }

    KcResult best{std::numeric_limits<double>::infinity(), 0};
    double captured = 0.0;
    for (int h = 0; h <= r; ++h) {
        if (h > 0) captured += score[static_cast<size_t>(h) - 1];
        const double tail = std::max(0.0, trace_kn - captured);
        const double value = static_cast<double>(h) / n + std::sqrt(tail / n);
        if (value < best.value) {
            best.value = value;
            best.argmin_h = h;
        }
    }
    return best;
}

GdProbeResult gd_linear_probe(const Matrix& f, const Matrix& y, double eta_step, int t) {
    if (f.rows != y.rows) {
        throw_dimension("gd_linear_probe: feature rows " + std::to_string(f.rows) +
                        " vs label rows " + std::to_string(y.rows));
    }
    if (f.rows < 1 || f.cols < 1 || y.cols < 1) {
        throw_dimension("gd_linear_probe: empty operands");
    }
    if (eta_step < 0.0) throw_argument("gd_linear_probe: negative step size");
    if (t < 0) throw_argument("gd_linear_probe: negative iteration count");

    const double step_over_n = eta_step / static_cast<double>(f.rows);
    GdProbeResult out;
    out.w1 = Matrix(f.cols, y.cols);
    out.residual_sq.reserve(static_cast<size_t>(t) + 1);

    Matrix residual = scale(y, -1.0); // F W - Y at W = 0
    out.residual_sq.push_back(frob_sq(residual));
    for (int k = 1; k <= t; ++k) {
        const Matrix grad = matmul_at_b(f, residual);
        axpy_in_place(out.w1, -step_over_n, grad);
        residual = sub(matmul(f, out.w1), y);
        const double r2 = frob_sq(residual);
        if (!(r2 <= 1e12)) {
            throw_numeric("gd_linear_probe: diverged at iteration " + std::to_string(k) +
                          " (residual " + std::to_string(r2) + "), reduce the step size");
        }
        out.residual_sq.push_back(r2);
    }
    return out;
}

double gd_residual_closed_form(const Matrix& k_n, const Matrix& y, double eta_step, int t) {
    if (k_n.rows != y.rows) {
        throw_dimension("gd_residual_closed_form: kernel rows " + std::to_string(k_n.rows) +
                        " vs label rows " + std::to_string(y.rows));
    }
    if (t < 0) throw_argument("gd_residual_closed_form: negative iteration count");
    const EigResult eig = sym_eig(k_n);
    if (!eig.eigenvalues.empty() && eta_step * eig.eigenvalues.front() >= 2.0) {
        std::fprintf(stderr,
                     "warning: eta_step * lambda_max = %.6g >= 2, iteration may diverge\n",
                     eta_step * eig.eigenvalues.front());
    }
    // Full eigenbasis: zero eigenvalues contribute (1 - 0)^(2t) = 1, so the
    // nullspace component of Y never decays.
    const Matrix vt_y = matmul_at_b(eig.vectors, y);
    double total = 0.0;
    for (int i = 0; i < vt_y.rows; ++i) {
        const double base = 1.0 - eta_step * eig.eigenvalues[static_cast<size_t>(i)];
        const double factor = std::pow(base * base, static_cast<double>(t));
        double row_sq = 0.0;
        const double* row = vt_y.row(i);
        for (int j = 0; j < vt_y.cols; ++j) row_sq += row[j] * row[j];
        total += factor * row_sq;
    }
    return total;
}

BoundReport kcr_bounds(double train_residual, double kc_used, int n, double x) {
    if (train_residual < 0.0) throw_argument("kcr_bounds: negative training residual");
    if (kc_used < 0.0) throw_argument("kcr_bounds: negative kernel complexity");
    if (n < 1) throw_argument("kcr_bounds: sample count must be positive");
    if (!(x > 0.0)) throw_argument("kcr_bounds: confidence parameter must be positive");

    BoundReport report;
    report.train_residual = train_residual;
    report.kc = kc_used;
    report.akc = kc_used;
    report.confidence_x = x;
    // upper is derived from lower so that upper == lower + 2 * (kc_used + x/n)
    // holds bitwise when recomputed with the same expression.
    const double half_width = kc_used + x / static_cast<double>(n);
    report.lower = train_residual - half_width;
    report.upper = report.lower + 2.0 * half_width;
    return report;
}

} // namespace kcr
