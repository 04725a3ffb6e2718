#include "kcr/eig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kcr/errors.hpp"

namespace kcr {

namespace {

double off_diag_sq(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.rows; ++i)
        for (int j = i + 1; j < a.cols; ++j) s += 2.0 * a(i, j) * a(i, j);
    return s;
}

} // namespace

EigResult sym_eig(const Matrix& input) {
    if (input.rows != input.cols) {
        throw_dimension("sym_eig: matrix is " + std::to_string(input.rows) + "x" +
                        std::to_string(input.cols) + ", expected square");
    }
    input.check_finite("sym_eig input");
    const int n = input.rows;

    double asym = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) asym = std::max(asym, std::fabs(input(i, j) - input(j, i)));
    const double scale = std::max(max_abs(input), 1e-300);
    if (asym > 1e-10 * scale) {
        throw_numeric("sym_eig: asymmetry " + std::to_string(asym) +
                      " exceeds tolerance for scale " + std::to_string(scale));
    }

    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
    Matrix v = Matrix::identity(n);

    const double total = frob_sq(a);
    const double stop = std::max(total * 1e-28, 1e-300);
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps && off_diag_sq(a) > stop; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                if (std::fabs(apq) < 1e-300) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return a(i, i) > a(j, j); });

    EigResult result;
    result.eigenvalues.resize(static_cast<size_t>(n));
    result.vectors = Matrix(n, n);
    for (int col = 0; col < n; ++col) {
        const int src = order[static_cast<size_t>(col)];
        result.eigenvalues[static_cast<size_t>(col)] = a(src, src);
        for (int row = 0; row < n; ++row) result.vectors(row, col) = v(row, src);
    }
    return result;
}

Matrix pseudo_inverse(const Matrix& a, double tol) {
    const EigResult eig = sym_eig(a);
    const double lmax = eig.eigenvalues.empty() ? 0.0 : std::fabs(eig.eigenvalues.front());
    if (tol < 0.0) tol = 1e-10 * lmax;

    const int n = a.rows;
    Matrix scaled(n, n);
    for (int j = 0; j < n; ++j) {
        const double lambda = eig.eigenvalues[static_cast<size_t>(j)];
        const double inv = lambda > tol ? 1.0 / lambda : 0.0;
        for (int i = 0; i < n; ++i) scaled(i, j) = eig.vectors(i, j) * inv;
    }
    return matmul_a_bt(scaled, eig.vectors);
}

} // namespace kcr
