#include "kcr/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "kcr/errors.hpp"
#include "kcr/parallel.hpp"

namespace kcr {

Matrix::Matrix(int r, int c) : rows(r), cols(c) {
    if (r < 0 || c < 0) {
        throw_dimension("matrix dimensions must be non-negative, got " +
                        std::to_string(r) + "x" + std::to_string(c));
    }
    d.assign(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0);
}

Matrix::Matrix(int r, int c, std::vector<double> data) : rows(r), cols(c), d(std::move(data)) {
    if (d.size() != static_cast<size_t>(r) * static_cast<size_t>(c)) {
        throw_dimension("matrix data length " + std::to_string(d.size()) +
                        " does not match " + std::to_string(r) + "x" + std::to_string(c));
    }
    check_finite("matrix construction");
}

Matrix Matrix::from(std::initializer_list<std::initializer_list<double>> lines) {
    const int r = static_cast<int>(lines.size());
    const int c = r > 0 ? static_cast<int>(lines.begin()->size()) : 0;
    Matrix m(r, c);
    int i = 0;
    for (const auto& line : lines) {
        if (static_cast<int>(line.size()) != c) {
            throw_dimension("ragged initializer for matrix");
        }
        int j = 0;
        for (double v : line) m(i, j++) = v;
        ++i;
    }
    m.check_finite("matrix construction");
    return m;
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::row_vector(const std::vector<double>& v) {
    Matrix m(1, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), m.d.begin());
    return m;
}

void Matrix::fill(double v) { std::fill(d.begin(), d.end(), v); }

void Matrix::check_finite(const std::string& context) const {
    for (size_t i = 0; i < d.size(); ++i) {
        if (!std::isfinite(d[i])) {
            throw_numeric("non-finite entry at flat index " + std::to_string(i) +
                          " (" + context + ")");
        }
    }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw_dimension(std::string(op) + ": shape mismatch " +
                        std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                        std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw_dimension("matmul: inner dimensions disagree, " +
                        std::to_string(a.cols) + " vs " + std::to_string(b.rows));
    }
    Matrix c(a.rows, b.cols);
    const int n = b.cols;
    parallel_for(a.rows, [&](int i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ar[k];
            if (aik == 0.0) continue;
            const double* br = b.row(k);
            for (int j = 0; j < n; ++j) cr[j] += aik * br[j];
        }
    });
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) {
        throw_dimension("matmul_at_b: row counts disagree, " +
                        std::to_string(a.rows) + " vs " + std::to_string(b.rows));
    }
    Matrix c(a.cols, b.cols);
    const int n = b.cols;
    // c[i,j] = sum_r a[r,i] * b[r,j]; accumulate row-blocks to keep writes disjoint.
    parallel_for(a.cols, [&](int i) {
        double* cr = c.row(i);
        for (int r = 0; r < a.rows; ++r) {
            const double ari = a(r, i);
            if (ari == 0.0) continue;
            const double* br = b.row(r);
            for (int j = 0; j < n; ++j) cr[j] += ari * br[j];
        }
    });
    return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) {
        throw_dimension("matmul_a_bt: column counts disagree, " +
                        std::to_string(a.cols) + " vs " + std::to_string(b.cols));
    }
    Matrix c(a.rows, b.rows);
    parallel_for(a.rows, [&](int i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* br = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += ar[k] * br[k];
            cr[j] = s;
        }
    });
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    for (size_t i = 0; i < c.d.size(); ++i) c.d[i] += b.d[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    for (size_t i = 0; i < c.d.size(); ++i) c.d[i] -= b.d[i];
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.d) v *= s;
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (size_t i = 0; i < c.d.size(); ++i) c.d[i] *= b.d[i];
    return c;
}

void add_in_place(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add_in_place");
    for (size_t i = 0; i < a.d.size(); ++i) a.d[i] += b.d[i];
}

void axpy_in_place(Matrix& a, double s, const Matrix& b) {
    require_same_shape(a, b, "axpy_in_place");
    for (size_t i = 0; i < a.d.size(); ++i) a.d[i] += s * b.d[i];
}

double frob_sq(const Matrix& a) {
    double s = 0.0;
    for (double v : a.d) s += v * v;
    return s;
}

double frob_norm(const Matrix& a) { return std::sqrt(frob_sq(a)); }

double trace(const Matrix& a) {
    const int n = std::min(a.rows, a.cols);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a(i, i);
    return s;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.d) m = std::max(m, std::fabs(v));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw_dimension("max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (size_t i = 0; i < a.d.size(); ++i) m = std::max(m, std::fabs(a.d[i] - b.d[i]));
    return m;
}

} // namespace kcr
