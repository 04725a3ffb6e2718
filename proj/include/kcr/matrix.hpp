#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace kcr {

/// Dense row-major matrix of 64-bit reals. The single numeric carrier of the
/// project: features, gram matrices, eigenvectors, label matrices, parameter
/// tensors all live here. Entries are expected to stay finite; operations that
/// can produce non-finite values check and throw a numeric error.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> d;

    Matrix() = default;
    Matrix(int r, int c);
    Matrix(int r, int c, std::vector<double> data);

    static Matrix from(std::initializer_list<std::initializer_list<double>> lines);
    static Matrix identity(int n);
    static Matrix row_vector(const std::vector<double>& v);

    double& operator()(int i, int j) { return d[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return d[static_cast<size_t>(i) * cols + j]; }
    double* row(int i) { return d.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return d.data() + static_cast<size_t>(i) * cols; }

    size_t size() const { return d.size(); }
    bool empty() const { return d.empty(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v);
    void check_finite(const std::string& context) const;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B without materializing the transpose
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// C = A * B^T without materializing the transpose
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);

void add_in_place(Matrix& a, const Matrix& b);
void axpy_in_place(Matrix& a, double s, const Matrix& b); // a += s * b

double frob_sq(const Matrix& a);
double frob_norm(const Matrix& a);
double trace(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

} // namespace kcr
