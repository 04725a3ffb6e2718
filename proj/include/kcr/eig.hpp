#pragma once

#include <vector>

#include "kcr/matrix.hpp"

namespace kcr {

struct EigResult {
    std::vector<double> eigenvalues; // descending
    Matrix vectors;                  // orthonormal columns, vectors.col(i) pairs with eigenvalues[i]
};

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
/// The input is symmetrized internally (averaged with its transpose) and must
/// satisfy the relative asymmetry tolerance 1e-10. Eigenvalues come back
/// sorted descending; ties keep the lower original index first.
EigResult sym_eig(const Matrix& a);

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via sym_eig.
/// Eigenvalues at or below tol are treated as zero. tol < 0 selects the
/// default 1e-10 * largest eigenvalue.
Matrix pseudo_inverse(const Matrix& a, double tol = -1.0);

} // namespace kcr
