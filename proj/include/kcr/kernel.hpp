#pragma once

#include <vector>

#include "kcr/matrix.hpp"
#include "kcr/rng.hpp"

namespace kcr {

/// Eigenvalues of the normalized gram matrix K_n = (1/n) F F^T, descending
/// and clamped to be non-negative. r0 caps the usable rank: min(n, d_feat)
/// when the factor F is known, n otherwise.
struct KernelSpectrum {
    std::vector<double> eigenvalues;
    int n = 0;
    int r0 = 0;
};

/// Landmark-based low-rank factorization of the feature gram. u_tilde holds
/// approximate top eigenvectors of K_n; at full landmarks they reduce to the
/// exact ones. p caches F^T u_tilde so per-row projections cost O(d * r).
/// Immutable after construction; safe to share across threads.
struct NystromFactors {
    std::vector<int> landmark_indices;
    Matrix q;                   // m_land x r
    std::vector<double> lambda; // landmark gram eigenvalues, descending, > 0
    Matrix u_tilde;             // n x r
    Matrix p;                   // d_feat x r
    int epoch_stamp = 0;

    int rank() const { return u_tilde.cols; }
};

/// Generalization-bound report with unit constants. lower/upper bracket the
/// population squared loss as train_residual -/+ (kc_used + x/n).
struct BoundReport {
    double train_residual = 0.0;
    double kc = 0.0;
    double akc = 0.0;
    double confidence_x = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    int epoch = 0;
};

struct KcResult {
    double value = 0.0;
    int argmin_h = 0;
};

// K = F F^T; divided by n when normalize is set.
Matrix gram(const Matrix& f, bool normalize);

// Spectrum of a symmetric PSD matrix; r0 = n (no factor information).
KernelSpectrum spectrum(const Matrix& k_n);

// Spectrum of (1/n) F F^T computed on the smaller-side gram; r0 = min(n, d).
KernelSpectrum spectrum_from_features(const Matrix& f);

// min over h in {0..r0} of h/n + sqrt(suffix_h / n); ties keep the smaller h.
KcResult kc_exact(const KernelSpectrum& spec);

// Suffix eigenvalue sum beyond index r: tnn_exact(spec, 0) = tr(K_n),
// tnn_exact(spec, r0) = 0.
double tnn_exact(const KernelSpectrum& spec, int r);

// Landmark factorization with explicit indices (distinct, in [0, n)).
// Eigenvalues of the landmark gram at or below 1e-12 of its largest are
// dropped, shrinking the returned rank below r0 without error.
NystromFactors nystrom(const Matrix& f, std::vector<int> landmark_indices, int r0);

// Same, with m_land landmarks sampled uniformly without replacement.
NystromFactors nystrom(const Matrix& f, int m_land, int r0, Rng& rng);

// (1/n) (|F|_F^2 - |F^T U|_F^2), clamped at 0 from below.
double tnn_approx(const Matrix& f, const Matrix& u_r);

// Gradient of the unclamped surrogate in F: (2/n) (F - U U^T F).
Matrix tnn_approx_grad(const Matrix& f, const Matrix& u_r);

// Approximate kernel complexity from cached projections: per-column scores
// s_j = |F^T u_j|^2 / n, suffix sums clamped at 0, minimized over h.
KcResult akc(const Matrix& f, const NystromFactors& factors);

struct GdProbeResult {
    Matrix w1;                       // d_feat x C after t steps
    std::vector<double> residual_sq; // |F W1^(k) - Y|_F^2 for k = 0..t
};

// Explicit gradient descent on the linear head from zero initialization:
// W1 <- W1 - (eta/n) F^T (F W1 - Y).
GdProbeResult gd_linear_probe(const Matrix& f, const Matrix& y, double eta_step, int t);

// Spectral closed form of the same residual: sum_i (1 - eta lambda_i)^(2t)
// |v_i^T Y|^2 over the full eigenbasis, so eigenvalue-0 directions persist.
double gd_residual_closed_form(const Matrix& k_n, const Matrix& y, double eta_step, int t);

BoundReport kcr_bounds(double train_residual, double kc_used, int n, double x);

} // namespace kcr
