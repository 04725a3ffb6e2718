#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "kcr/eig.hpp"
#include "kcr/errors.hpp"
#include "kcr/finite_diff.hpp"
#include "kcr/matrix.hpp"
#include "kcr/parallel.hpp"
#include "kcr/rng.hpp"

using namespace kcr;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Matrix random_symmetric(int n, Rng& rng) {
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double v = rng.normal();
            a(i, j) = v;
            a(j, i) = v;
        }
    return a;
}

} // namespace

TEST_CASE("matrix constructors and element access") {
    Matrix z(2, 3);
    CHECK(z.rows == 2);
    CHECK(z.cols == 3);
    for (double v : z.d) CHECK(v == 0.0);

    Matrix a = Matrix::from({{1.0, 2.0}, {3.0, 4.0}});
    CHECK(a(0, 1) == 2.0);
    CHECK(a(1, 0) == 3.0);
    CHECK(a.row(1)[1] == 4.0);

    Matrix i3 = Matrix::identity(3);
    CHECK(trace(i3) == 3.0);
    CHECK(frob_sq(i3) == 3.0);

    Matrix r = Matrix::row_vector({5.0, 6.0});
    CHECK(r.rows == 1);
    CHECK(r.cols == 2);
    CHECK(r(0, 1) == 6.0);
}

TEST_CASE("matmul agrees with a naive triple loop") {
    Rng rng(11, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + rng.below(17);
        const int k = 1 + rng.below(17);
        const int n = 1 + rng.below(17);
        Matrix a = rng.normal_matrix(m, k);
        Matrix b = rng.normal_matrix(k, n);
        // exercise the sparse fast path: zero out a band of the left operand
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j)
                if ((i + j) % 3 == 0) a(i, j) = 0.0;
        CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
        Matrix c = rng.normal_matrix(m, n);
        CHECK(max_abs_diff(matmul_at_b(a, c), naive_matmul(transpose(a), c)) <= 1e-12);
        Matrix bt = rng.normal_matrix(n, k);
        CHECK(max_abs_diff(matmul_a_bt(a, bt), naive_matmul(a, transpose(bt))) <= 1e-12);
    }
}

TEST_CASE("matmul rejects mismatched shapes") {
    Matrix a(2, 3), b(4, 2);
    CHECK_THROWS_AS(matmul(a, b), error);
    try {
        matmul(a, b);
    } catch (const error& e) {
        CHECK(e.kind() == error_kind::dimension);
        CHECK(e.exit_code() == 1);
    }
}

TEST_CASE("elementwise helpers") {
    Matrix a = Matrix::from({{1.0, -2.0}, {3.0, 0.5}});
    Matrix b = Matrix::from({{2.0, 2.0}, {-1.0, 4.0}});
    CHECK(max_abs_diff(add(a, b), Matrix::from({{3.0, 0.0}, {2.0, 4.5}})) == 0.0);
    CHECK(max_abs_diff(sub(a, b), Matrix::from({{-1.0, -4.0}, {4.0, -3.5}})) == 0.0);
    CHECK(max_abs_diff(scale(a, -2.0), Matrix::from({{-2.0, 4.0}, {-6.0, -1.0}})) == 0.0);
    CHECK(max_abs_diff(hadamard(a, b), Matrix::from({{2.0, -4.0}, {-3.0, 2.0}})) == 0.0);
    CHECK(max_abs(a) == 3.0);
    CHECK(frob_sq(a) == doctest::Approx(1.0 + 4.0 + 9.0 + 0.25).epsilon(1e-15));
    CHECK(frob_norm(a) == doctest::Approx(std::sqrt(14.25)).epsilon(1e-15));

    Matrix c = a;
    add_in_place(c, b);
    CHECK(max_abs_diff(c, add(a, b)) == 0.0);
    Matrix e = a;
    axpy_in_place(e, 0.5, b);
    CHECK(max_abs_diff(e, add(a, scale(b, 0.5))) == 0.0);
}

TEST_CASE("check_finite flags NaN and infinity as numeric errors") {
    Matrix a(1, 2);
    a(0, 0) = std::nan("");
    try {
        a.check_finite("unit");
        CHECK(false);
    } catch (const error& e) {
        CHECK(e.kind() == error_kind::numeric);
        CHECK(e.exit_code() == 2);
    }
    a(0, 0) = 1.0;
    CHECK_NOTHROW(a.check_finite("unit"));
}

TEST_CASE("sym_eig on a diagonal matrix returns the diagonal sorted descending") {
    Matrix a = Matrix::from({{3.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 0.0}});
    EigResult e = sym_eig(a);
    REQUIRE(e.eigenvalues.size() == 3);
    CHECK(e.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(e.eigenvalues[2]) <= 1e-12);
}

TEST_CASE("sym_eig worked 2x2 example") {
    // [[2,1],[1,2]] has eigenpairs (3, (1,1)/sqrt 2) and (1, (1,-1)/sqrt 2)
    Matrix a = Matrix::from({{2.0, 1.0}, {1.0, 2.0}});
    EigResult e = sym_eig(a);
    CHECK(e.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
    const double s = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(std::abs(e.vectors(0, 0)) - s) <= 1e-10);
    CHECK(std::abs(std::abs(e.vectors(1, 0)) - s) <= 1e-10);
    CHECK(e.vectors(0, 0) * e.vectors(1, 0) > 0.0);  // same sign on the top mode
    CHECK(e.vectors(0, 1) * e.vectors(1, 1) < 0.0);  // opposite sign on the second
}

TEST_CASE("sym_eig properties on random symmetric matrices") {
    Rng rng(7, 0);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 1 + rng.below(64);
        Matrix a = random_symmetric(n, rng);
        EigResult e = sym_eig(a);

        for (size_t i = 1; i < e.eigenvalues.size(); ++i)
            CHECK(e.eigenvalues[i - 1] >= e.eigenvalues[i]);

        Matrix vtv = matmul_at_b(e.vectors, e.vectors);
        CHECK(max_abs_diff(vtv, Matrix::identity(n)) <= 1e-10);

        Matrix lam(n, n);
        for (int i = 0; i < n; ++i) lam(i, i) = e.eigenvalues[i];
        Matrix recon = matmul(matmul(e.vectors, lam), transpose(e.vectors));
        const double scale_bound = std::max(1.0, max_abs(a));
        CHECK(max_abs_diff(recon, a) <= 1e-9 * scale_bound);

        const double eig_sum = std::accumulate(e.eigenvalues.begin(), e.eigenvalues.end(), 0.0);
        CHECK(eig_sum == doctest::Approx(trace(a)).epsilon(1e-9));
    }
}

TEST_CASE("sym_eig rejects asymmetric input") {
    Matrix a = Matrix::from({{1.0, 2.0}, {0.0, 1.0}});
    CHECK_THROWS_AS(sym_eig(a), error);
}

TEST_CASE("pseudo_inverse satisfies the Moore-Penrose identities on rank-deficient PSD input") {
    Rng rng(19, 0);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 2 + rng.below(12);
        const int r = 1 + rng.below(n);
        Matrix f = rng.normal_matrix(n, r);
        Matrix a = matmul_a_bt(f, f);  // PSD, rank at most r
        Matrix p = pseudo_inverse(a);

        Matrix apa = matmul(matmul(a, p), a);
        Matrix pap = matmul(matmul(p, a), p);
        const double s = std::max(1.0, max_abs(a));
        CHECK(max_abs_diff(apa, a) <= 1e-8 * s);
        CHECK(max_abs_diff(pap, p) <= 1e-8 * std::max(1.0, max_abs(p)));
        Matrix ap = matmul(a, p);
        CHECK(max_abs_diff(ap, transpose(ap)) <= 1e-8);
    }
}

TEST_CASE("pseudo_inverse of identity is identity") {
    Matrix p = pseudo_inverse(Matrix::identity(4));
    CHECK(max_abs_diff(p, Matrix::identity(4)) <= 1e-12);
}

TEST_CASE("rng streams are reproducible and independent") {
    Rng a(42, 3), b(42, 3), c(42, 4);
    bool streams_differ = false;
    for (int i = 0; i < 64; ++i) {
        const uint64_t va = a.next_u64();
        CHECK(va == b.next_u64());
        if (va != c.next_u64()) streams_differ = true;
    }
    CHECK(streams_differ);

    Rng f1(42, 3);
    Rng f2(42, 3);
    Rng g1 = f1.fork(9);
    Rng g2 = f2.fork(9);
    for (int i = 0; i < 16; ++i) CHECK(g1.next_u64() == g2.next_u64());
}

TEST_CASE("uniform and below stay in range") {
    Rng rng(5, 0);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double v = rng.uniform(-2.0, 3.0);
        CHECK(v >= -2.0);
        CHECK(v < 3.0);
        const int k = rng.below(17);
        CHECK(k >= 0);
        CHECK(k < 17);
    }
}

TEST_CASE("normal draws have the right first two moments") {
    Rng rng(9, 0);
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) <= 0.02);
    CHECK(std::abs(var - 1.0) <= 0.03);
}

TEST_CASE("gumbel draws match the Euler-Mascheroni mean") {
    Rng rng(13, 0);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rng.gumbel();
    CHECK(std::abs(sum / n - 0.5772156649) <= 0.02);
}

TEST_CASE("gumbel transform of a pinned uniform is finite at the clamp edges") {
    CHECK(std::isfinite(gumbel_from_uniform(0.0)));
    CHECK(std::isfinite(gumbel_from_uniform(1.0)));
    CHECK(gumbel_from_uniform(std::exp(-1.0)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sample_without_replacement returns sorted unique indices") {
    Rng rng(21, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + rng.below(40);
        const int k = 1 + rng.below(n);
        std::vector<int> s = rng.sample_without_replacement(n, k);
        REQUIRE(static_cast<int>(s.size()) == k);
        CHECK(std::is_sorted(s.begin(), s.end()));
        std::set<int> uniq(s.begin(), s.end());
        CHECK(uniq.size() == s.size());
        CHECK(*s.begin() >= 0);
        CHECK(s.back() < n);
    }
    std::vector<int> all = rng.sample_without_replacement(6, 6);
    CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("shuffle is a seeded permutation") {
    std::vector<int> v(32);
    std::iota(v.begin(), v.end(), 0);
    std::vector<int> w = v;
    Rng r1(3, 100), r2(3, 100);
    r1.shuffle(v);
    r2.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted_v = v;
    std::sort(sorted_v.begin(), sorted_v.end());
    std::vector<int> base(32);
    std::iota(base.begin(), base.end(), 0);
    CHECK(sorted_v == base);
    CHECK(v != base);  // 32! makes a fixed-point shuffle effectively impossible
}

TEST_CASE("matrix-valued rng helpers are shape-correct and reproducible") {
    Rng a(77, 2), b(77, 2);
    Matrix ma = a.normal_matrix(3, 5);
    Matrix mb = b.normal_matrix(3, 5);
    CHECK(ma.rows == 3);
    CHECK(ma.cols == 5);
    CHECK(max_abs_diff(ma, mb) == 0.0);
    Matrix ua = a.uniform_matrix(2, 2, -0.5, 0.5);
    CHECK(max_abs(ua) <= 0.5);
    Matrix ga = a.gumbel_matrix(1, 4);
    CHECK(ga.cols == 4);
    for (double v : ga.d) CHECK(std::isfinite(v));
}

TEST_CASE("finite_diff_grad recovers the gradient of the squared Frobenius norm") {
    Rng rng(31, 0);
    Matrix x = rng.normal_matrix(3, 4);
    Matrix g = finite_diff_grad([](const Matrix& m) { return frob_sq(m); }, x);
    CHECK(max_abs_diff(g, scale(x, 2.0)) <= 1e-6);
}

TEST_CASE("finite_diff_grad recovers the gradient of the trace") {
    Rng rng(33, 0);
    Matrix x = rng.normal_matrix(4, 4);
    Matrix g = finite_diff_grad([](const Matrix& m) { return trace(m); }, x);
    CHECK(max_abs_diff(g, Matrix::identity(4)) <= 1e-7);
}

TEST_CASE("parallel_for covers every index exactly once") {
    const int n = 997;
    std::vector<int> hits(n, 0);
    parallel_for(n, [&](int i) { hits[static_cast<size_t>(i)] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK(worker_count() >= 1);
}
