#include "kcr/finite_diff.hpp"

#include <cmath>
#include <string>

#include "kcr/errors.hpp"

namespace kcr {

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double step) {
    if (step <= 0.0) throw_argument("finite_diff_grad: step must be positive");
    Matrix grad(x.rows, x.cols);
    Matrix probe = x;
    for (int i = 0; i < x.rows; ++i) {
        for (int j = 0; j < x.cols; ++j) {
            const double orig = probe(i, j);
            const double h = step * (1.0 + std::fabs(orig));
            probe(i, j) = orig + h;
            const double fp = f(probe);
            probe(i, j) = orig - h;
            const double fm = f(probe);
            probe(i, j) = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw_numeric("finite_diff_grad: non-finite value at entry (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
            }
            grad(i, j) = (fp - fm) / (2.0 * h);
        }
    }
    return grad;
}

} // namespace kcr
