#pragma once

#include <functional>

#include "kcr/matrix.hpp"

namespace kcr {

// Central-difference gradient of f at x, entry step h = step * (1 + |x_ij|).
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double step = 1e-5);

} // namespace kcr
