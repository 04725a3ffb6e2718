#include "kcr/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kcr/errors.hpp"

namespace kcr {

ChannelSelector::ChannelSelector(int width, double tau_init, int d_min_floor)
    : alpha(1, width), tau(tau_init), d_min(d_min_floor) {
    if (width < 1) throw_argument("selector width must be at least 1");
    if (!(tau_init > 0.0)) throw_argument("selector temperature must be positive");
    if (d_min_floor < 1 || d_min_floor > width) {
        throw_argument("selector floor " + std::to_string(d_min_floor) +
                       " outside [1, " + std::to_string(width) + "]");
    }
}

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void require_tau(const ChannelSelector& sel) {
    if (!(sel.tau > 0.0)) throw_argument("selector temperature must be positive");
}

} // namespace

Matrix soft_mask(const ChannelSelector& sel, Rng& rng) {
    require_tau(sel);
    Matrix m(1, sel.width());
    for (int i = 0; i < sel.width(); ++i) {
        const double e1 = rng.gumbel();
        const double e2 = rng.gumbel();
        m(0, i) = sigmoid((sel.alpha(0, i) + e1 - e2) / sel.tau);
    }
    return m;
}

Matrix soft_mask_noise_free(const ChannelSelector& sel) {
    require_tau(sel);
    Matrix m(1, sel.width());
    for (int i = 0; i < sel.width(); ++i) m(0, i) = sigmoid(sel.alpha(0, i) / sel.tau);
    return m;
}

Matrix soft_mask_with_noise(const ChannelSelector& sel, const Matrix& delta) {
    require_tau(sel);
    if (delta.rows != 1 || delta.cols != sel.width()) {
        throw_dimension("soft mask noise must be 1x" + std::to_string(sel.width()));
    }
    Matrix m(1, sel.width());
    for (int i = 0; i < sel.width(); ++i) {
        m(0, i) = sigmoid((sel.alpha(0, i) + delta(0, i)) / sel.tau);
    }
    return m;
}

HardMask harden(const ChannelSelector& sel) {
    const int d = sel.width();
    HardMask out;
    out.g = Matrix(1, d);
    int kept = 0;
    for (int i = 0; i < d; ++i) {
        if (sel.alpha(0, i) >= 0.0) {
            out.g(0, i) = 1.0;
            ++kept;
        }
    }
    if (kept < sel.d_min) {
        std::vector<int> order(static_cast<size_t>(d));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return sel.alpha(0, a) > sel.alpha(0, b);
        });
        out.g.fill(0.0);
        for (int k = 0; k < sel.d_min; ++k) out.g(0, order[static_cast<size_t>(k)]) = 1.0;
        kept = sel.d_min;
    }
    out.d_tilde = kept;
    return out;
}

Matrix apply_mask(const Matrix& z, const Matrix& mask) {
    if (mask.rows != 1 || mask.cols != z.cols) {
        throw_dimension("apply_mask: mask is " + std::to_string(mask.rows) + "x" +
                        std::to_string(mask.cols) + ", need 1x" + std::to_string(z.cols));
    }
    Matrix out = z;
    for (int i = 0; i < z.rows; ++i) {
        double* r = out.row(i);
        for (int j = 0; j < z.cols; ++j) r[j] *= mask(0, j);
    }
    return out;
}

namespace {

std::vector<int> selected_indices(const Matrix& g) {
    if (g.rows != 1) throw_dimension("mask must be a 1-row matrix");
    std::vector<int> keep;
    for (int j = 0; j < g.cols; ++j) {
        const double v = g(0, j);
        if (v == 1.0) {
            keep.push_back(j);
        } else if (v != 0.0) {
            throw_argument("mask entry " + std::to_string(j) + " is " + std::to_string(v) +
                           ", expected exactly 0 or 1");
        }
    }
    return keep;
}

} // namespace

Matrix gather_cols(const Matrix& z, const Matrix& g) {
    if (g.cols != z.cols) {
        throw_dimension("gather_cols: mask width " + std::to_string(g.cols) +
                        " vs matrix width " + std::to_string(z.cols));
    }
    const std::vector<int> keep = selected_indices(g);
    Matrix out(z.rows, static_cast<int>(keep.size()));
    for (int i = 0; i < z.rows; ++i) {
        const double* src = z.row(i);
        double* dst = out.row(i);
        for (size_t k = 0; k < keep.size(); ++k) dst[k] = src[keep[k]];
    }
    return out;
}

Matrix scatter_cols(const Matrix& z_tilde, const Matrix& g, int d) {
    if (g.cols != d) {
        throw_dimension("scatter_cols: mask width " + std::to_string(g.cols) +
                        " vs target width " + std::to_string(d));
    }
    const std::vector<int> keep = selected_indices(g);
    if (static_cast<int>(keep.size()) != z_tilde.cols) {
        throw_dimension("scatter_cols: " + std::to_string(z_tilde.cols) +
                        " input columns vs " + std::to_string(keep.size()) +
                        " selected slots");
    }
    Matrix out(z_tilde.rows, d);
    for (int i = 0; i < z_tilde.rows; ++i) {
        const double* src = z_tilde.row(i);
        double* dst = out.row(i);
        for (size_t k = 0; k < keep.size(); ++k) dst[keep[k]] = src[k];
    }
    return out;
}

int64_t flops_block(int layers, int d_tilde) {
    if (layers < 1) throw_argument("flops_block: layer count must be at least 1");
    if (d_tilde < 0) throw_argument("flops_block: negative width");
    const int64_t w = d_tilde;
    return static_cast<int64_t>(layers) * (2 * w * w + w);
}

int64_t flops_total(const CostModel& model) {
    int64_t total = 0;
    for (const auto& block : model.blocks) {
        if (block.selector == nullptr) throw_argument("cost model block lacks a selector");
        total += flops_block(block.layers, harden(*block.selector).d_tilde);
    }
    return total;
}

double soft_cost(const CostModel& model) {
    double total = 0.0;
    for (const auto& block : model.blocks) {
        if (block.selector == nullptr) throw_argument("cost model block lacks a selector");
        const Matrix gates = soft_mask_noise_free(*block.selector);
        double s = 0.0;
        for (int j = 0; j < gates.cols; ++j) s += gates(0, j);
        total += static_cast<double>(block.layers) * (2.0 * s * s + s);
    }
    return total;
}

double search_cost_term(const CostModel& model) {
    if (model.lambda == 0.0) return 0.0;
    const double cost = soft_cost(model);
    if (!(cost > 0.0)) throw_numeric("search cost term: non-positive soft cost");
    return model.lambda * std::log(cost);
}

double anneal(double tau, double decay) {
    if (!(decay > 0.0) || decay > 1.0) {
        throw_argument("anneal: decay must lie in (0, 1]");
    }
    return std::max(tau * decay, 1e-3);
}

} // namespace kcr
