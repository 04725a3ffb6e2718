#pragma once

#include <cstdint>
#include <vector>

#include "kcr/matrix.hpp"
#include "kcr/rng.hpp"

namespace kcr {

/// Per-block channel gate. alpha holds one logit per MLP channel; the soft
/// mask is sigma((alpha + gumbel noise difference) / tau) and the hard mask
/// thresholds alpha at 0 with a survival floor of d_min channels.
struct ChannelSelector {
    Matrix alpha; // 1 x D
    double tau = 1.0;
    int d_min = 1;

    ChannelSelector() = default;
    ChannelSelector(int width, double tau_init, int d_min_floor);

    int width() const { return alpha.cols; }
};

struct HardMask {
    Matrix g; // 1 x D, entries exactly 0.0 or 1.0
    int d_tilde = 0;
};

struct CostModel {
    struct Block {
        int layers = 1;
        const ChannelSelector* selector = nullptr;
    };
    std::vector<Block> blocks;
    double lambda = 0.0;
};

double sigmoid(double x);

// Fresh Gumbel noise pair per channel: sigma((alpha_i + e1 - e2) / tau).
Matrix soft_mask(const ChannelSelector& sel, Rng& rng);

// Noise pinned to zero: sigma(alpha_i / tau).
Matrix soft_mask_noise_free(const ChannelSelector& sel);

// Caller-supplied noise difference delta_i = e1_i - e2_i (1 x D).
Matrix soft_mask_with_noise(const ChannelSelector& sel, const Matrix& delta);

// g_i = 1 iff alpha_i >= 0; if fewer than d_min survive, the d_min largest
// alphas are forced on (ties keep the lower index).
HardMask harden(const ChannelSelector& sel);

// Column-wise scaling by an arbitrary real mask.
Matrix apply_mask(const Matrix& z, const Matrix& mask);

// Keep the columns where g is 1, in original order.
Matrix gather_cols(const Matrix& z, const Matrix& g);

// Place columns back into width d, zeros in dropped slots.
Matrix scatter_cols(const Matrix& z_tilde, const Matrix& g, int d);

// l * (2 * d_tilde^2 + d_tilde), exact integer arithmetic.
int64_t flops_block(int layers, int d_tilde);

// Hard FLOPs summed over blocks at the current hardened masks.
int64_t flops_total(const CostModel& model);

// Differentiable cost: per block l * (2 s^2 + s) with s = sum of noise-free
// soft gates.
double soft_cost(const CostModel& model);

// lambda * ln(soft_cost).
double search_cost_term(const CostModel& model);

// tau * decay, floored at 1e-3.
double anneal(double tau, double decay);

} // namespace kcr
