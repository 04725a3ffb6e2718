#pragma once

#include <cstdint>
#include <vector>

#include "kcr/matrix.hpp"

namespace kcr {

/// Deterministic pseudorandom generator (xoshiro256++ seeded from a
/// (seed, stream) pair via splitmix64). Identical (seed, stream, call
/// sequence) reproduces identical outputs bit-exactly on every platform.
/// Streams are cheap: fork() derives an independent child stream without
/// touching the parent's state.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0);

    uint64_t next_u64();

    /// Uniform draw in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform draw in [lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (second value cached).
    double normal();
    /// Standard Gumbel draw; uniforms clamped to [1e-12, 1-1e-12] before the
    /// double-log transform so the result is always finite.
    double gumbel();
    /// Uniform integer in [0, n).
    int below(int n);

    Matrix uniform_matrix(int rows, int cols, double lo, double hi);
    Matrix normal_matrix(int rows, int cols);
    Matrix gumbel_matrix(int rows, int cols);

    /// k distinct indices from [0, n), ascending order.
    std::vector<int> sample_without_replacement(int n, int k);
    void shuffle(std::vector<int>& v);

    /// Child generator on an independent stream; deterministic in
    /// (seed, stream, substream).
    Rng fork(uint64_t substream) const;

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

private:
    uint64_t seed_;
    uint64_t stream_;
    uint64_t s_[4];
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

/// The Gumbel transform used by gumbel(): -log(-log(u)) with u clamped to
/// [1e-12, 1-1e-12]. Exposed so tests can pin specific quantiles.
double gumbel_from_uniform(double u);

} // namespace kcr
