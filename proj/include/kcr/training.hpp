#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kcr/config.hpp"
#include "kcr/dataset.hpp"
#include "kcr/kernel.hpp"
#include "kcr/model.hpp"
#include "kcr/rng.hpp"

namespace kcr {

// Epoch-frozen snapshot of full-set features and their Nystrom factors. The
// batch regularizer reads frozen rows from here so its expectation over
// batches matches the full objective.
struct FeatureBank {
    Matrix f_snapshot;   // n x d_feat
    NystromFactors factors;
    Matrix u_rows;       // n x r, row i = row i of factors.u_tilde
    int epoch_stamp = 0; // epoch this bank is valid for
};

// One pipeline epoch for the metrics CSV. bound stays zeroed (x = 0) outside
// regularized epochs, which keeps upper - lower = 2*(akc + x/n) true on every
// row.
struct EpochRecord {
    int epoch = 0;
    std::string phase; // search | warmup | regularized
    double ce = 0.0;
    double kcr_loss = 0.0; // weight-scaled regularizer, sample-weighted epoch mean
    double akc = 0.0;
    BoundReport bound;
    double train_sq = 0.0;
    double val_sq = 0.0;
    double val_acc = 0.0;
    int64_t hard_flops = 0;
    double tau = 0.0;
};

struct KcrBatchLoss {
    double value = 0.0;
    Matrix grad; // B x d_feat, w.r.t. live_features
};

// Separable batch form of the approximate truncated trace objective:
// c_i = (1/n)(|f_i|^2 - <u_i, f_i P_r>) over live rows, scaled by n/B so the
// batch expectation equals the full-set value. Frozen u_i and P_r come from
// the bank; only live rows carry gradient.
KcrBatchLoss kcr_batch_loss(const std::vector<int>& batch_indices,
                            const Matrix& live_features, const FeatureBank& bank, int r,
                            int n, int epoch);

struct EvalMetrics {
    double accuracy = 0.0;
    double sq_loss = 0.0; // mean |logits - onehot|^2
    double ce = 0.0;
};

struct EvalPack {
    EvalMetrics metrics;
    Matrix features; // n x d_feat, index-aligned
    Matrix logits;   // n x classes
};

// Hard-mode pass over the full set in index order, batched internally.
EvalPack evaluate_pack(KcrNet& net, const Dataset& ds, int batch_size);
EvalMetrics evaluate(KcrNet& net, const Dataset& ds, int batch_size);

// 1-based epoch within a phase of `total` epochs: linear rise over
// lr_warm_epochs from lr_min to lr_max, then cosine fall back to lr_min.
double lr_at(const RunConfig& cfg, int epoch, int total);

// One supernet search epoch: epoch-seeded shuffle, first ceil(split * n)
// samples step the weights on CE, the rest step alpha on CE + lambda * ln cost,
// soft masks drawn fresh per batch, tau annealed once at the end. Alphas take
// plain gradient steps at cfg.alpha_lr so the pruning pressure stays
// proportional to lambda; a normalized optimizer would erase that scale.
// Fills the loss fields of the record; the pipeline fills evaluation fields.
EpochRecord search_epoch(KcrNet& net, const Dataset& train, const RunConfig& cfg,
                         uint64_t seed, int epoch, AdamW& weight_opt);

// One retrain epoch on the gathered net: pure CE through epoch t_warm, then
// CE + kcr_weight * batch regularizer against the bank stamped for this epoch.
// epoch is 1-based within the retrain phase; global_epoch seeds the shuffle.
EpochRecord train_epoch(KcrNet& net, const Dataset& train, const RunConfig& cfg,
                        const FeatureBank* bank, uint64_t seed, int epoch, int global_epoch,
                        AdamW& weight_opt);

// Full-set feature snapshot + Nystrom factors with r = ceil(gamma * min(n, d)).
// Landmarks are drawn on the first call and reused; a degenerate landmark gram
// is retried once with a fresh draw, then the error propagates. When the
// caller already holds this epoch's features it passes them to skip a pass.
FeatureBank refresh_bank(KcrNet& net, const Dataset& train, const RunConfig& cfg,
                         std::vector<int>& landmarks, Rng& rng, int stamp,
                         const Matrix* features = nullptr);

struct PipelineResult {
    KcrNet net;      // final gathered net
    KcrNet supernet; // post-search full-width net (alphas included)
    HardArchitecture architecture;
    std::vector<EpochRecord> records; // t_search + t_train rows, global epoch ids
    std::vector<BoundReport> bounds;  // regularized epochs only
};

// Search -> harden -> fresh pruned init -> warm-up -> regularized training,
// with bank refreshes at every epoch boundary from t_warm on and bound reports
// for every regularized epoch. Deterministic in (cfg, seed, dataset bytes).
PipelineResult run_pipeline(const FullConfig& cfg, const Dataset& train, const Dataset& val,
                            const std::function<void(const std::string&)>& log = {});

} // namespace kcr
