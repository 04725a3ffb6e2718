#include "kcr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "kcr/errors.hpp"

namespace kcr {

KcrBatchLoss kcr_batch_loss(const std::vector<int>& batch_indices,
                            const Matrix& live_features, const FeatureBank& bank, int r,
                            int n, int epoch) {
    const int b = static_cast<int>(batch_indices.size());
    if (b < 1) throw_argument("kcr_batch_loss: empty batch");
    if (bank.epoch_stamp != epoch) {
        throw_argument("stale feature bank: stamped for epoch " +
                       std::to_string(bank.epoch_stamp) + ", used at epoch " +
                       std::to_string(epoch));
    }
    if (n != bank.f_snapshot.rows) {
        throw_dimension("kcr_batch_loss: n = " + std::to_string(n) + " but bank holds " +
                        std::to_string(bank.f_snapshot.rows) + " rows");
    }
    if (r < 1 || r > bank.factors.rank()) {
        throw_argument("kcr_batch_loss: rank " + std::to_string(r) + " outside [1, " +
                       std::to_string(bank.factors.rank()) + "]");
    }
    const int d = bank.f_snapshot.cols;
    if (live_features.rows != b || live_features.cols != d) {
        throw_dimension("kcr_batch_loss: live features are " +
                        std::to_string(live_features.rows) + "x" +
                        std::to_string(live_features.cols) + ", expected " +
                        std::to_string(b) + "x" + std::to_string(d));
    }

    KcrBatchLoss out;
    out.grad = Matrix(b, d);
    double sum_c = 0.0;
    for (int i = 0; i < b; ++i) {
        const int idx = batch_indices[static_cast<size_t>(i)];
        if (idx < 0 || idx >= n) {
            throw_argument("kcr_batch_loss: index " + std::to_string(idx) +
                           " outside [0, " + std::to_string(n) + ")");
        }
        const double* f = live_features.row(i);
        const double* u = bank.u_rows.row(idx);

        double f_sq = 0.0;
        for (int k = 0; k < d; ++k) f_sq += f[k] * f[k];

        // <u_i, f_i P_r> with P_r the first r columns of the cache.
        double proj = 0.0;
        for (int j = 0; j < r; ++j) {
            double fp = 0.0;
            for (int k = 0; k < d; ++k) fp += f[k] * bank.factors.p(k, j);
            proj += u[j] * fp;
        }
        sum_c += (f_sq - proj) / n;

        // d c_i / d f_i = (1/n) (2 f_i - u_i P_r^T); batch scale n/B applied below.
        double* g = out.grad.row(i);
        for (int k = 0; k < d; ++k) {
            double up = 0.0;
            for (int j = 0; j < r; ++j) up += u[j] * bank.factors.p(k, j);
            g[k] = (2.0 * f[k] - up) / b;
        }
    }
    out.value = sum_c * n / b;
    return out;
}

EvalPack evaluate_pack(KcrNet& net, const Dataset& ds, int batch_size) {
    if (batch_size < 1) throw_argument("evaluate: batch size must be positive");
    const int n = ds.size();
    EvalPack pack;
    pack.features = Matrix(n, net.cfg.d_feat());
    pack.logits = Matrix(n, net.cfg.classes);
    ForwardSpec spec;
    spec.mode = ForwardMode::hard;
    for (int start = 0; start < n; start += batch_size) {
        const int count = std::min(batch_size, n - start);
        Matrix chunk(count, ds.images.cols);
        for (int i = 0; i < count; ++i) {
            const double* src = ds.images.row(start + i);
            std::copy(src, src + ds.images.cols, chunk.row(i));
        }
        const Matrix tokens = patchify_batch(chunk, net.cfg.image_side, net.cfg.patch);
        const EvalOut eval = forward_eval(net, tokens, count, spec);
        for (int i = 0; i < count; ++i) {
            std::copy(eval.features.row(i), eval.features.row(i) + pack.features.cols,
                      pack.features.row(start + i));
            std::copy(eval.logits.row(i), eval.logits.row(i) + pack.logits.cols,
                      pack.logits.row(start + i));
        }
    }

    int hits = 0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = pack.logits.row(i);
        int best = 0;
        for (int j = 1; j < pack.logits.cols; ++j) {
            if (row[j] > row[best]) best = j;
        }
        const int label = ds.labels[static_cast<size_t>(i)];
        if (best == label) ++hits;
        for (int j = 0; j < pack.logits.cols; ++j) {
            const double diff = row[j] - (j == label ? 1.0 : 0.0);
            sq += diff * diff;
        }
    }
    pack.metrics.accuracy = n > 0 ? static_cast<double>(hits) / n : 0.0;
    pack.metrics.sq_loss = n > 0 ? sq / n : 0.0;
    pack.metrics.ce = loss_ce(pack.logits, ds.labels);
    return pack;
}

EvalMetrics evaluate(KcrNet& net, const Dataset& ds, int batch_size) {
    return evaluate_pack(net, ds, batch_size).metrics;
}

double lr_at(const RunConfig& cfg, int epoch, int total) {
    if (epoch < 1 || epoch > total) {
        throw_argument("lr_at: epoch " + std::to_string(epoch) + " outside [1, " +
                       std::to_string(total) + "]");
    }
    const int warm = std::min(cfg.lr_warm_epochs, total);
    if (epoch <= warm) {
        return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * epoch / warm;
    }
    if (total == warm) return cfg.lr_max;
    const double progress = static_cast<double>(epoch - warm) / (total - warm);
    return cfg.lr_min +
           0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

struct BatchView {
    Matrix images;
    std::vector<int> labels;
    std::vector<int> indices;
};

BatchView slice_batch(const Dataset& ds, const std::vector<int>& perm, int lo, int hi) {
    BatchView view;
    const int count = hi - lo;
    view.images = Matrix(count, ds.images.cols);
    view.labels.resize(static_cast<size_t>(count));
    view.indices.resize(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int src = perm[static_cast<size_t>(lo + i)];
        std::copy(ds.images.row(src), ds.images.row(src) + ds.images.cols,
                  view.images.row(i));
        view.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
        view.indices[static_cast<size_t>(i)] = src;
    }
    return view;
}

std::vector<int> identity_perm(int n) {
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    return perm;
}

} // namespace

EpochRecord search_epoch(KcrNet& net, const Dataset& train, const RunConfig& cfg,
                         uint64_t seed, int epoch, AdamW& weight_opt) {
    if (net.gathered) throw_argument("search_epoch: needs the full-width supernet");
    if (epoch < 1 || epoch > cfg.t_search) {
        throw_argument("search_epoch: epoch " + std::to_string(epoch) + " outside [1, " +
                       std::to_string(cfg.t_search) + "]");
    }
    const int n = train.size();
    if (n < 1) throw_argument("search_epoch: empty training set");

    std::vector<int> perm = identity_perm(n);
    Rng shuffle_rng(seed, 100 + static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(perm);
    Rng noise_rng(seed, 200 + static_cast<uint64_t>(epoch));

    const int n_weight =
        std::min(n, static_cast<int>(std::ceil(cfg.split_weights * n)));
    const double lr = lr_at(cfg, epoch, cfg.t_search);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = "search";
    rec.tau = net.blocks.front().selector.tau;

    ForwardSpec fwd;
    fwd.mode = ForwardMode::soft;
    fwd.rng = &noise_rng;
    GradBundle grads;
    double ce_sum = 0.0;

    auto run_range = [&](int lo, int hi, bool alpha_phase) {
        for (int start = lo; start < hi; start += cfg.batch) {
            const int stop = std::min(hi, start + cfg.batch);
            const BatchView view = slice_batch(train, perm, start, stop);
            const Matrix tokens =
                patchify_batch(view.images, net.cfg.image_side, net.cfg.patch);
            LossSpec loss;
            loss.labels = &view.labels;
            loss.cost_lambda = alpha_phase ? cfg.lambda : 0.0;
            const BatchLosses losses =
                backward_batch(net, tokens, stop - start, fwd, loss, grads);
            if (alpha_phase) {
                // raw gradient step: keeps d(cost)/d(alpha) scaled by lambda
                const std::vector<ParamRef> refs = params(net);
                for (size_t i = 0; i < refs.size(); ++i) {
                    if (!refs[i].is_alpha) continue;
                    Matrix& p = *refs[i].tensor;
                    for (size_t j = 0; j < p.d.size(); ++j) {
                        p.d[j] -= cfg.alpha_lr * grads.tensors[i].d[j];
                    }
                }
            } else {
                weight_opt.step(net, grads, lr);
            }
            ce_sum += losses.ce * (stop - start);
        }
    };
    run_range(0, n_weight, false);
    run_range(n_weight, n, true);

    rec.ce = ce_sum / n;
    for (Block& blk : net.blocks) {
        blk.selector.tau = anneal(blk.selector.tau, cfg.tau_decay);
    }
    return rec;
}

EpochRecord train_epoch(KcrNet& net, const Dataset& train, const RunConfig& cfg,
                        const FeatureBank* bank, uint64_t seed, int epoch, int global_epoch,
                        AdamW& weight_opt) {
    if (epoch < 1 || epoch > cfg.t_train) {
        throw_argument("train_epoch: epoch " + std::to_string(epoch) + " outside [1, " +
                       std::to_string(cfg.t_train) + "]");
    }
    const int n = train.size();
    if (n < 1) throw_argument("train_epoch: empty training set");

    const bool regularized = epoch > cfg.t_warm && cfg.kcr_weight != 0.0;
    if (regularized) {
        if (bank == nullptr) {
            throw_argument("train_epoch: regularized epoch " + std::to_string(epoch) +
                           " has no feature bank");
        }
        if (bank->epoch_stamp != epoch) {
            throw_argument("stale feature bank: stamped for epoch " +
                           std::to_string(bank->epoch_stamp) + ", used at epoch " +
                           std::to_string(epoch));
        }
        if (bank->u_rows.rows != n) {
            throw_dimension("train_epoch: bank holds " + std::to_string(bank->u_rows.rows) +
                            " rows for " + std::to_string(n) + " samples");
        }
    }

    std::vector<int> perm = identity_perm(n);
    Rng shuffle_rng(seed, 100 + static_cast<uint64_t>(global_epoch));
    shuffle_rng.shuffle(perm);
    const double lr = lr_at(cfg, epoch, cfg.t_train);

    EpochRecord rec;
    rec.epoch = global_epoch;
    rec.phase = epoch <= cfg.t_warm ? "warmup" : "regularized";

    ForwardSpec fwd;
    fwd.mode = ForwardMode::hard;
    GradBundle grads;
    double ce_sum = 0.0;
    double kcr_sum = 0.0;

    for (int start = 0; start < n; start += cfg.batch) {
        const int stop = std::min(n, start + cfg.batch);
        const int b = stop - start;
        const BatchView view = slice_batch(train, perm, start, stop);
        const Matrix tokens = patchify_batch(view.images, net.cfg.image_side, net.cfg.patch);

        LossSpec loss;
        loss.labels = &view.labels;
        Matrix u_batch;
        if (regularized) {
            const int r = bank->factors.rank();
            u_batch = Matrix(b, r);
            for (int i = 0; i < b; ++i) {
                const int idx = view.indices[static_cast<size_t>(i)];
                std::copy(bank->u_rows.row(idx), bank->u_rows.row(idx) + r, u_batch.row(i));
            }
            loss.kcr_weight = cfg.kcr_weight;
            loss.u_batch = &u_batch;
            loss.p = &bank->factors.p;
        }
        const BatchLosses losses = backward_batch(net, tokens, b, fwd, loss, grads);
        weight_opt.step(net, grads, lr);
        ce_sum += losses.ce * b;
        kcr_sum += losses.kcr_term * b;
    }

    rec.ce = ce_sum / n;
    rec.kcr_loss = kcr_sum / n;
    return rec;
}

FeatureBank refresh_bank(KcrNet& net, const Dataset& train, const RunConfig& cfg,
                         std::vector<int>& landmarks, Rng& rng, int stamp,
                         const Matrix* features) {
    FeatureBank bank;
    bank.f_snapshot =
        features ? *features : extract_features(net, train.images, cfg.batch);
    const int n = bank.f_snapshot.rows;
    const int d = bank.f_snapshot.cols;
    if (cfg.m_land < 1 || cfg.m_land > n) {
        throw_argument("refresh_bank: m_land " + std::to_string(cfg.m_land) +
                       " outside [1, " + std::to_string(n) + "]");
    }
    int r = static_cast<int>(std::ceil(cfg.gamma * std::min(n, d)));
    r = std::clamp(r, 1, std::min(cfg.m_land, std::min(n, d)));

    if (landmarks.empty()) landmarks = rng.sample_without_replacement(n, cfg.m_land);
    try {
        bank.factors = nystrom(bank.f_snapshot, landmarks, r);
    } catch (const error& e) {
        if (e.kind() != error_kind::degenerate) throw;
        landmarks = rng.sample_without_replacement(n, cfg.m_land);
        bank.factors = nystrom(bank.f_snapshot, landmarks, r);
    }
    bank.factors.epoch_stamp = stamp;
    bank.u_rows = bank.factors.u_tilde;
    bank.epoch_stamp = stamp;
    return bank;
}

namespace {

template <typename F>
auto guarded(int epoch, const char* phase, F&& fn) {
    try {
        return fn();
    } catch (const error& e) {
        throw error(e.kind(), "epoch " + std::to_string(epoch) + " (" + phase + "): " +
                                  e.what());
    }
}

} // namespace

PipelineResult run_pipeline(const FullConfig& cfg, const Dataset& train, const Dataset& val,
                            const std::function<void(const std::string&)>& log) {
    cfg.validate();
    train.validate();
    val.validate();
    if (train.image_side != cfg.model.image_side || val.image_side != cfg.model.image_side) {
        throw_config("dataset image side does not match the model");
    }
    if (train.classes > cfg.model.classes || val.classes > cfg.model.classes) {
        throw_config("dataset labels exceed the model's class count");
    }
    const int n = train.size();
    if (n < 1) throw_config("empty training set");
    if (cfg.run.m_land > n) {
        throw_config("m_land " + std::to_string(cfg.run.m_land) + " exceeds n = " +
                     std::to_string(n));
    }
    const RunConfig& run = cfg.run;
    const auto say = [&](const std::string& line) {
        if (log) log(line);
    };

    PipelineResult result;

    Rng init_rng(cfg.seed, 1);
    KcrNet supernet = make_supernet(cfg.model, run.tau_init, run.d_min, init_rng);

    if (run.t_search > 0) {
        AdamW weight_opt;
        weight_opt.weight_decay = run.weight_decay;
        for (int e = 1; e <= run.t_search; ++e) {
            EpochRecord rec = guarded(e, "search", [&] {
                return search_epoch(supernet, train, run, cfg.seed, e, weight_opt);
            });
            guarded(e, "search", [&] {
                const EvalMetrics tr = evaluate(supernet, train, run.batch);
                const EvalMetrics vl = evaluate(supernet, val, run.batch);
                rec.train_sq = tr.sq_loss;
                rec.val_sq = vl.sq_loss;
                rec.val_acc = vl.accuracy;
                rec.hard_flops = harden_architecture(supernet).total_flops;
                return 0;
            });
            say("search epoch " + std::to_string(e) + ": ce " + std::to_string(rec.ce) +
                ", hard flops " + std::to_string(rec.hard_flops));
            result.records.push_back(std::move(rec));
        }
    }

    result.architecture = harden_architecture(supernet);
    std::vector<Matrix> alphas;
    alphas.reserve(supernet.blocks.size());
    for (const Block& blk : supernet.blocks) alphas.push_back(blk.selector.alpha);

    Rng pruned_rng(cfg.seed, 2);
    KcrNet pruned = make_pruned(cfg.model, result.architecture.channels, alphas,
                                run.tau_init, run.d_min, pruned_rng);
    result.supernet = std::move(supernet);

    AdamW weight_opt;
    weight_opt.weight_decay = run.weight_decay;
    Rng land_rng(cfg.seed, 3);
    std::vector<int> landmarks;
    FeatureBank bank;
    bool have_bank = false;

    if (run.t_warm == 0 && run.t_train > 0) {
        bank = guarded(0, "refresh", [&] {
            return refresh_bank(pruned, train, run, landmarks, land_rng, 1);
        });
        have_bank = true;
    }

    for (int e = 1; e <= run.t_train; ++e) {
        const int global = run.t_search + e;
        EpochRecord rec = guarded(global, e <= run.t_warm ? "warmup" : "regularized", [&] {
            return train_epoch(pruned, train, run, have_bank ? &bank : nullptr, cfg.seed, e,
                               global, weight_opt);
        });
        EvalPack pack = guarded(global, "evaluation", [&] {
            return evaluate_pack(pruned, train, run.batch);
        });
        const EvalMetrics vl = guarded(global, "evaluation", [&] {
            return evaluate(pruned, val, run.batch);
        });
        rec.train_sq = pack.metrics.sq_loss;
        rec.val_sq = vl.sq_loss;
        rec.val_acc = vl.accuracy;
        rec.hard_flops = result.architecture.total_flops;

        if (e >= run.t_warm) {
            bank = guarded(global, "refresh", [&] {
                return refresh_bank(pruned, train, run, landmarks, land_rng, e + 1,
                                    &pack.features);
            });
            have_bank = true;
            if (e > run.t_warm) {
                guarded(global, "bounds", [&] {
                    const KcResult a = akc(bank.f_snapshot, bank.factors);
                    const KcResult exact = kc_exact(spectrum_from_features(bank.f_snapshot));
                    BoundReport br = kcr_bounds(rec.train_sq, a.value, n, run.x);
                    br.kc = exact.value;
                    br.akc = a.value;
                    br.epoch = global;
                    rec.akc = a.value;
                    rec.bound = br;
                    result.bounds.push_back(br);
                    return 0;
                });
            }
        }
        say("train epoch " + std::to_string(e) + " (" + rec.phase + "): ce " +
            std::to_string(rec.ce) + ", val acc " + std::to_string(rec.val_acc));
        result.records.push_back(std::move(rec));
    }

    result.net = std::move(pruned);
    return result;
}

} // namespace kcr
