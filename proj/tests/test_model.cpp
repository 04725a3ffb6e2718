#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kcr/errors.hpp"
#include "kcr/finite_diff.hpp"
#include "kcr/kernel.hpp"
#include "kcr/matrix.hpp"
#include "kcr/model.hpp"
#include "kcr/rng.hpp"
#include "kcr/selection.hpp"
#include "kcr/tape.hpp"

using namespace kcr;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.image_side = 4;
    cfg.patch = 2;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.depth = 1;
    cfg.mlp_layers = 2;
    cfg.classes = 2;
    cfg.pos_embed = true;
    return cfg;
}

Matrix random_images(int n, int side, Rng& rng) { return rng.uniform_matrix(n, side * side, 0.0, 1.0); }

std::vector<int> random_labels(int n, int classes, Rng& rng) {
    std::vector<int> y(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) y[static_cast<size_t>(i)] = rng.below(classes);
    return y;
}

double softmax_prob(const Matrix& logits, int row, int cls) {
    double mx = logits(row, 0);
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(row, j));
    double z = 0.0;
    for (int j = 0; j < logits.cols; ++j) z += std::exp(logits(row, j) - mx);
    return std::exp(logits(row, cls) - mx) / z;
}

} // namespace

TEST_CASE("patchify flattens non-overlapping patches in raster order") {
    Matrix img = Matrix::from({{1.0, 2.0}, {3.0, 4.0}});
    Matrix tok = patchify(img, 2);
    REQUIRE(tok.rows == 1);
    REQUIRE(tok.cols == 4);
    CHECK(tok(0, 0) == 1.0);
    CHECK(tok(0, 1) == 2.0);
    CHECK(tok(0, 2) == 3.0);
    CHECK(tok(0, 3) == 4.0);

    Matrix big(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) big(i, j) = i * 4 + j;
    Matrix tb = patchify(big, 2);
    REQUIRE(tb.rows == 4);
    // token 1 = columns 2..3 of rows 0..1
    CHECK(tb(1, 0) == 2.0);
    CHECK(tb(1, 1) == 3.0);
    CHECK(tb(1, 2) == 6.0);
    CHECK(tb(1, 3) == 7.0);
    // token 2 = columns 0..1 of rows 2..3
    CHECK(tb(2, 0) == 8.0);
    CHECK(tb(2, 3) == 13.0);

    Matrix tc = patchify(Matrix(4, 4, std::vector<double>(16, 3.25)), 2);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(tc(i, j) == 3.25);

    CHECK_THROWS_AS(patchify(Matrix(5, 5), 2), error);
}

TEST_CASE("patchify_batch stacks per-image tokens") {
    Rng rng(1, 0);
    Matrix images = random_images(3, 4, rng);
    Matrix stacked = patchify_batch(images, 4, 2);
    REQUIRE(stacked.rows == 12);
    REQUIRE(stacked.cols == 4);
    Matrix img0(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) img0(i, j) = images(0, i * 4 + j);
    Matrix tok0 = patchify(img0, 2);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(stacked(i, j) == tok0(i, j));
}

TEST_CASE("fresh supernets are seeded, finite, and zero-classified") {
    ModelConfig cfg = tiny_config();
    Rng r1(9, 1), r2(9, 1);
    KcrNet a = make_supernet(cfg, 1.5, 2, r1);
    KcrNet b = make_supernet(cfg, 1.5, 2, r2);
    CHECK_FALSE(a.gathered);
    CHECK(max_abs(a.classifier) == 0.0);
    CHECK(max_abs_diff(a.patch_w, b.patch_w) == 0.0);
    CHECK(max_abs_diff(a.blocks[0].wq, b.blocks[0].wq) == 0.0);
    CHECK(a.blocks[0].channels.size() == 8);
    CHECK(a.blocks[0].selector.tau == 1.5);

    // zero classifier means indifferent logits and a log C entropy loss
    Rng data(2, 0);
    Matrix images = random_images(4, 4, data);
    Matrix tokens = patchify_batch(images, 4, 2);
    ForwardSpec spec;
    spec.mode = ForwardMode::hard;
    EvalOut out = forward_eval(a, tokens, 4, spec);
    CHECK(max_abs(out.logits) == 0.0);
    CHECK(loss_ce(out.logits, {0, 1, 0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("parameter registry names every tensor once with stable flags") {
    ModelConfig cfg = tiny_config();
    Rng rng(5, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);
    auto refs = params(net);

    int alpha_count = 0;
    int decay_count = 0;
    std::vector<std::string> names;
    for (const auto& r : refs) {
        names.push_back(r.name);
        if (r.is_alpha) ++alpha_count;
        if (r.decay) ++decay_count;
        CHECK(r.tensor != nullptr);
    }
    CHECK(alpha_count == cfg.depth);
    // patch embed + wq wk wv wo + two mlp layers per block + classifier
    CHECK(decay_count == 1 + cfg.depth * (4 + cfg.mlp_layers) + 1);
    std::vector<std::string> sorted_names = names;
    std::sort(sorted_names.begin(), sorted_names.end());
    CHECK(std::adjacent_find(sorted_names.begin(), sorted_names.end()) == sorted_names.end());
    CHECK(std::find(names.begin(), names.end(), "block0.alpha") != names.end());
    CHECK(std::find(names.begin(), names.end(), "classifier.w") != names.end());
    CHECK(std::find(names.begin(), names.end(), "pos") != names.end());
}

TEST_CASE("mask-free forwards match soft forwards when every gate saturates on") {
    ModelConfig cfg = tiny_config();
    Rng rng(11, 1);
    KcrNet net = make_supernet(cfg, 4.5, 2, rng);
    net.blocks[0].selector.alpha.fill(1e4);  // noise cannot pull a gate off 1.0

    Rng data(3, 0);
    Matrix tokens = patchify_batch(random_images(5, 4, data), 4, 2);

    ForwardSpec free_spec;
    free_spec.mode = ForwardMode::mask_free;
    EvalOut free_out = forward_eval(net, tokens, 5, free_spec);

    Rng noise(7, 0);
    ForwardSpec soft_spec;
    soft_spec.mode = ForwardMode::soft;
    soft_spec.rng = &noise;
    EvalOut soft_out = forward_eval(net, tokens, 5, soft_spec);

    CHECK(max_abs_diff(free_out.logits, soft_out.logits) <= 1e-10);
    CHECK(max_abs_diff(free_out.features, soft_out.features) <= 1e-10);
}

TEST_CASE("hard forwards equal explicit forwards at the hardened mask") {
    ModelConfig cfg = tiny_config();
    Rng rng(13, 1);
    KcrNet net = make_supernet(cfg, 1.0, 2, rng);
    Rng alpha_rng(17, 0);
    for (int j = 0; j < 8; ++j) net.blocks[0].selector.alpha(0, j) = alpha_rng.normal();

    HardArchitecture arch = harden_architecture(net);
    REQUIRE(arch.masks.size() == 1);

    Rng data(19, 0);
    Matrix tokens = patchify_batch(random_images(6, 4, data), 4, 2);

    ForwardSpec hard_spec;
    hard_spec.mode = ForwardMode::hard;
    EvalOut hard_out = forward_eval(net, tokens, 6, hard_spec);

    ForwardSpec explicit_spec;
    explicit_spec.mode = ForwardMode::explicit_mask;
    explicit_spec.masks = &arch.masks;
    EvalOut explicit_out = forward_eval(net, tokens, 6, explicit_spec);

    CHECK(max_abs_diff(hard_out.logits, explicit_out.logits) <= 1e-12);
    CHECK(max_abs_diff(hard_out.features, explicit_out.features) <= 1e-12);
}

TEST_CASE("cross entropy matches an independent evaluation") {
    Rng rng(23, 0);
    Matrix logits = rng.normal_matrix(6, 4);
    std::vector<int> labels = random_labels(6, 4, rng);
    double expect = 0.0;
    for (int i = 0; i < 6; ++i) expect -= std::log(softmax_prob(logits, i, labels[static_cast<size_t>(i)]));
    expect /= 6.0;
    CHECK(loss_ce(logits, labels) == doctest::Approx(expect).epsilon(1e-12));

    Matrix uniform(3, 4);
    CHECK(loss_ce(uniform, {0, 1, 2}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("classifier gradient has the softmax-minus-onehot closed form") {
    ModelConfig cfg = tiny_config();
    Rng rng(29, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);
    Rng wrng(31, 0);
    net.classifier = wrng.normal_matrix(8, 2);

    const int batch = 5;
    Rng data(37, 0);
    Matrix images = random_images(batch, 4, data);
    Matrix tokens = patchify_batch(images, 4, 2);
    std::vector<int> labels = random_labels(batch, 2, data);

    ForwardSpec fwd;
    fwd.mode = ForwardMode::hard;
    LossSpec loss;
    loss.labels = &labels;
    GradBundle grads;
    backward_batch(net, tokens, batch, fwd, loss, grads);

    EvalOut out = forward_eval(net, tokens, batch, fwd);
    Matrix delta(batch, 2);
    for (int i = 0; i < batch; ++i)
        for (int j = 0; j < 2; ++j)
            delta(i, j) = (softmax_prob(out.logits, i, j) -
                           (labels[static_cast<size_t>(i)] == j ? 1.0 : 0.0)) /
                          batch;
    Matrix expect = matmul_at_b(out.features, delta);

    auto refs = params(net);
    bool found = false;
    for (size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].name == "classifier.w") {
            found = true;
            CHECK(max_abs_diff(grads.tensors[i], expect) <= 1e-10);
        }
    }
    CHECK(found);
}

TEST_CASE("every parameter gradient survives a central difference audit") {
    ModelConfig cfg = tiny_config();
    Rng rng(41, 1);
    KcrNet net = make_supernet(cfg, 1.3, 2, rng);
    Rng arng(43, 0);
    for (int j = 0; j < 8; ++j) net.blocks[0].selector.alpha(0, j) = 0.5 * arng.normal();
    net.classifier = arng.normal_matrix(8, 2);

    const int batch = 4;
    Rng data(47, 0);
    Matrix tokens = patchify_batch(random_images(batch, 4, data), 4, 2);
    std::vector<int> labels = {0, 1, 1, 0};

    const int r = 3;
    Matrix u_batch = arng.normal_matrix(batch, r);
    Matrix p = arng.normal_matrix(8, r);

    LossSpec loss;
    loss.labels = &labels;
    loss.kcr_weight = 0.7;
    loss.u_batch = &u_batch;
    loss.p = &p;
    loss.cost_lambda = 0.3;

    auto run = [&](GradBundle* out) {
        Rng noise(53, 9);  // identical gumbel draws on every evaluation
        ForwardSpec fwd;
        fwd.mode = ForwardMode::soft;
        fwd.rng = &noise;
        if (out != nullptr) return backward_batch(net, tokens, batch, fwd, loss, *out);
        GradBundle scratch;
        return backward_batch(net, tokens, batch, fwd, loss, scratch);
    };

    GradBundle analytic;
    BatchLosses base = run(&analytic);
    CHECK(std::isfinite(base.total));
    CHECK(base.kcr_term != 0.0);
    CHECK(base.cost_term != 0.0);

    auto refs = params(net);
    REQUIRE(analytic.tensors.size() == refs.size());
    for (size_t t = 0; t < refs.size(); ++t) {
        Matrix snapshot = *refs[t].tensor;
        Matrix fd = finite_diff_grad(
            [&](const Matrix& candidate) {
                *refs[t].tensor = candidate;
                const double v = run(nullptr).total;
                return v;
            },
            snapshot, 1e-5);
        *refs[t].tensor = snapshot;

        const Matrix& got = analytic.tensors[t];
        REQUIRE(got.same_shape(fd));
        for (int i = 0; i < fd.rows; ++i)
            for (int j = 0; j < fd.cols; ++j) {
                const double a = got(i, j);
                const double b = fd(i, j);
                const double tol = 1e-4 * std::max(std::abs(a), std::abs(b)) + 1e-6;
                CHECK(std::abs(a - b) <= tol);
            }
    }
}

TEST_CASE("disabled regularizers leave pure cross-entropy gradients") {
    ModelConfig cfg = tiny_config();
    Rng rng(59, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);

    const int batch = 4;
    Rng data(61, 0);
    Matrix tokens = patchify_batch(random_images(batch, 4, data), 4, 2);
    std::vector<int> labels = {1, 0, 1, 0};
    Matrix u_batch = data.normal_matrix(batch, 2);
    Matrix p = data.normal_matrix(8, 2);

    LossSpec plain;
    plain.labels = &labels;
    LossSpec zeroed;
    zeroed.labels = &labels;
    zeroed.kcr_weight = 0.0;
    zeroed.u_batch = &u_batch;
    zeroed.p = &p;
    zeroed.cost_lambda = 0.0;

    auto grads_for = [&](const LossSpec& spec) {
        Rng noise(67, 4);
        ForwardSpec fwd;
        fwd.mode = ForwardMode::soft;
        fwd.rng = &noise;
        GradBundle out;
        BatchLosses l = backward_batch(net, tokens, batch, fwd, spec, out);
        CHECK(l.kcr_term == 0.0);
        CHECK(l.cost_term == 0.0);
        return out;
    };

    GradBundle a = grads_for(plain);
    GradBundle b = grads_for(zeroed);
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (size_t i = 0; i < a.tensors.size(); ++i)
        CHECK(max_abs_diff(a.tensors[i], b.tensors[i]) == 0.0);
}

TEST_CASE("token order does not change pooled predictions") {
    ModelConfig cfg = tiny_config();
    cfg.pos_embed = false;  // ordering information must come only from the embedding
    Rng rng(71, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);

    Rng data(73, 0);
    Matrix tokens = patchify_batch(random_images(1, 4, data), 4, 2);
    Matrix permuted(4, 4);
    const int perm[4] = {2, 0, 3, 1};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) permuted(i, j) = tokens(perm[i], j);

    ForwardSpec spec;
    spec.mode = ForwardMode::hard;
    EvalOut a = forward_eval(net, tokens, 1, spec);
    EvalOut b = forward_eval(net, permuted, 1, spec);
    CHECK(max_abs_diff(a.logits, b.logits) <= 1e-12);
    CHECK(max_abs_diff(a.features, b.features) <= 1e-12);
}

TEST_CASE("attention rows are convex combinations of the values") {
    Tape tape;
    Rng rng(79, 0);
    const int tokens = 5, d = 6, heads = 2;
    auto q = tape.put(rng.normal_matrix(tokens, d));
    auto k = tape.put(rng.normal_matrix(tokens, d));
    Matrix v(tokens, d);
    for (int i = 0; i < tokens; ++i)
        for (int j = 0; j < d; ++j) v(i, j) = 1.0 + 0.5 * j;  // constant across rows
    auto vv = tape.put(v);
    auto out = tape.attention_core(q, k, vv, 1, tokens, heads);
    const Matrix& val = tape.value(out);
    for (int i = 0; i < tokens; ++i)
        for (int j = 0; j < d; ++j) CHECK(val(i, j) == doctest::Approx(v(0, j)).epsilon(1e-12));
}

TEST_CASE("plain gradient steps reproduce the linear probe on frozen features") {
    ModelConfig cfg = tiny_config();
    Rng rng(83, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);

    const int n = 6;
    Rng data(89, 0);
    Matrix images = random_images(n, 4, data);
    Matrix feats = extract_features(net, images, 3);
    Matrix y(n, cfg.classes);
    for (int i = 0; i < n; ++i) y(i, i % cfg.classes) = 1.0;

    const double eta = 0.2;
    GdProbeResult probe = gd_linear_probe(feats, y, eta, 1);

    // assemble the probe's gradient by hand and take one optimizer step
    auto refs = params(net);
    GradBundle grads;
    for (const auto& r : refs) {
        grads.names.push_back(r.name);
        grads.tensors.emplace_back(r.tensor->rows, r.tensor->cols);
    }
    Matrix residual = sub(matmul(feats, net.classifier), y);
    Matrix g_cls = matmul_at_b(feats, residual);
    for (size_t i = 0; i < refs.size(); ++i)
        if (refs[i].name == "classifier.w") grads.tensors[i] = g_cls;

    sgd_step(net, grads, eta / n, 0.0, false);
    CHECK(max_abs_diff(net.classifier, probe.w1) <= 1e-14);

    // lr 0 must leave every tensor untouched
    Matrix before = net.blocks[0].wq;
    sgd_step(net, grads, 0.0, 0.0, false);
    CHECK(max_abs_diff(net.blocks[0].wq, before) == 0.0);
    CHECK(max_abs_diff(net.classifier, probe.w1) <= 1e-14);
}

TEST_CASE("decoupled weight decay shrinks only decaying tensors") {
    ModelConfig cfg = tiny_config();
    Rng rng(97, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);
    auto refs = params(net);
    GradBundle zero;
    for (const auto& r : refs) {
        zero.names.push_back(r.name);
        zero.tensors.emplace_back(r.tensor->rows, r.tensor->cols);
    }
    Matrix wq_before = net.blocks[0].wq;
    Matrix bq_before = net.blocks[0].bq;
    Matrix ln_before = net.blocks[0].ln1_g;
    sgd_step(net, zero, 0.1, 0.5, false);
    CHECK(max_abs_diff(net.blocks[0].wq, scale(wq_before, 1.0 - 0.1 * 0.5)) <= 1e-15);
    CHECK(max_abs_diff(net.blocks[0].bq, bq_before) == 0.0);
    CHECK(max_abs_diff(net.blocks[0].ln1_g, ln_before) == 0.0);
}

TEST_CASE("adamw takes a signed unit step under a constant gradient") {
    ModelConfig cfg = tiny_config();
    Rng rng(101, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);
    auto refs = params(net);

    GradBundle grads;
    for (const auto& r : refs) {
        grads.names.push_back(r.name);
        Matrix g(r.tensor->rows, r.tensor->cols);
        g.fill(1.0);
        grads.tensors.push_back(g);
    }

    Matrix wq_before = net.blocks[0].wq;
    Matrix alpha_before = net.blocks[0].selector.alpha;
    AdamW opt;
    opt.step(net, grads, 0.01);

    // mhat = g, vhat = g^2 on the first step, so the move is -lr * sign(g)
    Matrix moved = sub(net.blocks[0].wq, wq_before);
    for (double v : moved.d) CHECK(v == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(max_abs_diff(net.blocks[0].selector.alpha, alpha_before) == 0.0);

    AdamW alpha_opt;
    alpha_opt.alpha_only = true;
    Matrix wq_mid = net.blocks[0].wq;
    alpha_opt.step(net, grads, 0.01);
    CHECK(max_abs_diff(net.blocks[0].wq, wq_mid) == 0.0);
    Matrix alpha_moved = sub(net.blocks[0].selector.alpha, alpha_before);
    for (double v : alpha_moved.d) CHECK(v == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("feature extraction is chunk-invariant and index-aligned") {
    ModelConfig cfg = tiny_config();
    Rng rng(103, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);
    Rng data(107, 0);
    Matrix images = random_images(7, 4, data);

    Matrix f_all = extract_features(net, images, 7);
    Matrix f_chunked = extract_features(net, images, 3);
    CHECK(max_abs_diff(f_all, f_chunked) == 0.0);

    Matrix one(1, 16);
    for (int j = 0; j < 16; ++j) one(0, j) = images(4, j);
    Matrix f_one = extract_features(net, one, 5);
    for (int j = 0; j < 8; ++j) CHECK(f_one(0, j) == f_all(4, j));
}

TEST_CASE("hardened architectures report channels, masks, and flop counts") {
    ModelConfig cfg = tiny_config();
    cfg.depth = 2;
    Rng rng(109, 1);
    KcrNet net = make_supernet(cfg, 1.5, 2, rng);
    net.blocks[0].selector.alpha = Matrix::row_vector({1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 3.0, -3.0});
    net.blocks[1].selector.alpha.fill(-1.0);  // floor keeps d_min channels

    HardArchitecture arch = harden_architecture(net);
    REQUIRE(arch.channels.size() == 2);
    CHECK(arch.channels[0] == std::vector<int>{0, 2, 4, 6});
    CHECK(arch.channels[1].size() == 2);
    CHECK(arch.block_flops[0] == flops_block(2, 4));
    CHECK(arch.block_flops[1] == flops_block(2, 2));
    CHECK(arch.total_flops == arch.block_flops[0] + arch.block_flops[1]);
}

TEST_CASE("pruned nets run on gathered channels and validate their inputs") {
    ModelConfig cfg = tiny_config();
    Rng rng(113, 1);
    KcrNet supernet = make_supernet(cfg, 1.5, 2, rng);
    supernet.blocks[0].selector.alpha =
        Matrix::row_vector({1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0});
    HardArchitecture arch = harden_architecture(supernet);

    std::vector<Matrix> alphas;
    alphas.push_back(supernet.blocks[0].selector.alpha);
    Rng prng(127, 2);
    KcrNet pruned = make_pruned(cfg, arch.channels, alphas, 1.0, 2, prng);
    CHECK(pruned.gathered);
    CHECK(pruned.blocks[0].mlp_width() == 4);
    CHECK(pruned.blocks[0].mlp_w[0].rows == 4);
    CHECK(max_abs(pruned.classifier) == 0.0);

    Rng data(131, 0);
    Matrix tokens = patchify_batch(random_images(3, 4, data), 4, 2);
    ForwardSpec spec;
    spec.mode = ForwardMode::hard;
    EvalOut out = forward_eval(pruned, tokens, 3, spec);
    CHECK(out.logits.rows == 3);
    out.features.check_finite("pruned features");

    std::vector<std::vector<int>> bad = {{2, 0, 4, 6}};  // not ascending
    Rng prng2(127, 2);
    CHECK_THROWS_AS(make_pruned(cfg, bad, alphas, 1.0, 2, prng2), error);
}

TEST_CASE("model config validation rejects impossible shapes") {
    ModelConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    ModelConfig bad = cfg;
    bad.patch = 3;  // 4 is not divisible by 3
    CHECK_THROWS_AS(bad.validate(), error);
    bad = cfg;
    bad.heads = 3;  // 8 is not divisible by 3
    CHECK_THROWS_AS(bad.validate(), error);
    bad = cfg;
    bad.classes = 1;
    CHECK_THROWS_AS(bad.validate(), error);
    bad = cfg;
    bad.mlp_layers = 0;
    CHECK_THROWS_AS(bad.validate(), error);
}
