#include "kcr/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "kcr/errors.hpp"

namespace kcr {

void ModelConfig::validate() const {
    if (image_side < 1 || patch < 1 || image_side % patch != 0) {
        throw_config("image side " + std::to_string(image_side) +
                     " not divisible by patch " + std::to_string(patch));
    }
    if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) {
        throw_config("embed width " + std::to_string(embed_dim) +
                     " not divisible by " + std::to_string(heads) + " heads");
    }
    if (depth < 1) throw_config("depth must be at least 1");
    if (mlp_layers < 1) throw_config("mlp layer count must be at least 1");
    if (classes < 2) throw_config("need at least 2 classes");
}

namespace {

Matrix fan_in_uniform(int rows, int cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    return rng.uniform_matrix(rows, cols, -bound, bound);
}

Matrix ones_row(int n) {
    Matrix m(1, n);
    m.fill(1.0);
    return m;
}

Block make_block(int d, int mlp_width, int mlp_layers, double tau_init, int d_min,
                 std::vector<int> channels, Rng& rng) {
    Block b;
    b.ln1_g = ones_row(d);
    b.ln1_b = Matrix(1, d);
    b.wq = fan_in_uniform(d, d, rng);
    b.bq = Matrix(1, d);
    b.wk = fan_in_uniform(d, d, rng);
    b.bk = Matrix(1, d);
    b.wv = fan_in_uniform(d, d, rng);
    b.bv = Matrix(1, d);
    b.wo = fan_in_uniform(d, d, rng);
    b.bo = Matrix(1, d);
    b.ln2_g = ones_row(d);
    b.ln2_b = Matrix(1, d);
    b.mlp_w.reserve(static_cast<size_t>(mlp_layers));
    b.mlp_b.reserve(static_cast<size_t>(mlp_layers));
    for (int k = 0; k < mlp_layers; ++k) {
        b.mlp_w.push_back(fan_in_uniform(mlp_width, mlp_width, rng));
        b.mlp_b.push_back(Matrix(1, mlp_width));
    }
    b.selector = ChannelSelector(d, tau_init, d_min);
    b.channels = std::move(channels);
    return b;
}

std::vector<int> all_channels(int d) {
    std::vector<int> v(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) v[static_cast<size_t>(i)] = i;
    return v;
}

Matrix mask_from_channels(const std::vector<int>& channels, int d) {
    Matrix g(1, d);
    for (int c : channels) g(0, c) = 1.0;
    return g;
}

Matrix gather_square(const Matrix& w, const std::vector<int>& keep) {
    const int m = static_cast<int>(keep.size());
    Matrix out(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            out(i, j) = w(keep[static_cast<size_t>(i)], keep[static_cast<size_t>(j)]);
    return out;
}

Matrix gather_row(const Matrix& b, const std::vector<int>& keep) {
    Matrix out(1, static_cast<int>(keep.size()));
    for (size_t i = 0; i < keep.size(); ++i) out(0, static_cast<int>(i)) = b(0, keep[i]);
    return out;
}

} // namespace

KcrNet make_supernet(const ModelConfig& cfg, double tau_init, int d_min, Rng& rng) {
    cfg.validate();
    KcrNet net;
    net.cfg = cfg;
    net.gathered = false;
    net.patch_w = fan_in_uniform(cfg.patch_dim(), cfg.embed_dim, rng);
    net.patch_b = Matrix(1, cfg.embed_dim);
    if (cfg.pos_embed) {
        net.pos = scale(rng.normal_matrix(cfg.tokens(), cfg.embed_dim), 0.02);
    }
    net.blocks.reserve(static_cast<size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        net.blocks.push_back(make_block(cfg.embed_dim, cfg.embed_dim, cfg.mlp_layers,
                                        tau_init, d_min, all_channels(cfg.embed_dim), rng));
        // alphas start spread over [0, 1): every channel is kept by a fresh
        // harden, and crossing below zero takes accumulated cost pressure, so
        // the pruned fraction tracks lambda instead of flipping at a boundary
        net.blocks.back().selector.alpha =
            rng.uniform_matrix(1, cfg.embed_dim, 0.0, 1.0);
    }
    net.classifier = Matrix(cfg.d_feat(), cfg.classes);
    return net;
}

KcrNet make_pruned(const ModelConfig& cfg, const std::vector<std::vector<int>>& channels,
                   const std::vector<Matrix>& alphas, double tau_init, int d_min, Rng& rng) {
    cfg.validate();
    if (static_cast<int>(channels.size()) != cfg.depth ||
        static_cast<int>(alphas.size()) != cfg.depth) {
        throw_argument("make_pruned: need one channel list and alpha row per block");
    }
    KcrNet net;
    net.cfg = cfg;
    net.gathered = true;
    net.patch_w = fan_in_uniform(cfg.patch_dim(), cfg.embed_dim, rng);
    net.patch_b = Matrix(1, cfg.embed_dim);
    if (cfg.pos_embed) {
        net.pos = scale(rng.normal_matrix(cfg.tokens(), cfg.embed_dim), 0.02);
    }
    net.blocks.reserve(static_cast<size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        const auto& keep = channels[static_cast<size_t>(i)];
        if (keep.empty()) throw_argument("make_pruned: empty channel list");
        for (size_t k = 0; k < keep.size(); ++k) {
            if (keep[k] < 0 || keep[k] >= cfg.embed_dim ||
                (k > 0 && keep[k] <= keep[k - 1])) {
                throw_argument("make_pruned: channel ids must be ascending in [0, D)");
            }
        }
        Block b = make_block(cfg.embed_dim, static_cast<int>(keep.size()), cfg.mlp_layers,
                             tau_init, std::min(d_min, static_cast<int>(keep.size())),
                             keep, rng);
        b.selector.alpha = alphas[static_cast<size_t>(i)];
        net.blocks.push_back(std::move(b));
    }
    net.classifier = Matrix(cfg.d_feat(), cfg.classes);
    return net;
}

std::vector<ParamRef> params(KcrNet& net) {
    std::vector<ParamRef> out;
    out.push_back({"patch_embed.w", &net.patch_w, true, false});
    out.push_back({"patch_embed.b", &net.patch_b, false, false});
    if (net.cfg.pos_embed) out.push_back({"pos", &net.pos, false, false});
    for (size_t i = 0; i < net.blocks.size(); ++i) {
        Block& b = net.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        out.push_back({p + "ln1.g", &b.ln1_g, false, false});
        out.push_back({p + "ln1.b", &b.ln1_b, false, false});
        out.push_back({p + "attn.wq", &b.wq, true, false});
        out.push_back({p + "attn.bq", &b.bq, false, false});
        out.push_back({p + "attn.wk", &b.wk, true, false});
        out.push_back({p + "attn.bk", &b.bk, false, false});
        out.push_back({p + "attn.wv", &b.wv, true, false});
        out.push_back({p + "attn.bv", &b.bv, false, false});
        out.push_back({p + "attn.wo", &b.wo, true, false});
        out.push_back({p + "attn.bo", &b.bo, false, false});
        out.push_back({p + "ln2.g", &b.ln2_g, false, false});
        out.push_back({p + "ln2.b", &b.ln2_b, false, false});
        for (size_t k = 0; k < b.mlp_w.size(); ++k) {
            out.push_back({p + "mlp" + std::to_string(k) + ".w", &b.mlp_w[k], true, false});
            out.push_back({p + "mlp" + std::to_string(k) + ".b", &b.mlp_b[k], false, false});
        }
        out.push_back({p + "alpha", &b.selector.alpha, false, true});
    }
    out.push_back({"classifier.w", &net.classifier, true, false});
    return out;
}

TapeForward build_forward(Tape& tape, KcrNet& net, const Matrix& tokens, int batch,
                          const ForwardSpec& spec) {
    const ModelConfig& cfg = net.cfg;
    const int n_tok = cfg.tokens();
    const int d = cfg.embed_dim;
    if (batch < 1 || tokens.rows != batch * n_tok || tokens.cols != cfg.patch_dim()) {
        throw_dimension("forward: token matrix is " + std::to_string(tokens.rows) + "x" +
                        std::to_string(tokens.cols) + ", expected " +
                        std::to_string(batch * n_tok) + "x" + std::to_string(cfg.patch_dim()));
    }
    const bool needs_full_width =
        spec.mode == ForwardMode::soft || spec.mode == ForwardMode::explicit_mask ||
        spec.mode == ForwardMode::mask_free;
    if (needs_full_width && net.gathered) {
        throw_argument("forward: masked/mask-free modes need the full-width net");
    }
    if (spec.mode == ForwardMode::soft && spec.rng == nullptr) {
        throw_argument("forward: soft mode needs a noise source");
    }
    if (spec.mode == ForwardMode::explicit_mask &&
        (spec.masks == nullptr || spec.masks->size() != net.blocks.size())) {
        throw_argument("forward: explicit mode needs one mask per block");
    }

    TapeForward fwd;
    std::unordered_map<const Matrix*, Tape::NodeId> leaf_of;
    for (const ParamRef& ref : params(net)) {
        const Tape::NodeId id = tape.put(*ref.tensor);
        fwd.param_nodes.push_back(id);
        leaf_of[ref.tensor] = id;
    }
    fwd.alpha_nodes.assign(net.blocks.size(), -1);

    Tape::NodeId x = tape.put(tokens);
    x = tape.add_row_broadcast(tape.matmul(x, leaf_of[&net.patch_w]), leaf_of[&net.patch_b]);
    if (cfg.pos_embed) x = tape.add_tiled(x, leaf_of[&net.pos], batch);

    for (size_t bi = 0; bi < net.blocks.size(); ++bi) {
        Block& blk = net.blocks[bi];
        const Tape::NodeId ln1 =
            tape.layer_norm(x, leaf_of[&blk.ln1_g], leaf_of[&blk.ln1_b]);
        const Tape::NodeId q =
            tape.add_row_broadcast(tape.matmul(ln1, leaf_of[&blk.wq]), leaf_of[&blk.bq]);
        const Tape::NodeId k =
            tape.add_row_broadcast(tape.matmul(ln1, leaf_of[&blk.wk]), leaf_of[&blk.bk]);
        const Tape::NodeId v =
            tape.add_row_broadcast(tape.matmul(ln1, leaf_of[&blk.wv]), leaf_of[&blk.bv]);
        const Tape::NodeId core = tape.attention_core(q, k, v, batch, n_tok, cfg.heads);
        const Tape::NodeId attn =
            tape.add_row_broadcast(tape.matmul(core, leaf_of[&blk.wo]), leaf_of[&blk.bo]);
        x = tape.add(x, attn);

        const Tape::NodeId ln2 =
            tape.layer_norm(x, leaf_of[&blk.ln2_g], leaf_of[&blk.ln2_b]);

        Tape::NodeId mlp_out = -1;
        const int layers = static_cast<int>(blk.mlp_w.size());
        if (spec.mode == ForwardMode::soft || spec.mode == ForwardMode::explicit_mask) {
            Tape::NodeId mask;
            if (spec.mode == ForwardMode::soft) {
                Matrix delta(1, d);
                for (int j = 0; j < d; ++j) {
                    const double e1 = spec.rng->gumbel();
                    const double e2 = spec.rng->gumbel();
                    delta(0, j) = e1 - e2;
                }
                const Tape::NodeId alpha_leaf = leaf_of[&blk.selector.alpha];
                fwd.alpha_nodes[bi] = alpha_leaf;
                mask = tape.sigmoid(tape.scale(tape.add(alpha_leaf, tape.put(delta)),
                                               1.0 / blk.selector.tau));
            } else {
                mask = tape.put((*spec.masks)[bi]);
            }
            Tape::NodeId h = tape.scale_cols(ln2, mask);
            for (int l = 0; l < layers; ++l) {
                h = tape.add_row_broadcast(tape.matmul(h, leaf_of[&blk.mlp_w[l]]),
                                           leaf_of[&blk.mlp_b[l]]);
                h = tape.scale_cols(h, mask);
                if (l + 1 < layers) h = tape.gelu(h);
            }
            mlp_out = h;
        } else if (spec.mode == ForwardMode::mask_free) {
            Tape::NodeId h = ln2;
            for (int l = 0; l < layers; ++l) {
                h = tape.add_row_broadcast(tape.matmul(h, leaf_of[&blk.mlp_w[l]]),
                                           leaf_of[&blk.mlp_b[l]]);
                if (l + 1 < layers) h = tape.gelu(h);
            }
            mlp_out = h;
        } else { // hard
            std::vector<int> keep;
            if (net.gathered) {
                keep = blk.channels;
            } else {
                const HardMask hm = harden(blk.selector);
                for (int j = 0; j < d; ++j)
                    if (hm.g(0, j) == 1.0) keep.push_back(j);
            }
            if (static_cast<int>(keep.size()) == d) {
                Tape::NodeId h = ln2;
                for (int l = 0; l < layers; ++l) {
                    Tape::NodeId w_leaf = leaf_of[&blk.mlp_w[l]];
                    Tape::NodeId b_leaf = leaf_of[&blk.mlp_b[l]];
                    if (!net.gathered && blk.mlp_w[l].rows != d) {
                        throw_dimension("forward: supernet mlp width mismatch");
                    }
                    h = tape.add_row_broadcast(tape.matmul(h, w_leaf), b_leaf);
                    if (l + 1 < layers) h = tape.gelu(h);
                }
                mlp_out = h;
            } else {
                const Matrix g = mask_from_channels(keep, d);
                Tape::NodeId h = tape.gather_cols(ln2, g);
                for (int l = 0; l < layers; ++l) {
                    Tape::NodeId w_leaf;
                    Tape::NodeId b_leaf;
                    if (net.gathered) {
                        w_leaf = leaf_of[&blk.mlp_w[l]];
                        b_leaf = leaf_of[&blk.mlp_b[l]];
                    } else {
                        // evaluation-only view of the supernet at its hard mask;
                        // gradients do not reach the full-width tensors
                        w_leaf = tape.put(gather_square(blk.mlp_w[l], keep));
                        b_leaf = tape.put(gather_row(blk.mlp_b[l], keep));
                    }
                    h = tape.add_row_broadcast(tape.matmul(h, w_leaf), b_leaf);
                    if (l + 1 < layers) h = tape.gelu(h);
                }
                mlp_out = tape.scatter_cols(h, g, d);
            }
        }
        x = tape.add(x, mlp_out);
    }

    fwd.features = tape.mean_pool(x, n_tok);
    fwd.logits = tape.matmul(fwd.features, leaf_of[&net.classifier]);
    return fwd;
}

EvalOut forward_eval(KcrNet& net, const Matrix& tokens, int batch, const ForwardSpec& spec) {
    Tape tape;
    const TapeForward fwd = build_forward(tape, net, tokens, batch, spec);
    return EvalOut{tape.value(fwd.logits), tape.value(fwd.features)};
}

BatchLosses backward_batch(KcrNet& net, const Matrix& tokens, int batch,
                           const ForwardSpec& fwd_spec, const LossSpec& loss,
                           GradBundle& out) {
    if (loss.labels == nullptr) throw_argument("backward: labels are required");
    Tape tape;
    const TapeForward fwd = build_forward(tape, net, tokens, batch, fwd_spec);

    BatchLosses losses;
    const Tape::NodeId ce = tape.ce_loss(fwd.logits, *loss.labels);
    losses.ce = tape.value(ce)(0, 0);
    if (!std::isfinite(losses.ce)) throw_numeric("cross-entropy term is not finite");
    Tape::NodeId total = ce;

    if (loss.kcr_weight != 0.0) {
        if (loss.u_batch == nullptr || loss.p == nullptr) {
            throw_argument("backward: regularizer needs bank projections");
        }
        const Tape::NodeId reg = tape.kcr_loss(fwd.features, *loss.u_batch, *loss.p);
        losses.kcr_term = loss.kcr_weight * tape.value(reg)(0, 0);
        if (!std::isfinite(losses.kcr_term)) {
            throw_numeric("feature regularizer term is not finite");
        }
        total = tape.add(total, tape.scale(reg, loss.kcr_weight));
    }

    if (loss.cost_lambda != 0.0) {
        if (fwd_spec.mode != ForwardMode::soft) {
            throw_argument("backward: cost term needs soft-mask mode");
        }
        Tape::NodeId cost = -1;
        for (size_t bi = 0; bi < net.blocks.size(); ++bi) {
            const Tape::NodeId alpha_leaf = fwd.alpha_nodes[bi];
            const Tape::NodeId gates =
                tape.sigmoid(tape.scale(alpha_leaf, 1.0 / net.blocks[bi].selector.tau));
            const Tape::NodeId s = tape.sum_all(gates);
            const Tape::NodeId poly = tape.add(tape.scale(tape.mul(s, s), 2.0), s);
            const Tape::NodeId blk =
                tape.scale(poly, static_cast<double>(net.blocks[bi].mlp_w.size()));
            cost = (cost < 0) ? blk : tape.add(cost, blk);
        }
        const Tape::NodeId term = tape.scale(tape.log_(cost), loss.cost_lambda);
        losses.cost_term = tape.value(term)(0, 0);
        if (!std::isfinite(losses.cost_term)) throw_numeric("cost term is not finite");
        total = tape.add(total, term);
    }

    losses.total = tape.value(total)(0, 0);
    tape.backward(total);

    const std::vector<ParamRef> refs = params(net);
    out.names.clear();
    out.tensors.clear();
    out.names.reserve(refs.size());
    out.tensors.reserve(refs.size());
    for (size_t i = 0; i < refs.size(); ++i) {
        Matrix g = tape.grad(fwd.param_nodes[i]);
        g.check_finite("gradient for " + refs[i].name);
        out.names.push_back(refs[i].name);
        out.tensors.push_back(std::move(g));
    }
    return losses;
}

double loss_ce(const Matrix& logits, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != logits.rows) {
        throw_dimension("loss_ce: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(logits.rows) + " rows");
    }
    double total = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
        const int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= logits.cols) {
            throw_argument("loss_ce: label " + std::to_string(label) + " outside [0, " +
                           std::to_string(logits.cols) + ")");
        }
        const double* r = logits.row(i);
        double mx = r[0];
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) sum += std::exp(r[j] - mx);
        total += std::log(sum) - (r[label] - mx);
    }
    return total / logits.rows;
}

void sgd_step(KcrNet& net, const GradBundle& grads, double lr, double weight_decay,
              bool include_alpha) {
    const std::vector<ParamRef> refs = params(net);
    if (grads.tensors.size() != refs.size()) {
        throw_argument("sgd_step: gradient bundle does not match parameter registry");
    }
    for (size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].is_alpha && !include_alpha) continue;
        Matrix& p = *refs[i].tensor;
        const Matrix& g = grads.tensors[i];
        if (!p.same_shape(g)) throw_dimension("sgd_step: shape mismatch at " + refs[i].name);
        for (size_t j = 0; j < p.d.size(); ++j) {
            double next = p.d[j] - lr * g.d[j];
            if (refs[i].decay && weight_decay != 0.0) next -= lr * weight_decay * p.d[j];
            p.d[j] = next;
        }
    }
}

void AdamW::step(KcrNet& net, const GradBundle& grads, double lr) {
    const std::vector<ParamRef> refs = params(net);
    if (grads.tensors.size() != refs.size()) {
        throw_argument("adamw: gradient bundle does not match parameter registry");
    }
    std::vector<size_t> active;
    for (size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].is_alpha == alpha_only) active.push_back(i);
    }
    if (m.empty()) {
        for (size_t idx : active) {
            m.push_back(Matrix(refs[idx].tensor->rows, refs[idx].tensor->cols));
            v.push_back(Matrix(refs[idx].tensor->rows, refs[idx].tensor->cols));
        }
    }
    if (m.size() != active.size()) {
        throw_argument("adamw: state does not match parameter registry");
    }
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t a = 0; a < active.size(); ++a) {
        const ParamRef& ref = refs[active[a]];
        Matrix& p = *ref.tensor;
        const Matrix& g = grads.tensors[active[a]];
        if (!p.same_shape(g)) throw_dimension("adamw: shape mismatch at " + ref.name);
        Matrix& mi = m[a];
        Matrix& vi = v[a];
        for (size_t j = 0; j < p.d.size(); ++j) {
            mi.d[j] = beta1 * mi.d[j] + (1.0 - beta1) * g.d[j];
            vi.d[j] = beta2 * vi.d[j] + (1.0 - beta2) * g.d[j] * g.d[j];
            const double mhat = mi.d[j] / bc1;
            const double vhat = vi.d[j] / bc2;
            double delta = mhat / (std::sqrt(vhat) + eps);
            if (ref.decay && weight_decay != 0.0) delta += weight_decay * p.d[j];
            p.d[j] -= lr * delta;
        }
    }
}

Matrix patchify(const Matrix& image, int patch) {
    if (patch < 1 || image.rows % patch != 0 || image.cols % patch != 0) {
        throw_config("patchify: image " + std::to_string(image.rows) + "x" +
                     std::to_string(image.cols) + " not divisible by patch " +
                     std::to_string(patch));
    }
    const int rows = image.rows / patch;
    const int cols = image.cols / patch;
    Matrix out(rows * cols, patch * patch);
    for (int pr = 0; pr < rows; ++pr) {
        for (int pc = 0; pc < cols; ++pc) {
            double* dst = out.row(pr * cols + pc);
            for (int a = 0; a < patch; ++a) {
                const double* src = image.row(pr * patch + a) + pc * patch;
                for (int b = 0; b < patch; ++b) dst[a * patch + b] = src[b];
            }
        }
    }
    return out;
}

Matrix patchify_batch(const Matrix& images, int image_side, int patch) {
    if (images.cols != image_side * image_side) {
        throw_dimension("patchify_batch: rows of length " + std::to_string(images.cols) +
                        " are not " + std::to_string(image_side) + "x" +
                        std::to_string(image_side) + " images");
    }
    if (patch < 1 || image_side % patch != 0) {
        throw_config("patchify_batch: image side " + std::to_string(image_side) +
                     " not divisible by patch " + std::to_string(patch));
    }
    const int side = image_side / patch;
    const int n_tok = side * side;
    Matrix out(images.rows * n_tok, patch * patch);
    for (int img = 0; img < images.rows; ++img) {
        const double* base = images.row(img);
        for (int pr = 0; pr < side; ++pr) {
            for (int pc = 0; pc < side; ++pc) {
                double* dst = out.row(img * n_tok + pr * side + pc);
                for (int a = 0; a < patch; ++a) {
                    const double* src = base + (pr * patch + a) * image_side + pc * patch;
                    for (int b = 0; b < patch; ++b) dst[a * patch + b] = src[b];
                }
            }
        }
    }
    return out;
}

Matrix extract_features(KcrNet& net, const Matrix& images, int batch_size) {
    if (batch_size < 1) throw_argument("extract_features: batch size must be positive");
    Matrix out(images.rows, net.cfg.d_feat());
    ForwardSpec spec;
    spec.mode = ForwardMode::hard;
    for (int start = 0; start < images.rows; start += batch_size) {
        const int count = std::min(batch_size, images.rows - start);
        Matrix chunk(count, images.cols);
        for (int i = 0; i < count; ++i) {
            const double* src = images.row(start + i);
            std::copy(src, src + images.cols, chunk.row(i));
        }
        const Matrix tokens = patchify_batch(chunk, net.cfg.image_side, net.cfg.patch);
        const EvalOut eval = forward_eval(net, tokens, count, spec);
        for (int i = 0; i < count; ++i) {
            const double* src = eval.features.row(i);
            std::copy(src, src + out.cols, out.row(start + i));
        }
    }
    return out;
}

HardArchitecture harden_architecture(const KcrNet& net) {
    HardArchitecture arch;
    const int d = net.cfg.embed_dim;
    for (const Block& blk : net.blocks) {
        std::vector<int> keep;
        Matrix g(1, d);
        if (net.gathered) {
            keep = blk.channels;
            g = mask_from_channels(keep, d);
        } else {
            const HardMask hm = harden(blk.selector);
            g = hm.g;
            for (int j = 0; j < d; ++j)
                if (g(0, j) == 1.0) keep.push_back(j);
        }
        const int64_t fl =
            flops_block(static_cast<int>(blk.mlp_w.size()), static_cast<int>(keep.size()));
        arch.channels.push_back(std::move(keep));
        arch.masks.push_back(std::move(g));
        arch.block_flops.push_back(fl);
        arch.total_flops += fl;
    }
    return arch;
}

} // namespace kcr
