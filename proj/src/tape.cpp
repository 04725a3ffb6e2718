#include "kcr/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "kcr/errors.hpp"

namespace kcr {

namespace {

constexpr double kGeluRoot = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
constexpr double kLayerNormEps = 1e-5;

Matrix slice_block(const Matrix& m, int row0, int nrows, int col0, int ncols) {
    Matrix out(nrows, ncols);
    for (int i = 0; i < nrows; ++i) {
        const double* src = m.row(row0 + i) + col0;
        double* dst = out.row(i);
        for (int j = 0; j < ncols; ++j) dst[j] = src[j];
    }
    return out;
}

void add_block(Matrix& dst, const Matrix& src, int row0, int col0) {
    for (int i = 0; i < src.rows; ++i) {
        const double* s = src.row(i);
        double* d = dst.row(row0 + i) + col0;
        for (int j = 0; j < src.cols; ++j) d[j] += s[j];
    }
}

std::vector<int> mask_indices(const Matrix& g, const char* op) {
    if (g.rows != 1) throw_dimension(std::string(op) + ": mask must be a single row");
    std::vector<int> keep;
    for (int j = 0; j < g.cols; ++j) {
        if (g(0, j) == 1.0) {
            keep.push_back(j);
        } else if (g(0, j) != 0.0) {
            throw_argument(std::string(op) + ": mask entries must be exactly 0 or 1");
        }
    }
    return keep;
}

} // namespace

Tape::NodeId Tape::put(Matrix value) { return emit(std::move(value), nullptr); }

Tape::NodeId Tape::emit(Matrix value, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
    return static_cast<NodeId>(nodes_.size()) - 1;
}

const Matrix& Tape::grad(NodeId id) const {
    const Matrix& g = nodes_[static_cast<size_t>(id)].grad;
    if (g.rows != nodes_[static_cast<size_t>(id)].value.rows) {
        throw_argument("gradient requested before backward()");
    }
    return g;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    Matrix v = kcr::matmul(value(a), value(b));
    return emit(std::move(v), [a, b, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        add_in_place(t.grad_mut(a), matmul_a_bt(g, t.value(b)));
        add_in_place(t.grad_mut(b), matmul_at_b(t.value(a), g));
    });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    Matrix v = kcr::add(value(a), value(b));
    return emit(std::move(v), [a, b, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        add_in_place(t.grad_mut(a), g);
        add_in_place(t.grad_mut(b), g);
    });
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    Matrix v = kcr::sub(value(a), value(b));
    return emit(std::move(v), [a, b, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        add_in_place(t.grad_mut(a), g);
        axpy_in_place(t.grad_mut(b), -1.0, g);
    });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    Matrix v = hadamard(value(a), value(b));
    return emit(std::move(v), [a, b, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        add_in_place(t.grad_mut(a), hadamard(g, t.value(b)));
        add_in_place(t.grad_mut(b), hadamard(g, t.value(a)));
    });
}

Tape::NodeId Tape::scale(NodeId a, double s) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    Matrix v = kcr::scale(value(a), s);
    return emit(std::move(v), [a, s, out](Tape& t) {
        axpy_in_place(t.grad_mut(a), s, t.grad_mut(out));
    });
}

Tape::NodeId Tape::add_row_broadcast(NodeId a, NodeId bias) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& va = value(a);
    const Matrix& vb = value(bias);
    if (vb.rows != 1 || vb.cols != va.cols) {
        throw_dimension("add_row_broadcast: bias must be 1x" + std::to_string(va.cols));
    }
    Matrix v = va;
    for (int i = 0; i < v.rows; ++i) {
        double* r = v.row(i);
        for (int j = 0; j < v.cols; ++j) r[j] += vb(0, j);
    }
    return emit(std::move(v), [a, bias, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        add_in_place(t.grad_mut(a), g);
        Matrix& gb = t.grad_mut(bias);
        for (int i = 0; i < g.rows; ++i) {
            const double* r = g.row(i);
            for (int j = 0; j < g.cols; ++j) gb(0, j) += r[j];
        }
    });
}

Tape::NodeId Tape::add_tiled(NodeId a, NodeId tile, int reps) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& va = value(a);
    const Matrix& vt = value(tile);
    if (reps < 1 || va.rows != reps * vt.rows || va.cols != vt.cols) {
        throw_dimension("add_tiled: " + std::to_string(va.rows) + "x" +
                        std::to_string(va.cols) + " vs " + std::to_string(reps) +
                        " tiles of " + std::to_string(vt.rows) + "x" +
                        std::to_string(vt.cols));
    }
    Matrix v = va;
    for (int rep = 0; rep < reps; ++rep) {
        for (int i = 0; i < vt.rows; ++i) {
            double* r = v.row(rep * vt.rows + i);
            const double* s = vt.row(i);
            for (int j = 0; j < vt.cols; ++j) r[j] += s[j];
        }
    }
    return emit(std::move(v), [a, tile, reps, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        add_in_place(t.grad_mut(a), g);
        Matrix& gt = t.grad_mut(tile);
        for (int rep = 0; rep < reps; ++rep) {
            for (int i = 0; i < gt.rows; ++i) {
                const double* r = g.row(rep * gt.rows + i);
                double* d = gt.row(i);
                for (int j = 0; j < gt.cols; ++j) d[j] += r[j];
            }
        }
    });
}

Tape::NodeId Tape::scale_cols(NodeId a, NodeId mask) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& va = value(a);
    const Matrix& vm = value(mask);
    if (vm.rows != 1 || vm.cols != va.cols) {
        throw_dimension("scale_cols: mask must be 1x" + std::to_string(va.cols));
    }
    Matrix v = va;
    for (int i = 0; i < v.rows; ++i) {
        double* r = v.row(i);
        for (int j = 0; j < v.cols; ++j) r[j] *= vm(0, j);
    }
    return emit(std::move(v), [a, mask, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        const Matrix& va2 = t.value(a);
        const Matrix& vm2 = t.value(mask);
        Matrix& ga = t.grad_mut(a);
        Matrix& gm = t.grad_mut(mask);
        for (int i = 0; i < g.rows; ++i) {
            const double* gr = g.row(i);
            const double* ar = va2.row(i);
            double* dr = ga.row(i);
            for (int j = 0; j < g.cols; ++j) {
                dr[j] += gr[j] * vm2(0, j);
                gm(0, j) += gr[j] * ar[j];
            }
        }
    });
}

Tape::NodeId Tape::sigmoid(NodeId a) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    Matrix v = value(a);
    for (double& x : v.d) {
        if (x >= 0.0) {
            x = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            x = e / (1.0 + e);
        }
    }
    return emit(std::move(v), [a, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        const Matrix& y = t.value(out);
        Matrix& ga = t.grad_mut(a);
        for (size_t i = 0; i < g.d.size(); ++i) {
            ga.d[i] += g.d[i] * y.d[i] * (1.0 - y.d[i]);
        }
    });
}

Tape::NodeId Tape::gelu(NodeId a) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    Matrix v = value(a);
    for (double& x : v.d) {
        const double u = kGeluRoot * (x + kGeluCubic * x * x * x);
        x = 0.5 * x * (1.0 + std::tanh(u));
    }
    return emit(std::move(v), [a, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        const Matrix& x = t.value(a);
        Matrix& ga = t.grad_mut(a);
        for (size_t i = 0; i < g.d.size(); ++i) {
            const double xi = x.d[i];
            const double u = kGeluRoot * (xi + kGeluCubic * xi * xi * xi);
            const double th = std::tanh(u);
            const double du = kGeluRoot * (1.0 + 3.0 * kGeluCubic * xi * xi);
            ga.d[i] += g.d[i] * (0.5 * (1.0 + th) + 0.5 * xi * (1.0 - th * th) * du);
        }
    });
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& vx = value(x);
    const Matrix& vg = value(gamma);
    const Matrix& vb = value(beta);
    if (vg.rows != 1 || vg.cols != vx.cols || vb.rows != 1 || vb.cols != vx.cols) {
        throw_dimension("layer_norm: gain and shift must be 1x" + std::to_string(vx.cols));
    }
    const int d = vx.cols;
    Matrix xhat(vx.rows, d);
    std::vector<double> inv_std(static_cast<size_t>(vx.rows));
    Matrix v(vx.rows, d);
    for (int i = 0; i < vx.rows; ++i) {
        const double* r = vx.row(i);
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += r[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= d;
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std[static_cast<size_t>(i)] = is;
        double* xh = xhat.row(i);
        double* o = v.row(i);
        for (int j = 0; j < d; ++j) {
            xh[j] = (r[j] - mean) * is;
            o[j] = xh[j] * vg(0, j) + vb(0, j);
        }
    }
    return emit(std::move(v),
                [x, gamma, beta, out, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        const Matrix& vg2 = t.value(gamma);
        Matrix& gx = t.grad_mut(x);
        Matrix& gg = t.grad_mut(gamma);
        Matrix& gb = t.grad_mut(beta);
        const int d2 = g.cols;
        for (int i = 0; i < g.rows; ++i) {
            const double* gr = g.row(i);
            const double* xh = xhat.row(i);
            double* gxr = gx.row(i);
            double mean_dxhat = 0.0;
            double mean_dxhat_xhat = 0.0;
            for (int j = 0; j < d2; ++j) {
                gb(0, j) += gr[j];
                gg(0, j) += gr[j] * xh[j];
                const double dxh = gr[j] * vg2(0, j);
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xh[j];
            }
            mean_dxhat /= d2;
            mean_dxhat_xhat /= d2;
            const double is = inv_std[static_cast<size_t>(i)];
            for (int j = 0; j < d2; ++j) {
                const double dxh = gr[j] * vg2(0, j);
                gxr[j] += is * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
        }
    });
}

Tape::NodeId Tape::attention_core(NodeId q, NodeId k, NodeId v, int batch, int tokens,
                                  int heads) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& vq = value(q);
    const Matrix& vk = value(k);
    const Matrix& vv = value(v);
    const int d = vq.cols;
    if (vq.rows != batch * tokens || !vq.same_shape(vk) || !vq.same_shape(vv)) {
        throw_dimension("attention_core: q/k/v must all be " +
                        std::to_string(batch * tokens) + "x" + std::to_string(d));
    }
    if (heads < 1 || d % heads != 0) {
        throw_dimension("attention_core: width " + std::to_string(d) +
                        " not divisible by " + std::to_string(heads) + " heads");
    }
    const int dh = d / heads;
    const double inv_root = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix result(batch * tokens, d);
    Matrix soft(batch * heads * tokens, tokens); // softmax rows, kept for backward
    for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
            const Matrix qs = slice_block(vq, b * tokens, tokens, h * dh, dh);
            const Matrix ks = slice_block(vk, b * tokens, tokens, h * dh, dh);
            const Matrix vs = slice_block(vv, b * tokens, tokens, h * dh, dh);
            Matrix scores = matmul_a_bt(qs, ks);
            for (double& s : scores.d) s *= inv_root;
            for (int i = 0; i < tokens; ++i) {
                double* r = scores.row(i);
                double mx = r[0];
                for (int j = 1; j < tokens; ++j) mx = std::max(mx, r[j]);
                double total = 0.0;
                for (int j = 0; j < tokens; ++j) {
                    r[j] = std::exp(r[j] - mx);
                    total += r[j];
                }
                const double inv = 1.0 / total;
                double* dst = soft.row((b * heads + h) * tokens + i);
                for (int j = 0; j < tokens; ++j) {
                    r[j] *= inv;
                    dst[j] = r[j];
                }
            }
            add_block(result, kcr::matmul(scores, vs), b * tokens, h * dh);
        }
    }
    return emit(std::move(result),
                [q, k, v, batch, tokens, heads, dh, inv_root, out,
                 soft = std::move(soft)](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        const Matrix& vq2 = t.value(q);
        const Matrix& vk2 = t.value(k);
        const Matrix& vv2 = t.value(v);
        Matrix& gq = t.grad_mut(q);
        Matrix& gk = t.grad_mut(k);
        Matrix& gv = t.grad_mut(v);
        for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < heads; ++h) {
                const Matrix go = slice_block(g, b * tokens, tokens, h * dh, dh);
                const Matrix qs = slice_block(vq2, b * tokens, tokens, h * dh, dh);
                const Matrix ks = slice_block(vk2, b * tokens, tokens, h * dh, dh);
                const Matrix vs = slice_block(vv2, b * tokens, tokens, h * dh, dh);
                const Matrix a =
                    slice_block(soft, (b * heads + h) * tokens, tokens, 0, tokens);

                add_block(gv, matmul_at_b(a, go), b * tokens, h * dh);

                Matrix gs = matmul_a_bt(go, vs); // gradient at the softmax output
                for (int i = 0; i < tokens; ++i) {
                    double* gr = gs.row(i);
                    const double* ar = a.row(i);
                    double dot = 0.0;
                    for (int j = 0; j < tokens; ++j) dot += gr[j] * ar[j];
                    for (int j = 0; j < tokens; ++j) gr[j] = ar[j] * (gr[j] - dot);
                }
                for (double& s : gs.d) s *= inv_root;
                add_block(gq, kcr::matmul(gs, ks), b * tokens, h * dh);
                add_block(gk, matmul_at_b(gs, qs), b * tokens, h * dh);
            }
        }
    });
}

Tape::NodeId Tape::gather_cols(NodeId a, const Matrix& g) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& va = value(a);
    if (g.cols != va.cols) {
        throw_dimension("gather_cols: mask width " + std::to_string(g.cols) +
                        " vs matrix width " + std::to_string(va.cols));
    }
    std::vector<int> keep = mask_indices(g, "gather_cols");
    Matrix v(va.rows, static_cast<int>(keep.size()));
    for (int i = 0; i < va.rows; ++i) {
        const double* src = va.row(i);
        double* dst = v.row(i);
        for (size_t c = 0; c < keep.size(); ++c) dst[c] = src[keep[c]];
    }
    return emit(std::move(v), [a, out, keep = std::move(keep)](Tape& t) {
        const Matrix& gr = t.grad_mut(out);
        Matrix& ga = t.grad_mut(a);
        for (int i = 0; i < gr.rows; ++i) {
            const double* src = gr.row(i);
            double* dst = ga.row(i);
            for (size_t c = 0; c < keep.size(); ++c) dst[keep[c]] += src[c];
        }
    });
}

Tape::NodeId Tape::scatter_cols(NodeId a, const Matrix& g, int d) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& va = value(a);
    if (g.cols != d) {
        throw_dimension("scatter_cols: mask width " + std::to_string(g.cols) +
                        " vs target width " + std::to_string(d));
    }
    std::vector<int> keep = mask_indices(g, "scatter_cols");
    if (static_cast<int>(keep.size()) != va.cols) {
        throw_dimension("scatter_cols: " + std::to_string(va.cols) + " columns vs " +
                        std::to_string(keep.size()) + " selected slots");
    }
    Matrix v(va.rows, d);
    for (int i = 0; i < va.rows; ++i) {
        const double* src = va.row(i);
        double* dst = v.row(i);
        for (size_t c = 0; c < keep.size(); ++c) dst[keep[c]] = src[c];
    }
    return emit(std::move(v), [a, out, keep = std::move(keep)](Tape& t) {
        const Matrix& gr = t.grad_mut(out);
        Matrix& ga = t.grad_mut(a);
        for (int i = 0; i < gr.rows; ++i) {
            const double* src = gr.row(i);
            double* dst = ga.row(i);
            for (size_t c = 0; c < keep.size(); ++c) dst[c] += src[keep[c]];
        }
    });
}

Tape::NodeId Tape::mean_pool(NodeId a, int tokens) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& va = value(a);
    if (tokens < 1 || va.rows % tokens != 0) {
        throw_dimension("mean_pool: " + std::to_string(va.rows) +
                        " rows not divisible into groups of " + std::to_string(tokens));
    }
    const int batch = va.rows / tokens;
    const double inv = 1.0 / static_cast<double>(tokens);
    Matrix v(batch, va.cols);
    for (int b = 0; b < batch; ++b) {
        double* dst = v.row(b);
        for (int s = 0; s < tokens; ++s) {
            const double* src = va.row(b * tokens + s);
            for (int j = 0; j < va.cols; ++j) dst[j] += src[j];
        }
        for (int j = 0; j < va.cols; ++j) dst[j] *= inv;
    }
    return emit(std::move(v), [a, tokens, inv, out](Tape& t) {
        const Matrix& g = t.grad_mut(out);
        Matrix& ga = t.grad_mut(a);
        for (int b = 0; b < g.rows; ++b) {
            const double* src = g.row(b);
            for (int s = 0; s < tokens; ++s) {
                double* dst = ga.row(b * tokens + s);
                for (int j = 0; j < g.cols; ++j) dst[j] += src[j] * inv;
            }
        }
    });
}

Tape::NodeId Tape::ce_loss(NodeId logits, const std::vector<int>& labels) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& vl = value(logits);
    if (static_cast<int>(labels.size()) != vl.rows) {
        throw_dimension("ce_loss: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(vl.rows) + " rows");
    }
    Matrix soft(vl.rows, vl.cols);
    double total = 0.0;
    for (int i = 0; i < vl.rows; ++i) {
        const int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= vl.cols) {
            throw_argument("ce_loss: label " + std::to_string(label) + " outside [0, " +
                           std::to_string(vl.cols) + ")");
        }
        const double* r = vl.row(i);
        double mx = r[0];
        for (int j = 1; j < vl.cols; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        double* sr = soft.row(i);
        for (int j = 0; j < vl.cols; ++j) {
            sr[j] = std::exp(r[j] - mx);
            sum += sr[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < vl.cols; ++j) sr[j] *= inv;
        total += std::log(sum) - (r[label] - mx);
    }
    Matrix v(1, 1);
    v(0, 0) = total / vl.rows;
    return emit(std::move(v),
                [logits, labels, out, soft = std::move(soft)](Tape& t) {
        const double g = t.grad_mut(out)(0, 0);
        Matrix& gl = t.grad_mut(logits);
        const double per_row = g / gl.rows;
        for (int i = 0; i < gl.rows; ++i) {
            const double* sr = soft.row(i);
            double* dst = gl.row(i);
            for (int j = 0; j < gl.cols; ++j) dst[j] += per_row * sr[j];
            dst[labels[static_cast<size_t>(i)]] -= per_row;
        }
    });
}

Tape::NodeId Tape::kcr_loss(NodeId feats, const Matrix& u_batch, const Matrix& p) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& vf = value(feats);
    if (u_batch.rows != vf.rows) {
        throw_dimension("kcr_loss: " + std::to_string(u_batch.rows) +
                        " projection rows for " + std::to_string(vf.rows) + " samples");
    }
    if (p.rows != vf.cols || p.cols != u_batch.cols) {
        throw_dimension("kcr_loss: projection cache is " + std::to_string(p.rows) + "x" +
                        std::to_string(p.cols) + ", expected " + std::to_string(vf.cols) +
                        "x" + std::to_string(u_batch.cols));
    }
    const Matrix fp = kcr::matmul(vf, p); // B x r
    double total = 0.0;
    for (int i = 0; i < vf.rows; ++i) {
        const double* f = vf.row(i);
        double norm_sq = 0.0;
        for (int j = 0; j < vf.cols; ++j) norm_sq += f[j] * f[j];
        const double* fpr = fp.row(i);
        const double* ur = u_batch.row(i);
        double inner = 0.0;
        for (int j = 0; j < fp.cols; ++j) inner += fpr[j] * ur[j];
        total += norm_sq - inner;
    }
    Matrix v(1, 1);
    v(0, 0) = total / vf.rows;
    // u_batch and p are epoch-frozen bank constants; captured by value so the
    // tape owns them through backward.
    return emit(std::move(v), [feats, out, u = u_batch, pc = p](Tape& t) {
        const double g = t.grad_mut(out)(0, 0);
        const Matrix& vf2 = t.value(feats);
        Matrix& gf = t.grad_mut(feats);
        const double s = g / vf2.rows;
        const Matrix upt = matmul_a_bt(u, pc); // B x d
        for (size_t i = 0; i < gf.d.size(); ++i) {
            gf.d[i] += s * (2.0 * vf2.d[i] - upt.d[i]);
        }
    });
}

Tape::NodeId Tape::sum_all(NodeId a) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& va = value(a);
    Matrix v(1, 1);
    double s = 0.0;
    for (double x : va.d) s += x;
    v(0, 0) = s;
    return emit(std::move(v), [a, out](Tape& t) {
        const double g = t.grad_mut(out)(0, 0);
        Matrix& ga = t.grad_mut(a);
        for (double& x : ga.d) x += g;
    });
}

Tape::NodeId Tape::log_(NodeId a) {
    const NodeId out = static_cast<NodeId>(nodes_.size());
    const Matrix& va = value(a);
    if (va.rows != 1 || va.cols != 1) throw_dimension("log: input must be a scalar");
    if (!(va(0, 0) > 0.0)) {
        throw_numeric("log of non-positive value " + std::to_string(va(0, 0)));
    }
    Matrix v(1, 1);
    v(0, 0) = std::log(va(0, 0));
    return emit(std::move(v), [a, out](Tape& t) {
        t.grad_mut(a)(0, 0) += t.grad_mut(out)(0, 0) / t.value(a)(0, 0);
    });
}

void Tape::backward(NodeId root) {
    if (root < 0 || root >= static_cast<NodeId>(nodes_.size())) {
        throw_argument("backward: unknown node");
    }
    const Matrix& rv = nodes_[static_cast<size_t>(root)].value;
    if (rv.rows != 1 || rv.cols != 1) {
        throw_argument("backward: root must be a scalar");
    }
    if (!nodes_[static_cast<size_t>(root)].grad.empty()) {
        throw_argument("backward: already run on this tape");
    }
    for (NodeId i = 0; i <= root; ++i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        n.grad = Matrix(n.value.rows, n.value.cols);
    }
    nodes_[static_cast<size_t>(root)].grad(0, 0) = 1.0;
    for (NodeId i = root; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.back) n.back(*this);
    }
}

} // namespace kcr
