#pragma once

#include <functional>
#include <vector>

#include "kcr/matrix.hpp"

namespace kcr {

/// Reverse-mode autodiff over Matrix values. One tape per forward pass;
/// nodes are created in topological order and backward() replays them in
/// reverse. Gradients are only allocated when backward() runs, so
/// evaluation-only passes pay nothing beyond the stored activations.
class Tape {
public:
    using NodeId = int;

    NodeId put(Matrix value); // leaf: parameter, input, or constant

    const Matrix& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Matrix& grad(NodeId id) const;

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);

    // rows of a plus a 1 x cols bias row
    NodeId add_row_broadcast(NodeId a, NodeId bias);

    // a is (reps * n) x d, tile is n x d; adds the tile to every group
    NodeId add_tiled(NodeId a, NodeId tile, int reps);

    // column-wise scaling by a 1 x cols mask node; gradient reaches both
    NodeId scale_cols(NodeId a, NodeId mask);

    NodeId sigmoid(NodeId a);
    NodeId gelu(NodeId a); // tanh form, smooth everywhere

    // per-row normalization with learned 1 x cols gain and shift, eps 1e-5
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta);

    // q, k, v are (batch * tokens) x d stacked; per image and head:
    // softmax(Q K^T / sqrt(d_head)) V, softmax matrices kept for backward
    NodeId attention_core(NodeId q, NodeId k, NodeId v, int batch, int tokens, int heads);

    // fixed 0/1 column masks (not differentiated through the mask)
    NodeId gather_cols(NodeId a, const Matrix& g);
    NodeId scatter_cols(NodeId a, const Matrix& g, int d);

    // (batch * tokens) x d -> batch x d, mean over each token group
    NodeId mean_pool(NodeId a, int tokens);

    // mean over rows of -log softmax(logits)[label], max-stabilized
    NodeId ce_loss(NodeId logits, const std::vector<int>& labels);

    // (1/B) sum_i (|f_i|^2 - <u_i, f_i P>) with u, p epoch-frozen constants
    NodeId kcr_loss(NodeId feats, const Matrix& u_batch, const Matrix& p);

    NodeId sum_all(NodeId a); // 1x1
    NodeId log_(NodeId a);    // 1x1, natural log, input must be positive

    // seeds d(root)/d(root) = 1 and accumulates into every earlier node
    void backward(NodeId root);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&)> back;
    };
    std::vector<Node> nodes_;

    Matrix& grad_mut(NodeId id) { return nodes_[static_cast<size_t>(id)].grad; }
    NodeId emit(Matrix value, std::function<void(Tape&)> back);
};

} // namespace kcr
