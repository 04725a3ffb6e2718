#pragma once

#include <string>
#include <vector>

#include "kcr/matrix.hpp"
#include "kcr/rng.hpp"
#include "kcr/selection.hpp"
#include "kcr/tape.hpp"

namespace kcr {

struct ModelConfig {
    int image_side = 16;
    int patch = 4;
    int embed_dim = 64; // D, also the pooled feature width
    int heads = 4;
    int depth = 4;
    int mlp_layers = 2;
    int classes = 4;
    bool pos_embed = false;

    int tokens() const {
        const int side = image_side / patch;
        return side * side;
    }
    int patch_dim() const { return patch * patch; }
    int d_feat() const { return embed_dim; }
    void validate() const;
};

/// One transformer block with a prunable MLP. mlp weights are square with
/// width |channels|: the full embed width in a supernet, the surviving
/// channel count in a gathered (retrain) net.
struct Block {
    Matrix ln1_g, ln1_b;
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix ln2_g, ln2_b;
    std::vector<Matrix> mlp_w;
    std::vector<Matrix> mlp_b;
    ChannelSelector selector;  // width D; drives masks while searching
    std::vector<int> channels; // live channel ids, ascending

    int mlp_width() const { return static_cast<int>(channels.size()); }
};

struct KcrNet {
    ModelConfig cfg;
    bool gathered = false; // true once MLP weights are physically pruned
    Matrix patch_w, patch_b;
    Matrix pos; // tokens x D, present when cfg.pos_embed
    std::vector<Block> blocks;
    Matrix classifier; // d_feat x C, zero-initialized
};

// Full-width supernet with seeded uniform fan-in weights.
KcrNet make_supernet(const ModelConfig& cfg, double tau_init, int d_min, Rng& rng);

// Freshly initialized net with the given surviving channels per block.
// Selector alphas are copied so hardening remains consistent.
KcrNet make_pruned(const ModelConfig& cfg, const std::vector<std::vector<int>>& channels,
                   const std::vector<Matrix>& alphas, double tau_init, int d_min, Rng& rng);

struct ParamRef {
    std::string name;
    Matrix* tensor;
    bool decay;    // weight matrices only; biases, norms, alphas exempt
    bool is_alpha;
};

// Stable name/order registry over every trainable tensor including alphas.
std::vector<ParamRef> params(KcrNet& net);

enum class ForwardMode { mask_free, soft, hard, explicit_mask };

struct ForwardSpec {
    ForwardMode mode = ForwardMode::hard;
    Rng* rng = nullptr;                         // soft mode noise source
    const std::vector<Matrix>* masks = nullptr; // explicit_mask: one 1xD row per block
};

struct TapeForward {
    Tape::NodeId logits = -1;
    Tape::NodeId features = -1;
    std::vector<Tape::NodeId> param_nodes; // aligned with params(net)
    std::vector<Tape::NodeId> alpha_nodes; // per block, -1 unless soft mode
};

// Builds the whole batch graph on the tape. tokens is the stacked
// (batch * tokens()) x patch_dim matrix of patchified images.
TapeForward build_forward(Tape& tape, KcrNet& net, const Matrix& tokens, int batch,
                          const ForwardSpec& spec);

struct EvalOut {
    Matrix logits;   // B x C
    Matrix features; // B x d_feat
};

EvalOut forward_eval(KcrNet& net, const Matrix& tokens, int batch, const ForwardSpec& spec);

struct GradBundle {
    std::vector<std::string> names;
    std::vector<Matrix> tensors; // aligned with params(net)
};

struct BatchLosses {
    double total = 0.0;
    double ce = 0.0;
    double kcr_term = 0.0;  // already scaled by kcr_weight
    double cost_term = 0.0; // lambda * ln(soft cost)
};

struct LossSpec {
    const std::vector<int>* labels = nullptr; // required
    double kcr_weight = 0.0;
    const Matrix* u_batch = nullptr; // B x r bank rows, frozen
    const Matrix* p = nullptr;       // d_feat x r projection cache, frozen
    double cost_lambda = 0.0;        // search phase cost pressure
};

// Forward + reverse pass for one batch; gradients cover every parameter
// (alpha gradients flow through soft masks and the cost term only).
BatchLosses backward_batch(KcrNet& net, const Matrix& tokens, int batch,
                           const ForwardSpec& fwd, const LossSpec& loss, GradBundle& out);

double loss_ce(const Matrix& logits, const std::vector<int>& labels);

// Decoupled weight decay; p -= lr * g, then p -= lr * wd * p on decay tensors.
void sgd_step(KcrNet& net, const GradBundle& grads, double lr, double weight_decay,
              bool include_alpha);

struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool alpha_only = false; // step alphas instead of weights
    long step_count = 0;
    std::vector<Matrix> m, v; // lazily sized on first step

    void step(KcrNet& net, const GradBundle& grads, double lr);
};

// Row-major raster of non-overlapping patches, each patch flattened row-major.
Matrix patchify(const Matrix& image, int patch);

// images holds one flattened image_side x image_side image per row; output
// stacks every image's tokens: (rows * tokens) x patch^2.
Matrix patchify_batch(const Matrix& images, int image_side, int patch);

// Hard-mode features over the full set in index order, batched internally.
Matrix extract_features(KcrNet& net, const Matrix& images, int batch_size);

// Mask and per-block flops at the current hardened selectors.
struct HardArchitecture {
    std::vector<std::vector<int>> channels;
    std::vector<Matrix> masks;      // 1xD per block
    std::vector<int64_t> block_flops;
    int64_t total_flops = 0;
};

HardArchitecture harden_architecture(const KcrNet& net);

} // namespace kcr
