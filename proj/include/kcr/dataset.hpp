#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kcr/matrix.hpp"
#include "kcr/rng.hpp"

namespace kcr {

// Image classification set. Each row of images is one flattened
// image_side x image_side grayscale image with values in [0, 1];
// labels[i] lies in [0, classes).
struct Dataset {
    Matrix images;
    std::vector<int> labels;
    int image_side = 0;
    int classes = 0;

    int size() const { return images.rows; }
    void validate() const;
};

struct GenSpec {
    int classes = 4;
    int n_train = 2048;
    int n_val = 512;
    int image_side = 16;
    double noise = 0.8;
    double class_scale = 0.12;
};

// Gaussian-mixture images: one pixel template per class plus per-pixel noise.
// Train and validation share the templates and are sampled from one stream,
// so the pair is a deterministic function of (spec, seed). Pixels are
// quantized to bytes up front, which makes an IDX write/load round trip exact.
std::pair<Dataset, Dataset> gen_split(const GenSpec& spec, uint64_t seed);

// IDX interchange files (big-endian magic 0x00000803 for image tensors,
// 0x00000801 for label vectors), byte pixels in row-major order.
void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path);
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

} // namespace kcr
