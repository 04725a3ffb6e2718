#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "kcr/dataset.hpp"
#include "kcr/model.hpp"

namespace kcr {

// Pipeline hyperparameters. Defaults are the toy-benchmark schedule.
struct RunConfig {
    int t_search = 10;
    int t_train = 40;
    int t_warm = 12;
    int batch = 64;
    double lr_max = 2e-3;
    double lr_min = 2e-4;
    int lr_warm_epochs = 3;
    double alpha_lr = 20.0; // raw-gradient steps; d(lambda * ln cost)/d(alpha) is ~1e-4 scale
    double weight_decay = 0.01;
    double kcr_weight = 1.0;
    double lambda = 0.1;
    double gamma = 0.05; // rank ratio; small r makes the regularizer concentrate
                         // spectral mass instead of merely tracking a wide tail
    int m_land = 256;
    double x = 1.0;
    double tau_init = 4.5;
    double tau_decay = 0.95;
    double split_weights = 0.7;
    int d_min = 8;

    void validate() const;
};

// Dataset source: either four IDX paths (all set) or a generator spec.
struct DatasetSpec {
    std::string train_images;
    std::string train_labels;
    std::string val_images;
    std::string val_labels;
    GenSpec gen;

    bool use_files() const;
};

struct FullConfig {
    uint64_t seed = 1;
    ModelConfig model;
    RunConfig run;
    DatasetSpec dataset;

    void validate() const;
    nlohmann::json to_json() const;
    static FullConfig from_json(const nlohmann::json& j);
    static FullConfig from_file(const std::string& path);
};

} // namespace kcr
