#include "kcr/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include "kcr/errors.hpp"

namespace kcr {

using nlohmann::json;

void RunConfig::validate() const {
    if (t_search < 0) throw_config("t_search must be non-negative");
    if (t_train < 0) throw_config("t_train must be non-negative");
    if (t_warm < 0 || t_warm > t_train) {
        throw_config("t_warm " + std::to_string(t_warm) + " outside [0, t_train = " +
                     std::to_string(t_train) + "]");
    }
    if (batch < 1) throw_config("batch must be positive");
    if (lr_min <= 0.0 || lr_max < lr_min) {
        throw_config("learning rates need 0 < lr_min <= lr_max");
    }
    if (lr_warm_epochs < 0) throw_config("lr_warm_epochs must be non-negative");
    if (alpha_lr <= 0.0) throw_config("alpha_lr must be positive");
    if (weight_decay < 0.0) throw_config("weight_decay must be non-negative");
    if (kcr_weight < 0.0) throw_config("kcr_weight must be non-negative");
    if (lambda < 0.0) throw_config("lambda must be non-negative");
    if (gamma <= 0.0 || gamma > 0.5) {
        throw_config("gamma " + std::to_string(gamma) + " outside (0, 0.5]");
    }
    if (m_land < 1) throw_config("m_land must be positive");
    if (x < 0.0) throw_config("x must be non-negative");
    if (tau_init <= 0.0) throw_config("tau_init must be positive");
    if (tau_decay <= 0.0 || tau_decay > 1.0) {
        throw_config("tau_decay " + std::to_string(tau_decay) + " outside (0, 1]");
    }
    if (split_weights <= 0.0 || split_weights >= 1.0) {
        throw_config("split_weights " + std::to_string(split_weights) + " outside (0, 1)");
    }
    if (d_min < 1) throw_config("d_min must be positive");
}

bool DatasetSpec::use_files() const {
    return !train_images.empty() || !train_labels.empty() || !val_images.empty() ||
           !val_labels.empty();
}

void FullConfig::validate() const {
    model.validate();
    run.validate();
    if (dataset.use_files()) {
        if (dataset.train_images.empty() || dataset.train_labels.empty() ||
            dataset.val_images.empty() || dataset.val_labels.empty()) {
            throw_config("dataset paths must all be set or all be empty");
        }
    } else {
        if (dataset.gen.classes != model.classes) {
            throw_config("generator classes " + std::to_string(dataset.gen.classes) +
                         " do not match model classes " + std::to_string(model.classes));
        }
        if (dataset.gen.image_side != model.image_side) {
            throw_config("generator image side " + std::to_string(dataset.gen.image_side) +
                         " does not match model image side " +
                         std::to_string(model.image_side));
        }
    }
}

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw_config(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) {
            if (it.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw_config("unknown key \"" + it.key() + "\" in " + where);
    }
}

void get_int(const json& j, const std::string& where, const char* key, int& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer()) throw_config(where + "." + key + " must be an integer");
    out = v.get<int>();
}

void get_double(const json& j, const std::string& where, const char* key, double& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number()) throw_config(where + "." + key + " must be a number");
    out = v.get<double>();
}

void get_bool(const json& j, const std::string& where, const char* key, bool& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_boolean()) throw_config(where + "." + key + " must be a boolean");
    out = v.get<bool>();
}

void get_string(const json& j, const std::string& where, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_string()) throw_config(where + "." + key + " must be a string");
    out = v.get<std::string>();
}

void get_seed(const json& j, const std::string& where, const char* key, uint64_t& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<int64_t>() < 0)) {
        throw_config(where + "." + key + " must be a non-negative integer");
    }
    out = v.get<uint64_t>();
}

} // namespace

json FullConfig::to_json() const {
    json j;
    j["schema"] = 1;
    j["seed"] = seed;
    j["model"] = {
        {"image_side", model.image_side}, {"patch", model.patch},
        {"embed_dim", model.embed_dim},   {"heads", model.heads},
        {"depth", model.depth},           {"mlp_layers", model.mlp_layers},
        {"classes", model.classes},       {"pos_embed", model.pos_embed},
    };
    j["run"] = {
        {"t_search", run.t_search},
        {"t_train", run.t_train},
        {"t_warm", run.t_warm},
        {"batch", run.batch},
        {"lr_max", run.lr_max},
        {"lr_min", run.lr_min},
        {"lr_warm_epochs", run.lr_warm_epochs},
        {"alpha_lr", run.alpha_lr},
        {"weight_decay", run.weight_decay},
        {"kcr_weight", run.kcr_weight},
        {"lambda", run.lambda},
        {"gamma", run.gamma},
        {"m_land", run.m_land},
        {"x", run.x},
        {"tau_init", run.tau_init},
        {"tau_decay", run.tau_decay},
        {"split_weights", run.split_weights},
        {"d_min", run.d_min},
    };
    j["dataset"] = {
        {"train_images", dataset.train_images},
        {"train_labels", dataset.train_labels},
        {"val_images", dataset.val_images},
        {"val_labels", dataset.val_labels},
        {"gen",
         {
             {"classes", dataset.gen.classes},
             {"n_train", dataset.gen.n_train},
             {"n_val", dataset.gen.n_val},
             {"image_side", dataset.gen.image_side},
             {"noise", dataset.gen.noise},
             {"class_scale", dataset.gen.class_scale},
         }},
    };
    return j;
}

FullConfig FullConfig::from_json(const json& j) {
    check_keys(j, "config", {"schema", "seed", "model", "run", "dataset"});
    if (j.contains("schema")) {
        const json& v = j.at("schema");
        if (!v.is_number_integer() || v.get<int>() != 1) {
            throw_config("unsupported config schema, expected 1");
        }
    }
    FullConfig cfg;
    get_seed(j, "config", "seed", cfg.seed);

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "config.model",
                   {"image_side", "patch", "embed_dim", "heads", "depth", "mlp_layers",
                    "classes", "pos_embed"});
        get_int(m, "config.model", "image_side", cfg.model.image_side);
        get_int(m, "config.model", "patch", cfg.model.patch);
        get_int(m, "config.model", "embed_dim", cfg.model.embed_dim);
        get_int(m, "config.model", "heads", cfg.model.heads);
        get_int(m, "config.model", "depth", cfg.model.depth);
        get_int(m, "config.model", "mlp_layers", cfg.model.mlp_layers);
        get_int(m, "config.model", "classes", cfg.model.classes);
        get_bool(m, "config.model", "pos_embed", cfg.model.pos_embed);
    }

    if (j.contains("run")) {
        const json& r = j.at("run");
        check_keys(r, "config.run",
                   {"t_search", "t_train", "t_warm", "batch", "lr_max", "lr_min",
                    "lr_warm_epochs", "alpha_lr", "weight_decay", "kcr_weight", "lambda",
                    "gamma", "m_land", "x", "tau_init", "tau_decay", "split_weights",
                    "d_min"});
        get_int(r, "config.run", "t_search", cfg.run.t_search);
        get_int(r, "config.run", "t_train", cfg.run.t_train);
        get_int(r, "config.run", "t_warm", cfg.run.t_warm);
        get_int(r, "config.run", "batch", cfg.run.batch);
        get_double(r, "config.run", "lr_max", cfg.run.lr_max);
        get_double(r, "config.run", "lr_min", cfg.run.lr_min);
        get_int(r, "config.run", "lr_warm_epochs", cfg.run.lr_warm_epochs);
        get_double(r, "config.run", "alpha_lr", cfg.run.alpha_lr);
        get_double(r, "config.run", "weight_decay", cfg.run.weight_decay);
        get_double(r, "config.run", "kcr_weight", cfg.run.kcr_weight);
        get_double(r, "config.run", "lambda", cfg.run.lambda);
        get_double(r, "config.run", "gamma", cfg.run.gamma);
        get_int(r, "config.run", "m_land", cfg.run.m_land);
        get_double(r, "config.run", "x", cfg.run.x);
        get_double(r, "config.run", "tau_init", cfg.run.tau_init);
        get_double(r, "config.run", "tau_decay", cfg.run.tau_decay);
        get_double(r, "config.run", "split_weights", cfg.run.split_weights);
        get_int(r, "config.run", "d_min", cfg.run.d_min);
    }

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        check_keys(d, "config.dataset",
                   {"train_images", "train_labels", "val_images", "val_labels", "gen"});
        get_string(d, "config.dataset", "train_images", cfg.dataset.train_images);
        get_string(d, "config.dataset", "train_labels", cfg.dataset.train_labels);
        get_string(d, "config.dataset", "val_images", cfg.dataset.val_images);
        get_string(d, "config.dataset", "val_labels", cfg.dataset.val_labels);
        if (d.contains("gen")) {
            const json& g = d.at("gen");
            check_keys(g, "config.dataset.gen",
                       {"classes", "n_train", "n_val", "image_side", "noise", "class_scale"});
            get_int(g, "config.dataset.gen", "classes", cfg.dataset.gen.classes);
            get_int(g, "config.dataset.gen", "n_train", cfg.dataset.gen.n_train);
            get_int(g, "config.dataset.gen", "n_val", cfg.dataset.gen.n_val);
            get_int(g, "config.dataset.gen", "image_side", cfg.dataset.gen.image_side);
            get_double(g, "config.dataset.gen", "noise", cfg.dataset.gen.noise);
            get_double(g, "config.dataset.gen", "class_scale", cfg.dataset.gen.class_scale);
        }
    }
    return cfg;
}

FullConfig FullConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    json j;
    try {
        j = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw_config("config " + path + ": " + e.what());
    }
    return from_json(j);
}

} // namespace kcr
