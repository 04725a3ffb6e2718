#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "kcr/checkpoint.hpp"
#include "kcr/config.hpp"
#include "kcr/dataset.hpp"
#include "kcr/errors.hpp"
#include "kcr/kernel.hpp"
#include "kcr/model.hpp"
#include "kcr/report.hpp"
#include "kcr/training.hpp"

namespace {

using kcr::FullConfig;

struct CommonFlags {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--out-dir", flags.out_dir, "output directory");
    cmd->add_option("--seed", flags.seed, "seed override");
}

FullConfig load_config(const CommonFlags& flags) {
    FullConfig cfg;
    if (!flags.config_path.empty()) cfg = FullConfig::from_file(flags.config_path);
    if (flags.seed) cfg.seed = *flags.seed;
    return cfg;
}

std::string ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) kcr::throw_io("cannot create directory " + dir + ": " + ec.message());
    return dir;
}

std::pair<kcr::Dataset, kcr::Dataset> load_datasets(const FullConfig& cfg) {
    if (cfg.dataset.use_files()) {
        return {kcr::load_idx(cfg.dataset.train_images, cfg.dataset.train_labels),
                kcr::load_idx(cfg.dataset.val_images, cfg.dataset.val_labels)};
    }
    return kcr::gen_split(cfg.dataset.gen, cfg.seed);
}

struct PipelineOverrides {
    std::optional<double> kcr_weight, lambda, gamma, x;
    std::optional<int> landmarks, epochs, warmup;
};

void add_pipeline_flags(CLI::App* cmd, PipelineOverrides& ov) {
    cmd->add_option("--kcr-weight", ov.kcr_weight, "regularizer weight override");
    cmd->add_option("--lambda", ov.lambda, "search cost weight override");
    cmd->add_option("--gamma", ov.gamma, "rank ratio override");
    cmd->add_option("--landmarks", ov.landmarks, "landmark count override");
    cmd->add_option("--x", ov.x, "confidence parameter override");
}

void apply_overrides(FullConfig& cfg, const PipelineOverrides& ov, bool epochs_are_search) {
    if (ov.kcr_weight) cfg.run.kcr_weight = *ov.kcr_weight;
    if (ov.lambda) cfg.run.lambda = *ov.lambda;
    if (ov.gamma) cfg.run.gamma = *ov.gamma;
    if (ov.landmarks) cfg.run.m_land = *ov.landmarks;
    if (ov.x) cfg.run.x = *ov.x;
    if (ov.epochs) {
        if (epochs_are_search) {
            cfg.run.t_search = *ov.epochs;
        } else {
            cfg.run.t_train = *ov.epochs;
        }
    }
    if (ov.warmup) cfg.run.t_warm = *ov.warmup;
}

void write_pipeline_artifacts(const FullConfig& cfg, kcr::PipelineResult& result,
                              kcr::KcrNet& checkpoint_net, const std::string& dir) {
    const nlohmann::json echo = cfg.to_json();
    kcr::write_metrics_csv(result.records, dir + "/metrics.csv");
    kcr::write_json(kcr::architecture_json(result.architecture, cfg.model.mlp_layers, echo,
                                           cfg.seed),
                    dir + "/architecture.json");
    kcr::write_json(kcr::bounds_json(result.bounds, echo, cfg.seed), dir + "/bounds.json");
    kcr::save_checkpoint(checkpoint_net, echo, cfg.seed, dir + "/checkpoint.kcr");
}

int cmd_gen_data(const CommonFlags& flags) {
    const FullConfig cfg = load_config(flags);
    const std::string dir = ensure_out_dir(flags.out_dir);
    const auto [train, val] = kcr::gen_split(cfg.dataset.gen, cfg.seed);
    kcr::write_idx(train, dir + "/train-images.idx", dir + "/train-labels.idx");
    kcr::write_idx(val, dir + "/val-images.idx", dir + "/val-labels.idx");
    std::cout << "wrote " << train.size() << " train and " << val.size()
              << " validation samples to " << dir << "\n";
    return 0;
}

int run_pipeline_command(const CommonFlags& flags, const PipelineOverrides& ov,
                         bool search_only) {
    FullConfig cfg = load_config(flags);
    apply_overrides(cfg, ov, search_only);
    if (search_only) {
        cfg.run.t_train = 0;
        cfg.run.t_warm = 0;
    }
    cfg.validate();
    const std::string dir = ensure_out_dir(flags.out_dir);
    const auto [train, val] = load_datasets(cfg);
    kcr::PipelineResult result = kcr::run_pipeline(
        cfg, train, val, [](const std::string& line) { std::cout << line << "\n"; });
    write_pipeline_artifacts(cfg, result, search_only ? result.supernet : result.net, dir);
    std::cout << "artifacts written to " << dir << "\n";
    return 0;
}

kcr::Matrix parse_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) kcr::throw_io("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> vals;
        std::string cur;
        std::istringstream ss(line);
        while (std::getline(ss, cur, ',')) {
            try {
                size_t used = 0;
                vals.push_back(std::stod(cur, &used));
                if (used != cur.size()) throw std::invalid_argument(cur);
            } catch (const std::exception&) {
                kcr::throw_argument(path + ": row " + std::to_string(row) +
                                    ": bad number \"" + cur + "\"");
            }
        }
        if (!rows.empty() && vals.size() != rows.front().size()) {
            kcr::throw_argument(path + ": row " + std::to_string(row) + " has " +
                                std::to_string(vals.size()) + " fields, expected " +
                                std::to_string(rows.front().size()));
        }
        if (vals.empty()) {
            kcr::throw_argument(path + ": row " + std::to_string(row) + " is empty");
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) kcr::throw_argument(path + ": no feature rows");
    kcr::Matrix f(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int i = 0; i < f.rows; ++i) {
        std::copy(rows[static_cast<size_t>(i)].begin(), rows[static_cast<size_t>(i)].end(),
                  f.row(i));
    }
    f.check_finite("features");
    return f;
}

kcr::Matrix slice_cols(const kcr::Matrix& m, int cols) {
    kcr::Matrix out(m.rows, cols);
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < cols; ++j) out(i, j) = m(i, j);
    }
    return out;
}

int cmd_analyze(const CommonFlags& flags, const PipelineOverrides& ov,
                const std::string& features_path, const std::string& checkpoint_path,
                bool full_landmarks, double train_residual) {
    FullConfig cfg = load_config(flags);
    apply_overrides(cfg, ov, false);
    const std::string dir = ensure_out_dir(flags.out_dir);

    kcr::Matrix f;
    if (!features_path.empty()) {
        f = parse_features_csv(features_path);
    } else if (!checkpoint_path.empty()) {
        kcr::Checkpoint ckpt = kcr::load_checkpoint(checkpoint_path);
        auto datasets = load_datasets(cfg);
        f = kcr::extract_features(ckpt.net, datasets.first.images, cfg.run.batch);
    } else {
        kcr::throw_argument("analyze needs --features or --checkpoint");
    }

    const int n = f.rows;
    const int d = f.cols;
    const int full_rank = std::min(n, d);
    const int m_land = full_landmarks ? n : std::min(cfg.run.m_land, n);

    const kcr::KernelSpectrum spec = kcr::spectrum_from_features(f);
    const kcr::KcResult exact = kcr::kc_exact(spec);

    kcr::Rng land_rng(cfg.seed, 3);
    std::vector<int> landmarks;
    if (full_landmarks) {
        landmarks.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) landmarks[static_cast<size_t>(i)] = i;
    } else {
        landmarks = land_rng.sample_without_replacement(n, m_land);
    }
    const kcr::NystromFactors factors = kcr::nystrom(f, landmarks, full_rank);

    int r_akc = static_cast<int>(std::ceil(cfg.run.gamma * full_rank));
    r_akc = std::clamp(r_akc, 1, factors.rank());
    kcr::NystromFactors truncated = factors;
    truncated.q = slice_cols(factors.q, r_akc);
    truncated.lambda.assign(factors.lambda.begin(), factors.lambda.begin() + r_akc);
    truncated.u_tilde = slice_cols(factors.u_tilde, r_akc);
    truncated.p = slice_cols(factors.p, r_akc);
    const kcr::KcResult approx = kcr::akc(f, truncated);

    // Suffix scores over every available column give the approximate
    // truncated-trace curve without refactoring per rank.
    const double tr = kcr::tnn_exact(spec, 0);
    std::vector<double> scores(static_cast<size_t>(factors.rank()));
    for (int j = 0; j < factors.rank(); ++j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += factors.p(k, j) * factors.p(k, j);
        scores[static_cast<size_t>(j)] = s / n;
    }

    {
        std::ofstream out(dir + "/spectrum.csv", std::ios::binary);
        if (!out) kcr::throw_io("cannot open " + dir + "/spectrum.csv for writing");
        out << "r,lambda,tnn_exact,tnn_approx,delta\n";
        char buf[256];
        double removed = 0.0;
        for (int r = 0; r <= spec.r0; ++r) {
            const double lam =
                r >= 1 ? spec.eigenvalues[static_cast<size_t>(r - 1)] : 0.0;
            if (r >= 1 && r <= factors.rank()) removed += scores[static_cast<size_t>(r - 1)];
            const double tnn_ex = kcr::tnn_exact(spec, r);
            const double tnn_ap = std::max(0.0, tr - removed);
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r, lam, tnn_ex,
                          tnn_ap, std::abs(tnn_ap - tnn_ex));
            out << buf;
        }
        if (!out) kcr::throw_io("write failed for " + dir + "/spectrum.csv");
    }

    kcr::BoundReport report = kcr::kcr_bounds(train_residual, approx.value, n, cfg.run.x);
    report.kc = exact.value;
    report.akc = approx.value;
    kcr::write_json(kcr::bounds_json({report}, cfg.to_json(), cfg.seed),
                    dir + "/bounds.json");

    std::cout << "n " << n << ", d " << d << ", landmarks " << m_land << ", rank "
              << factors.rank() << "\n";
    std::cout << "kc_exact " << exact.value << " (h = " << exact.argmin_h << "), akc "
              << approx.value << " (h = " << approx.argmin_h << ", r = " << r_akc << ")\n";
    std::cout << "reports written to " << dir << "\n";
    return 0;
}

int cmd_gd_verify(const CommonFlags& flags, int n, int d, int classes, double eta, int t) {
    const FullConfig cfg = load_config(flags);
    if (n < 1 || d < 1 || classes < 2) {
        kcr::throw_argument("gd-verify needs n >= 1, d >= 1, classes >= 2");
    }
    if (eta <= 0.0) kcr::throw_argument("gd-verify needs a positive step size");
    if (t < 0) kcr::throw_argument("gd-verify needs a non-negative iteration count");

    kcr::Rng rng(cfg.seed, 6);
    const kcr::Matrix f = rng.normal_matrix(n, d);
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = i % classes;
    rng.shuffle(labels);
    kcr::Matrix y(n, classes);
    for (int i = 0; i < n; ++i) y(i, labels[static_cast<size_t>(i)]) = 1.0;

    const kcr::GdProbeResult probe = kcr::gd_linear_probe(f, y, eta, t);
    const kcr::Matrix k_n = kcr::gram(f, true);
    double max_rel = 0.0;
    for (int k = 0; k <= t; ++k) {
        const double closed = kcr::gd_residual_closed_form(k_n, y, eta, k);
        const double iter = probe.residual_sq[static_cast<size_t>(k)];
        const double rel = std::abs(iter - closed) / std::max(1.0, std::abs(closed));
        max_rel = std::max(max_rel, rel);
    }
    std::cout << "instance: n " << n << ", d " << d << ", classes " << classes << ", eta "
              << eta << ", t " << t << ", seed " << cfg.seed << "\n";
    std::printf("max relative deviation: %.3e\n", max_rel);
    const bool pass = max_rel <= 1e-8;
    std::cout << (pass ? "PASS" : "FAIL") << "\n";
    return pass ? 0 : 2;
}

int cmd_report(const std::string& metrics_path, const std::string& out_path) {
    const std::vector<kcr::EpochRecord> records = kcr::read_metrics_csv(metrics_path);
    kcr::write_json(kcr::curves_json(records), out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel-complexity guided channel pruning for small vision transformers"};
    app.require_subcommand(1);

    CommonFlags gen_flags;
    CLI::App* gen = app.add_subcommand("gen-data", "write synthetic IDX dataset files");
    add_common(gen, gen_flags);

    CommonFlags search_flags;
    PipelineOverrides search_ov;
    CLI::App* search = app.add_subcommand("search", "architecture search on the supernet");
    add_common(search, search_flags);
    add_pipeline_flags(search, search_ov);
    search->add_option("--epochs", search_ov.epochs, "search epoch count override");

    CommonFlags train_flags;
    PipelineOverrides train_ov;
    CLI::App* train = app.add_subcommand("train", "full search + retrain pipeline");
    add_common(train, train_flags);
    add_pipeline_flags(train, train_ov);
    train->add_option("--epochs", train_ov.epochs, "retrain epoch count override");
    train->add_option("--warmup", train_ov.warmup, "warm-up epoch count override");

    CommonFlags analyze_flags;
    PipelineOverrides analyze_ov;
    std::string features_path;
    std::string checkpoint_path;
    bool full_landmarks = false;
    double train_residual = 0.0;
    CLI::App* analyze = app.add_subcommand("analyze", "spectrum, complexity, and bounds");
    add_common(analyze, analyze_flags);
    add_pipeline_flags(analyze, analyze_ov);
    analyze->add_option("--features", features_path, "feature matrix CSV");
    analyze->add_option("--checkpoint", checkpoint_path, "checkpoint to extract features from");
    analyze->add_flag("--full-landmarks", full_landmarks, "use every sample as a landmark");
    analyze->add_option("--train-residual", train_residual,
                        "measured training squared loss for the bound report");

    CommonFlags gd_flags;
    int gd_n = 32, gd_d = 8, gd_classes = 4, gd_t = 50;
    double gd_eta = 0.1;
    CLI::App* gd = app.add_subcommand("gd-verify",
                                      "iterative vs closed-form linear-probe residuals");
    add_common(gd, gd_flags);
    gd->add_option("--n", gd_n, "sample count");
    gd->add_option("--d", gd_d, "feature width");
    gd->add_option("--classes", gd_classes, "class count");
    gd->add_option("--eta", gd_eta, "step size");
    gd->add_option("--t", gd_t, "iteration count");

    std::string metrics_path = "out/metrics.csv";
    std::string curves_path = "out/curves.json";
    CLI::App* report = app.add_subcommand("report", "plot-ready curves from metrics.csv");
    report->add_option("--metrics", metrics_path, "metrics CSV path");
    report->add_option("--out", curves_path, "output curves.json path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen_data(gen_flags);
        if (*search) return run_pipeline_command(search_flags, search_ov, true);
        if (*train) return run_pipeline_command(train_flags, train_ov, false);
        if (*analyze) {
            return cmd_analyze(analyze_flags, analyze_ov, features_path, checkpoint_path,
                               full_landmarks, train_residual);
        }
        if (*gd) return cmd_gd_verify(gd_flags, gd_n, gd_d, gd_classes, gd_eta, gd_t);
        if (*report) return cmd_report(metrics_path, curves_path);
    } catch (const kcr::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
