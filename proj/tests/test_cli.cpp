#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "kcr/dataset.hpp"
#include "kcr/errors.hpp"
#include "kcr/matrix.hpp"
#include "kcr/report.hpp"

using namespace kcr;
namespace fs = std::filesystem;

namespace {

std::string g_kcr_bin;

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) return {};
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

CmdResult run_cli(const std::string& args, const std::string& tag) {
    const std::string out_path = "cli_stdout_" + tag + ".txt";
    const std::string err_path = "cli_stderr_" + tag + ".txt";
    const std::string cmd =
        g_kcr_bin + " " + args + " >" + out_path + " 2>" + err_path;
    const int status = std::system(cmd.c_str());
    CmdResult result;
    if (status != -1 && WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    result.out = slurp(out_path);
    result.err = slurp(err_path);
    std::remove(out_path.c_str());
    std::remove(err_path.c_str());
    return result;
}

// Scratch directory wiped on construction and destruction.
struct ScratchDir {
    std::string path;
    explicit ScratchDir(const std::string& name) : path("cli_scratch_" + name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return path + "/" + name; }
};

nlohmann::json tiny_config() {
    return nlohmann::json{
        {"seed", 5},
        {"model",
         {{"image_side", 4},
          {"patch", 2},
          {"embed_dim", 8},
          {"heads", 2},
          {"depth", 1},
          {"mlp_layers", 2},
          {"classes", 2}}},
        {"run",
         {{"t_search", 2},
          {"t_train", 3},
          {"t_warm", 1},
          {"batch", 8},
          {"m_land", 16},
          {"d_min", 2}}},
        {"dataset",
         {{"gen",
           {{"classes", 2}, {"n_train", 48}, {"n_val", 16}, {"image_side", 4}}}}}};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

} // namespace

TEST_CASE("gen-data writes loadable idx files and repeats byte for byte") {
    ScratchDir dir("gen");
    write_text(dir.file("cfg.json"),
               nlohmann::json{
                   {"seed", 9},
                   {"dataset",
                    {{"gen",
                      {{"classes", 4}, {"n_train", 8}, {"n_val", 4}, {"image_side", 4}}}}}}
                   .dump());

    const std::string base =
        "gen-data --config " + dir.file("cfg.json") + " --out-dir " + dir.file("a");
    const CmdResult first = run_cli(base, "gen1");
    CHECK(first.exit_code == 0);
    CHECK(first.out.find("8 train") != std::string::npos);

    const Dataset train = load_idx(dir.file("a/train-images.idx"), dir.file("a/train-labels.idx"));
    const Dataset val = load_idx(dir.file("a/val-images.idx"), dir.file("a/val-labels.idx"));
    CHECK(train.size() == 8);
    CHECK(val.size() == 4);
    CHECK(train.image_side == 4);

    GenSpec spec;
    spec.classes = 4;
    spec.n_train = 8;
    spec.n_val = 4;
    spec.image_side = 4;
    const auto direct = gen_split(spec, 9);
    CHECK(max_abs_diff(train.images, direct.first.images) == 0.0);
    CHECK(train.labels == direct.first.labels);
    CHECK(max_abs_diff(val.images, direct.second.images) == 0.0);

    const CmdResult second = run_cli(
        "gen-data --config " + dir.file("cfg.json") + " --out-dir " + dir.file("b"), "gen2");
    CHECK(second.exit_code == 0);
    CHECK(slurp(dir.file("a/train-images.idx")) == slurp(dir.file("b/train-images.idx")));
    CHECK(slurp(dir.file("a/train-labels.idx")) == slurp(dir.file("b/train-labels.idx")));

    const CmdResult reseeded = run_cli(
        "gen-data --config " + dir.file("cfg.json") + " --seed 10 --out-dir " + dir.file("c"),
        "gen3");
    CHECK(reseeded.exit_code == 0);
    CHECK(slurp(dir.file("a/train-images.idx")) != slurp(dir.file("c/train-images.idx")));
}

TEST_CASE("train produces artifacts deterministically") {
    ScratchDir dir("train");
    write_text(dir.file("cfg.json"), tiny_config().dump());

    const CmdResult first = run_cli(
        "train --config " + dir.file("cfg.json") + " --out-dir " + dir.file("a"), "train1");
    CHECK(first.exit_code == 0);
    CHECK(first.out.find("artifacts written") != std::string::npos);
    CHECK(fs::exists(dir.file("a/metrics.csv")));
    CHECK(fs::exists(dir.file("a/architecture.json")));
    CHECK(fs::exists(dir.file("a/bounds.json")));
    CHECK(fs::exists(dir.file("a/checkpoint.kcr")));

    const std::vector<EpochRecord> records = read_metrics_csv(dir.file("a/metrics.csv"));
    REQUIRE(records.size() == 5);
    CHECK(records[0].phase == "search");
    CHECK(records[2].phase == "warmup");
    CHECK(records[4].phase == "regularized");

    const nlohmann::json arch = nlohmann::json::parse(slurp(dir.file("a/architecture.json")));
    REQUIRE(arch.at("blocks").size() == 1);
    const int d_tilde = arch.at("blocks").at(0).at("d_tilde").get<int>();
    CHECK(d_tilde >= 2);
    CHECK(d_tilde <= 8);
    CHECK(arch.at("total_flops").get<long long>() ==
          2LL * (2LL * d_tilde * d_tilde + d_tilde));
    CHECK(arch.at("config").at("run").at("t_train").get<int>() == 3);

    const nlohmann::json bounds = nlohmann::json::parse(slurp(dir.file("a/bounds.json")));
    REQUIRE(bounds.at("reports").size() == 2);
    for (const nlohmann::json& row : bounds.at("reports")) {
        const double lower = row.at("lower").get<double>();
        const double upper = row.at("upper").get<double>();
        const double akc = row.at("akc").get<double>();
        const double x = row.at("x").get<double>();
        CHECK(upper == lower + 2.0 * (akc + x / 48.0));
    }

    const CmdResult second = run_cli(
        "train --config " + dir.file("cfg.json") + " --out-dir " + dir.file("b"), "train2");
    CHECK(second.exit_code == 0);
    CHECK(slurp(dir.file("a/metrics.csv")) == slurp(dir.file("b/metrics.csv")));

    const CmdResult control = run_cli("train --config " + dir.file("cfg.json") +
                                          " --kcr-weight 0 --out-dir " + dir.file("c"),
                                      "train3");
    CHECK(control.exit_code == 0);
    const std::vector<EpochRecord> off = read_metrics_csv(dir.file("c/metrics.csv"));
    REQUIRE(off.size() == 5);
    for (const EpochRecord& rec : off) CHECK(rec.kcr_loss == 0.0);
    CHECK(slurp(dir.file("a/metrics.csv")) != slurp(dir.file("c/metrics.csv")));
}

TEST_CASE("search writes a supernet checkpoint and no bound reports") {
    ScratchDir dir("search");
    nlohmann::json cfg = tiny_config();
    cfg["run"]["t_search"] = 1;
    write_text(dir.file("cfg.json"), cfg.dump());

    const CmdResult result = run_cli(
        "search --config " + dir.file("cfg.json") + " --out-dir " + dir.file("a"), "search1");
    CHECK(result.exit_code == 0);
    const std::vector<EpochRecord> records = read_metrics_csv(dir.file("a/metrics.csv"));
    REQUIRE(records.size() == 1);
    CHECK(records[0].phase == "search");
    const nlohmann::json bounds = nlohmann::json::parse(slurp(dir.file("a/bounds.json")));
    CHECK(bounds.at("reports").empty());
}

TEST_CASE("bad configs are rejected with exit 1") {
    ScratchDir dir("badcfg");
    nlohmann::json cfg = tiny_config();
    cfg["run"]["typo_key"] = 1;
    write_text(dir.file("cfg.json"), cfg.dump());

    const CmdResult unknown = run_cli(
        "train --config " + dir.file("cfg.json") + " --out-dir " + dir.file("a"), "bad1");
    CHECK(unknown.exit_code == 1);
    CHECK(unknown.err.find("unknown key") != std::string::npos);

    write_text(dir.file("broken.json"), "{ not json");
    const CmdResult broken = run_cli(
        "train --config " + dir.file("broken.json") + " --out-dir " + dir.file("a"), "bad2");
    CHECK(broken.exit_code == 1);

    const CmdResult missing = run_cli(
        "train --config " + dir.file("absent.json") + " --out-dir " + dir.file("a"), "bad3");
    CHECK(missing.exit_code == 3);
}

TEST_CASE("analyze reports the exact complexity of scaled identity features") {
    ScratchDir dir("analyze");
    write_text(dir.file("f.csv"), "2,0,0,0\n0,2,0,0\n0,0,2,0\n0,0,0,2\n");

    const CmdResult result = run_cli(
        "analyze --features " + dir.file("f.csv") + " --out-dir " + dir.file("a"), "an1");
    CHECK(result.exit_code == 0);
    // K_n = I_4: every suffix head pays sqrt(1) = 1, so h = 0 wins outright
    CHECK(result.out.find("kc_exact 1 (h = 0)") != std::string::npos);

    const std::string spectrum = slurp(dir.file("a/spectrum.csv"));
    CHECK(spectrum.find("r,lambda,tnn_exact,tnn_approx,delta") == 0);
    std::vector<std::vector<double>> rows;
    {
        std::istringstream in(spectrum);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::vector<double> vals;
            std::istringstream ls(line);
            std::string tok;
            while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
            rows.push_back(vals);
        }
    }
    REQUIRE(rows.size() == 5);  // r = 0..4
    CHECK(rows[0][2] == doctest::Approx(4.0).epsilon(1e-12)); // trace of I_4 scaled by 4
    CHECK(rows[4][2] == doctest::Approx(0.0).epsilon(1e-12));
    for (const std::vector<double>& row : rows) {
        REQUIRE(row.size() == 5);
        CHECK(row[4] <= 1e-9);  // landmarks cover every sample, so the curve is exact
    }

    const nlohmann::json bounds = nlohmann::json::parse(slurp(dir.file("a/bounds.json")));
    REQUIRE(bounds.at("reports").size() == 1);
    const nlohmann::json& row = bounds.at("reports").at(0);
    CHECK(row.at("kc").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row.at("upper").get<double>() ==
          row.at("lower").get<double>() +
              2.0 * (row.at("akc").get<double>() + row.at("x").get<double>() / 4.0));
}

TEST_CASE("analyze matches the dedicated estimator on wide random features") {
    ScratchDir dir("analyze_rand");
    // fixed 8x3 feature table, full rank
    write_text(dir.file("f.csv"),
               "0.9,-0.3,0.4\n-1.2,0.8,0.1\n0.2,1.5,-0.7\n0.5,0.5,0.5\n"
               "-0.4,-0.9,1.1\n1.3,0.2,-0.2\n-0.6,0.7,0.9\n0.1,-1.1,-0.5\n");

    const CmdResult result = run_cli("analyze --features " + dir.file("f.csv") +
                                         " --full-landmarks --out-dir " + dir.file("a"),
                                     "an2");
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("rank 3") != std::string::npos);

    const std::string spectrum = slurp(dir.file("a/spectrum.csv"));
    std::istringstream in(spectrum);
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        const size_t last = line.rfind(',');
        REQUIRE(last != std::string::npos);
        CHECK(std::stod(line.substr(last + 1)) <= 1e-6);
        ++rows;
    }
    CHECK(rows == 4);  // r = 0..3
}

TEST_CASE("analyze rejects malformed feature files") {
    ScratchDir dir("analyze_bad");
    write_text(dir.file("f.csv"), "1,2\n3,oops\n");
    const CmdResult bad = run_cli(
        "analyze --features " + dir.file("f.csv") + " --out-dir " + dir.file("a"), "an3");
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.find("row 2") != std::string::npos);

    write_text(dir.file("ragged.csv"), "1,2\n3\n");
    const CmdResult ragged = run_cli(
        "analyze --features " + dir.file("ragged.csv") + " --out-dir " + dir.file("a"), "an4");
    CHECK(ragged.exit_code == 1);

    const CmdResult none = run_cli("analyze --out-dir " + dir.file("a"), "an5");
    CHECK(none.exit_code == 1);
    CHECK(none.err.find("--features or --checkpoint") != std::string::npos);
}

TEST_CASE("gd-verify agrees with its closed form on the default instance") {
    ScratchDir dir("gd");
    const CmdResult pass = run_cli("gd-verify --out-dir " + dir.path, "gd1");
    CHECK(pass.exit_code == 0);
    CHECK(pass.out.find("PASS") != std::string::npos);
    CHECK(pass.out.find("max relative deviation") != std::string::npos);

    const CmdResult zero_t = run_cli("gd-verify --t 0", "gd2");
    CHECK(zero_t.exit_code == 0);
    CHECK(zero_t.out.find("PASS") != std::string::npos);

    const CmdResult bad_eta = run_cli("gd-verify --eta 0", "gd3");
    CHECK(bad_eta.exit_code == 1);
    CHECK(bad_eta.err.find("step size") != std::string::npos);
}

TEST_CASE("report turns a metrics file into curves") {
    ScratchDir dir("report");
    write_text(dir.file("cfg.json"), tiny_config().dump());
    const CmdResult train = run_cli(
        "train --config " + dir.file("cfg.json") + " --out-dir " + dir.file("a"), "rep1");
    REQUIRE(train.exit_code == 0);

    const CmdResult report = run_cli("report --metrics " + dir.file("a/metrics.csv") +
                                         " --out " + dir.file("a/curves.json"),
                                     "rep2");
    CHECK(report.exit_code == 0);
    const nlohmann::json curves = nlohmann::json::parse(slurp(dir.file("a/curves.json")));
    CHECK(curves.at("series").at("epoch").size() == 5);
    CHECK(curves.at("series").at("upper").size() == 5);
    CHECK(curves.at("regularized_epochs").get<int>() == 2);

    const CmdResult missing = run_cli("report --metrics " + dir.file("absent.csv") +
                                          " --out " + dir.file("x.json"),
                                      "rep3");
    CHECK(missing.exit_code == 3);

    write_text(dir.file("bad.csv"), "epoch,unexpected\n");
    const CmdResult bad = run_cli("report --metrics " + dir.file("bad.csv") + " --out " +
                                      dir.file("x.json"),
                                  "rep4");
    CHECK(bad.exit_code == 1);
}

TEST_CASE("the cli refuses unknown subcommands and missing ones") {
    const CmdResult unknown = run_cli("frobnicate", "cli1");
    CHECK(unknown.exit_code == 1);
    const CmdResult none = run_cli("", "cli2");
    CHECK(none.exit_code == 1);
}

int main(int argc, char** argv) {
    std::vector<char*> pass;
    for (int i = 0; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.rfind("--kcr-bin=", 0) == 0) {
            g_kcr_bin = arg.substr(10);
            continue;
        }
        pass.push_back(argv[i]);
    }
    if (g_kcr_bin.empty()) {
        if (const char* env = std::getenv("KCR_CLI")) g_kcr_bin = env;
    }
    if (g_kcr_bin.empty()) {
        std::fprintf(stderr, "missing --kcr-bin=<path> (or KCR_CLI env var)\n");
        return 1;
    }
    doctest::Context ctx;
    ctx.applyCommandLine(static_cast<int>(pass.size()), pass.data());
    return ctx.run();
}
