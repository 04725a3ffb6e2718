#include "kcr/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kcr/errors.hpp"

namespace kcr {

using nlohmann::json;

const char* const kMetricsHeader =
    "epoch,phase,ce,kcr,akc,lower,upper,train_sq,val_sq,val_acc,flops,tau";

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& path, int row) {
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw_config(path + ": row " + std::to_string(row) + ": bad number \"" + s + "\"");
    }
}

long long parse_int(const std::string& s, const std::string& path, int row) {
    try {
        size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw_config(path + ": row " + std::to_string(row) + ": bad integer \"" + s + "\"");
    }
}

} // namespace

void write_metrics_csv(const std::vector<EpochRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot open " + path + " for writing");
    out << kMetricsHeader << "\n";
    for (const EpochRecord& r : records) {
        out << r.epoch << ',' << r.phase << ',' << fmt17(r.ce) << ',' << fmt17(r.kcr_loss)
            << ',' << fmt17(r.akc) << ',' << fmt17(r.bound.lower) << ','
            << fmt17(r.bound.upper) << ',' << fmt17(r.train_sq) << ',' << fmt17(r.val_sq)
            << ',' << fmt17(r.val_acc) << ',' << r.hard_flops << ',' << fmt17(r.tau)
            << "\n";
    }
    if (!out) throw_io("write failed for " + path);
}

std::vector<EpochRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw_config(path + ": empty metrics file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader) {
        throw_config(path + ": unexpected header \"" + line + "\"");
    }
    std::vector<EpochRecord> records;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = split_row(line);
        if (f.size() != 12) {
            throw_config(path + ": row " + std::to_string(row) + " has " +
                         std::to_string(f.size()) + " fields, expected 12");
        }
        EpochRecord r;
        r.epoch = static_cast<int>(parse_int(f[0], path, row));
        r.phase = f[1];
        r.ce = parse_double(f[2], path, row);
        r.kcr_loss = parse_double(f[3], path, row);
        r.akc = parse_double(f[4], path, row);
        r.bound.lower = parse_double(f[5], path, row);
        r.bound.upper = parse_double(f[6], path, row);
        r.train_sq = parse_double(f[7], path, row);
        r.val_sq = parse_double(f[8], path, row);
        r.val_acc = parse_double(f[9], path, row);
        r.hard_flops = parse_int(f[10], path, row);
        r.tau = parse_double(f[11], path, row);
        r.bound.akc = r.akc;
        r.bound.train_residual = r.train_sq;
        r.bound.epoch = r.epoch;
        records.push_back(std::move(r));
    }
    return records;
}

std::optional<double> pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) {
        throw_dimension("pearson: " + std::to_string(xs.size()) + " vs " +
                        std::to_string(ys.size()) + " points");
    }
    const size_t n = xs.size();
    if (n < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

json architecture_json(const HardArchitecture& arch, int mlp_layers,
                       const json& config_echo, uint64_t seed) {
    json blocks = json::array();
    for (size_t i = 0; i < arch.channels.size(); ++i) {
        std::vector<int> mask(static_cast<size_t>(arch.masks[i].cols));
        for (int j = 0; j < arch.masks[i].cols; ++j) {
            mask[static_cast<size_t>(j)] = arch.masks[i](0, j) == 1.0 ? 1 : 0;
        }
        blocks.push_back({{"mask", mask},
                          {"channels", arch.channels[i]},
                          {"d_tilde", arch.channels[i].size()},
                          {"layers", mlp_layers},
                          {"flops", arch.block_flops[i]}});
    }
    return json{{"schema", 1},
                {"seed", seed},
                {"config", config_echo},
                {"blocks", blocks},
                {"total_flops", arch.total_flops}};
}

json bounds_json(const std::vector<BoundReport>& reports, const json& config_echo,
                 uint64_t seed) {
    json rows = json::array();
    for (const BoundReport& r : reports) {
        rows.push_back({{"epoch", r.epoch},
                        {"train_residual", r.train_residual},
                        {"kc", r.kc},
                        {"akc", r.akc},
                        {"x", r.confidence_x},
                        {"lower", r.lower},
                        {"upper", r.upper}});
    }
    return json{{"schema", 1}, {"seed", seed}, {"config", config_echo}, {"reports", rows}};
}

json curves_json(const std::vector<EpochRecord>& records) {
    json series;
    std::vector<int> epochs;
    std::vector<double> train_sq, val_sq, lower, upper, akc_vals;
    std::vector<double> reg_upper, reg_val_sq;
    for (const EpochRecord& r : records) {
        epochs.push_back(r.epoch);
        train_sq.push_back(r.train_sq);
        val_sq.push_back(r.val_sq);
        lower.push_back(r.bound.lower);
        upper.push_back(r.bound.upper);
        akc_vals.push_back(r.akc);
        if (r.phase == "regularized") {
            reg_upper.push_back(r.bound.upper);
            reg_val_sq.push_back(r.val_sq);
        }
    }
    series["epoch"] = epochs;
    series["train_sq"] = train_sq;
    series["val_sq"] = val_sq;
    series["lower"] = lower;
    series["upper"] = upper;
    series["akc"] = akc_vals;

    const std::optional<double> corr = pearson(reg_upper, reg_val_sq);
    json j;
    j["schema"] = 1;
    j["series"] = series;
    j["regularized_epochs"] = reg_upper.size();
    j["pearson_upper_val_sq"] = corr ? json(*corr) : json(nullptr);
    return j;
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw_io("write failed for " + path);
}

} // namespace kcr
