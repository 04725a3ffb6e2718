#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "kcr/kernel.hpp"
#include "kcr/model.hpp"
#include "kcr/training.hpp"

namespace kcr {

// Per-epoch time series, one row per record, doubles at 17 significant
// digits so a write/read round trip is value-exact.
extern const char* const kMetricsHeader;
void write_metrics_csv(const std::vector<EpochRecord>& records, const std::string& path);
std::vector<EpochRecord> read_metrics_csv(const std::string& path);

// Sample Pearson correlation; empty when fewer than two points or either
// side has zero variance.
std::optional<double> pearson(const std::vector<double>& xs, const std::vector<double>& ys);

nlohmann::json architecture_json(const HardArchitecture& arch, int mlp_layers,
                                 const nlohmann::json& config_echo, uint64_t seed);
nlohmann::json bounds_json(const std::vector<BoundReport>& reports,
                           const nlohmann::json& config_echo, uint64_t seed);

// Plot-ready series over every row plus the upper-vs-validation correlation
// over the regularized rows (null when degenerate).
nlohmann::json curves_json(const std::vector<EpochRecord>& records);

void write_json(const nlohmann::json& j, const std::string& path);

} // namespace kcr
