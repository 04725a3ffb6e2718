#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "kcr/model.hpp"

namespace kcr {

struct Checkpoint {
    KcrNet net;
    nlohmann::json config_echo;
    uint64_t seed = 0;
};

// Single-file container: magic, manifest length, JSON manifest (tensor names,
// shapes, byte offsets, config echo, seed), then a raw little-endian f64 blob.
// A save/load round trip restores every tensor bit for bit.
void save_checkpoint(KcrNet& net, const nlohmann::json& config_echo, uint64_t seed,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace kcr
