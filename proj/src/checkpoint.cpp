#include "kcr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "kcr/errors.hpp"
#include "kcr/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob assumes a little-endian host");

namespace kcr {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'K', 'C', 'R', 'N', 'E', 'T', '0', '1'};

int manifest_int(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key) || !j.at(key).is_number_integer()) {
        throw_io(path + ": checkpoint manifest missing integer \"" + std::string(key) + "\"");
    }
    return j.at(key).get<int>();
}

} // namespace

void save_checkpoint(KcrNet& net, const json& config_echo, uint64_t seed,
                     const std::string& path) {
    const std::vector<ParamRef> refs = params(net);

    json manifest;
    manifest["schema"] = 1;
    manifest["seed"] = seed;
    manifest["config"] = config_echo;
    manifest["model"] = {
        {"image_side", net.cfg.image_side}, {"patch", net.cfg.patch},
        {"embed_dim", net.cfg.embed_dim},   {"heads", net.cfg.heads},
        {"depth", net.cfg.depth},           {"mlp_layers", net.cfg.mlp_layers},
        {"classes", net.cfg.classes},       {"pos_embed", net.cfg.pos_embed},
    };
    manifest["gathered"] = net.gathered;
    json channels = json::array();
    json taus = json::array();
    json d_mins = json::array();
    for (const Block& b : net.blocks) {
        channels.push_back(b.channels);
        taus.push_back(b.selector.tau);
        d_mins.push_back(b.selector.d_min);
    }
    manifest["channels"] = channels;
    manifest["tau"] = taus;
    manifest["d_min"] = d_mins;

    json tensors = json::array();
    uint64_t offset = 0;
    for (const ParamRef& ref : refs) {
        tensors.push_back({{"name", ref.name},
                           {"rows", ref.tensor->rows},
                           {"cols", ref.tensor->cols},
                           {"offset", offset}});
        offset += static_cast<uint64_t>(ref.tensor->d.size()) * sizeof(double);
    }
    manifest["tensors"] = tensors;

    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const ParamRef& ref : refs) {
        out.write(reinterpret_cast<const char*>(ref.tensor->d.data()),
                  static_cast<std::streamsize>(ref.tensor->d.size() * sizeof(double)));
    }
    if (!out) throw_io("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open " + path);

    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw_io(path + ": not a checkpoint file");
    }
    uint64_t len = 0;
    if (!in.read(reinterpret_cast<char*>(&len), sizeof(len))) {
        throw_io(path + ": truncated manifest length");
    }
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
        throw_io(path + ": truncated manifest");
    }
    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::parse_error& e) {
        throw_io(path + ": manifest parse error: " + e.what());
    }

    Checkpoint ckpt;
    if (manifest.contains("seed")) ckpt.seed = manifest.at("seed").get<uint64_t>();
    if (manifest.contains("config")) ckpt.config_echo = manifest.at("config");

    const json& m = manifest.at("model");
    ModelConfig cfg;
    cfg.image_side = manifest_int(m, "image_side", path);
    cfg.patch = manifest_int(m, "patch", path);
    cfg.embed_dim = manifest_int(m, "embed_dim", path);
    cfg.heads = manifest_int(m, "heads", path);
    cfg.depth = manifest_int(m, "depth", path);
    cfg.mlp_layers = manifest_int(m, "mlp_layers", path);
    cfg.classes = manifest_int(m, "classes", path);
    cfg.pos_embed = m.contains("pos_embed") && m.at("pos_embed").get<bool>();

    const bool gathered = manifest.at("gathered").get<bool>();
    std::vector<std::vector<int>> channels;
    for (const json& c : manifest.at("channels")) {
        channels.push_back(c.get<std::vector<int>>());
    }
    const std::vector<double> taus = manifest.at("tau").get<std::vector<double>>();
    const std::vector<int> d_mins = manifest.at("d_min").get<std::vector<int>>();
    if (static_cast<int>(channels.size()) != cfg.depth || taus.size() != channels.size() ||
        d_mins.size() != channels.size()) {
        throw_io(path + ": per-block manifest entries do not match depth");
    }

    // Values are placeholders; every tensor is overwritten from the blob below.
    Rng scratch(0, 0);
    if (gathered) {
        std::vector<Matrix> alphas;
        for (int i = 0; i < cfg.depth; ++i) alphas.push_back(Matrix(1, cfg.embed_dim));
        ckpt.net = make_pruned(cfg, channels, alphas, 1.0, 1, scratch);
    } else {
        ckpt.net = make_supernet(cfg, 1.0, 1, scratch);
    }
    for (size_t i = 0; i < ckpt.net.blocks.size(); ++i) {
        ckpt.net.blocks[i].channels = channels[i];
        ckpt.net.blocks[i].selector.tau = taus[i];
        ckpt.net.blocks[i].selector.d_min = d_mins[i];
    }

    std::unordered_map<std::string, Matrix*> by_name;
    const std::vector<ParamRef> refs = params(ckpt.net);
    for (const ParamRef& ref : refs) by_name[ref.name] = ref.tensor;

    const json& tensors = manifest.at("tensors");
    if (tensors.size() != refs.size()) {
        throw_io(path + ": manifest lists " + std::to_string(tensors.size()) +
                 " tensors, net has " + std::to_string(refs.size()));
    }
    const std::streampos blob_start = in.tellg();
    for (const json& t : tensors) {
        const std::string name = t.at("name").get<std::string>();
        const int rows = manifest_int(t, "rows", path);
        const int cols = manifest_int(t, "cols", path);
        const uint64_t offset = t.at("offset").get<uint64_t>();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw_io(path + ": unexpected tensor \"" + name + "\"");
        Matrix& dst = *it->second;
        if (dst.rows != rows || dst.cols != cols) {
            throw_io(path + ": tensor \"" + name + "\" is " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", expected " + std::to_string(dst.rows) + "x" +
                     std::to_string(dst.cols));
        }
        in.seekg(blob_start + static_cast<std::streamoff>(offset));
        if (!in.read(reinterpret_cast<char*>(dst.d.data()),
                     static_cast<std::streamsize>(dst.d.size() * sizeof(double)))) {
            throw_io(path + ": truncated blob at tensor \"" + name + "\"");
        }
        dst.check_finite("checkpoint tensor " + name);
    }
    return ckpt;
}

} // namespace kcr
