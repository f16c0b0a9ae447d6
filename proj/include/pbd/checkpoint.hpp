#pragma once

// Versioned model checkpoints: a magic tag, a JSON header carrying the model
// configuration plus the name/shape of every parameter tensor, then the raw
// values as little-endian doubles in registration order.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbd/core.hpp"
#include "pbd/model.hpp"

namespace pbd {

using json = nlohmann::json;

inline constexpr char kCheckpointMagic[8] = {'P', 'B', 'D', 'C', 'K', 'P', 'T', '1'};

inline json model_config_to_json(const ModelConfig& c) {
    return json{{"widths", c.encoder.widths},
                {"share_streams", c.encoder.share_streams},
                {"prompt_kernels", c.prompt_kernels},
                {"n_state", c.n_state},
                {"share_scan_params", c.share_scan_params},
                {"norm_after_filter", c.norm_after_filter},
                {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.encoder.widths = j.at("widths").get<std::array<int, 5>>();
    c.encoder.share_streams = j.at("share_streams").get<bool>();
    c.prompt_kernels = j.at("prompt_kernels").get<int>();
    c.n_state = j.at("n_state").get<int>();
    c.share_scan_params = j.at("share_scan_params").get<bool>();
    c.norm_after_filter = j.at("norm_after_filter").get<bool>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

namespace ckpt_detail {

inline void write_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    require(bool(in), "checkpoint: truncated header");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= (uint64_t)b[i] << (8 * i);
    return v;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
    static_assert(sizeof(double) == 8);
    for (double d : v) {
        uint64_t bits;
        std::memcpy(&bits, &d, 8);
        write_u64(out, bits);
    }
}

inline void read_doubles(std::istream& in, std::vector<double>& v) {
    for (double& d : v) {
        uint64_t bits = read_u64(in);
        std::memcpy(&d, &bits, 8);
    }
}

}  // namespace ckpt_detail

inline void save_checkpoint(const EndpointNet& net, const std::string& path) {
    json tensors = json::array();
    for (const auto& [name, v] : net.params)
        tensors.push_back(json{{"name", name}, {"shape", v->val.shape}});
    json header{{"schema_version", 1},
                {"model", model_config_to_json(net.cfg)},
                {"tensors", tensors}};
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    require(bool(out), "checkpoint: cannot open for writing: " + path);
    out.write(kCheckpointMagic, 8);
    ckpt_detail::write_u64(out, hs.size());
    out.write(hs.data(), (std::streamsize)hs.size());
    for (const auto& [name, v] : net.params) ckpt_detail::write_doubles(out, v->val.v);
    require(bool(out), "checkpoint: write failed: " + path);
}

// Rebuilds the network from the stored configuration and loads every tensor,
// validating names and shapes against a freshly constructed registry.
inline EndpointNet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "checkpoint: cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    require(bool(in) && std::memcmp(magic, kCheckpointMagic, 8) == 0,
            "checkpoint: bad magic in " + path);
    uint64_t hlen = ckpt_detail::read_u64(in);
    require(hlen < (1ull << 24), "checkpoint: implausible header size");
    std::string hs(hlen, '\0');
    in.read(hs.data(), (std::streamsize)hlen);
    require(bool(in), "checkpoint: truncated header");
    json header = json::parse(hs, nullptr, false);
    require(!header.is_discarded(), "checkpoint: header is not valid JSON");
    require(header.at("schema_version").get<int>() == 1,
            "checkpoint: unsupported schema_version");

    EndpointNet net(model_config_from_json(header.at("model")));
    const json& tensors = header.at("tensors");
    require(tensors.size() == net.params.size(),
            "checkpoint: tensor count mismatch (file " + std::to_string(tensors.size()) +
                ", model " + std::to_string(net.params.size()) + ")");
    for (size_t i = 0; i < net.params.size(); ++i) {
        auto& [name, v] = net.params[i];
        const json& t = tensors[i];
        require(t.at("name").get<std::string>() == name,
                "checkpoint: tensor name mismatch at index " + std::to_string(i) + ": file has " +
                    t.at("name").get<std::string>() + ", model expects " + name);
        require(t.at("shape").get<std::vector<int>>() == v->val.shape,
                "checkpoint: shape mismatch for " + name);
        ckpt_detail::read_doubles(in, v->val.v);
    }
    require(bool(in), "checkpoint: truncated tensor data");
    char extra;
    require(!in.read(&extra, 1), "checkpoint: trailing bytes after tensor data");
    return net;
}

inline std::string checkpoint_summary(const EndpointNet& net) {
    std::ostringstream out;
    int64_t total = 0;
    out << "model parameters\n";
    for (const auto& [name, v] : net.params) {
        out << "  " << name << "  [";
        for (size_t i = 0; i < v->val.shape.size(); ++i)
            out << (i ? "x" : "") << v->val.shape[i];
        out << "]\n";
        total += v->val.size();
    }
    out << "encoder widths:";
    for (int w : net.cfg.encoder.widths) out << ' ' << w;
    out << "\nprompt kernels: " << net.cfg.prompt_kernels << "\nstate size: " << net.cfg.n_state
        << "\ntotal scalars: " << total << "\n";
    return out.str();
}

}  // namespace pbd
