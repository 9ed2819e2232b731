#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fundus/vae/model.hpp"

namespace fundus {

struct CheckpointMeta {
    VaeConfig config;
    long best_epoch = -1;
    long epochs_trained = 0;
    double val_total = 0, val_feature = 0, val_kl = 0;
    std::uint64_t seed = 0;
    std::string extractor_kind;
};

namespace detail {

inline nlohmann::json vae_config_to_json(const VaeConfig& c) {
    return {{"latent_size", c.latent_size},   {"encoder_widths", c.encoder_widths},
            {"decoder_widths", c.decoder_widths}, {"beta", c.beta},
            {"image_size", c.image_size},     {"leaky_slope", c.leaky_slope},
            {"norm_groups", c.norm_groups}};
}

inline VaeConfig vae_config_from_json(const nlohmann::json& j) {
    VaeConfig c;
    c.latent_size = j.at("latent_size").get<int>();
    c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
    c.decoder_widths = j.at("decoder_widths").get<std::vector<int>>();
    c.beta = j.at("beta").get<double>();
    c.image_size = j.at("image_size").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.norm_groups = j.at("norm_groups").get<int>();
    return c;
}

}  // namespace detail

/// Checkpoint file: magic, version, JSON header (config + epoch metadata +
/// named weight map), raw float32 weight data.
inline void save_checkpoint(const std::filesystem::path& path, Vae<float>& vae,
                            const CheckpointMeta& meta) {
    auto params = vae.params();
    nlohmann::json header;
    header["config"] = detail::vae_config_to_json(meta.config);
    header["best_epoch"] = meta.best_epoch;
    header["epochs_trained"] = meta.epochs_trained;
    header["val_total"] = meta.val_total;
    header["val_feature"] = meta.val_feature;
    header["val_kl"] = meta.val_kl;
    header["seed"] = meta.seed;
    header["extractor_kind"] = meta.extractor_kind;
    nlohmann::json weights = nlohmann::json::array();
    for (const auto* p : params)
        weights.push_back({{"name", p->name}, {"shape", p->value.shape}});
    header["weights"] = weights;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path.string());
    out.write("FVCP", 4);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto* p : params)
        out.write(reinterpret_cast<const char*>(p->value.ptr()),
                  static_cast<std::streamsize>(p->value.numel()) * 4);
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

inline std::pair<Vae<float>, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path.string());
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t hlen = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&hlen), 8);
    if (!in || std::string(magic, 4) != "FVCP" || version != 1)
        throw std::runtime_error("checkpoint: bad header in " + path.string());
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    const nlohmann::json header = nlohmann::json::parse(hs);

    CheckpointMeta meta;
    meta.config = detail::vae_config_from_json(header.at("config"));
    meta.best_epoch = header.at("best_epoch").get<long>();
    meta.epochs_trained = header.at("epochs_trained").get<long>();
    meta.val_total = header.at("val_total").get<double>();
    meta.val_feature = header.at("val_feature").get<double>();
    meta.val_kl = header.at("val_kl").get<double>();
    meta.seed = header.at("seed").get<std::uint64_t>();
    meta.extractor_kind = header.at("extractor_kind").get<std::string>();

    Vae<float> vae(meta.config, meta.seed);
    auto params = vae.params();
    const auto& weights = header.at("weights");
    if (weights.size() != params.size())
        throw std::runtime_error("checkpoint: weight map does not match model: " + path.string());
    for (size_t i = 0; i < params.size(); ++i) {
        const auto want = weights[i].at("shape").get<std::vector<long>>();
        if (weights[i].at("name").get<std::string>() != params[i]->name ||
            want != params[i]->value.shape)
            throw std::runtime_error("checkpoint: weight " + params[i]->name +
                                     " mismatch in " + path.string());
        in.read(reinterpret_cast<char*>(params[i]->value.ptr()),
                static_cast<std::streamsize>(params[i]->value.numel()) * 4);
    }
    if (!in) throw std::runtime_error("checkpoint: truncated weight data in " + path.string());
    return {std::move(vae), std::move(meta)};
}

}  // namespace fundus
