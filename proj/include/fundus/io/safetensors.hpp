#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundus/core/tensor.hpp"

namespace fundus {

/// Minimal safetensors support: little-endian F32 tensors only, which is all
/// the extractor weight files use.
inline std::map<std::string, Tensor<float>> read_safetensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("safetensors: cannot open: " + path);
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 8);
    if (!in || header_len == 0 || header_len > (1ull << 30))
        throw std::runtime_error("safetensors: bad header length in " + path);
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("safetensors: truncated header in " + path);

    nlohmann::json j = nlohmann::json::parse(header);
    std::map<std::string, Tensor<float>> out;
    const std::uint64_t data_start = 8 + header_len;
    for (auto& [name, entry] : j.items()) {
        if (name == "__metadata__") continue;
        const std::string dtype = entry.at("dtype").get<std::string>();
        if (dtype != "F32")
            throw std::runtime_error("safetensors: unsupported dtype " + dtype + " for " + name);
        std::vector<long> shape;
        for (auto& d : entry.at("shape")) shape.push_back(d.get<long>());
        const std::uint64_t begin = entry.at("data_offsets")[0].get<std::uint64_t>();
        const std::uint64_t end = entry.at("data_offsets")[1].get<std::uint64_t>();
        Tensor<float> t(shape);
        if (end - begin != static_cast<std::uint64_t>(t.numel()) * 4)
            throw std::runtime_error("safetensors: size mismatch for " + name);
        in.seekg(static_cast<std::streamoff>(data_start + begin));
        in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(end - begin));
        if (!in) throw std::runtime_error("safetensors: truncated data for " + name);
        out.emplace(name, std::move(t));
    }
    return out;
}

inline void write_safetensors(const std::string& path,
                              const std::map<std::string, Tensor<float>>& tensors) {
    nlohmann::json j;
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const std::uint64_t bytes = static_cast<std::uint64_t>(t.numel()) * 4;
        j[name] = {{"dtype", "F32"},
                   {"shape", t.shape},
                   {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    std::string header = j.dump();
    while (header.size() % 8 != 0) header += ' ';  // spec-recommended alignment
    const std::uint64_t header_len = header.size();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("safetensors: cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(&header_len), 8);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel()) * 4);
}

}  // namespace fundus
