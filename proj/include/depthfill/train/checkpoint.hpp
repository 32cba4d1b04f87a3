#pragma once

// Named-parameter archive: a magic string, a length-prefixed JSON header
// describing every tensor, then the raw little-endian payload. Used for
// model checkpoints, optimizer state, and externally supplied pretrained
// encoder weights.

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/nn/module.hpp"

namespace depthfill::train {

inline constexpr char kArchiveMagic[] = "DFARCH1\n";

template <class T>
struct Archive {
    nlohmann::json meta;                    // kind, config, arm, epoch, seed, ...
    std::map<std::string, Tensor<T>> tensors;
};

template <class T>
void save_archive(const std::string& path, const nlohmann::json& meta,
                  const std::map<std::string, Tensor<T>>& tensors) {
    nlohmann::json header = meta;
    header["dtype"] = sizeof(T) == 4 ? "f4" : "f8";
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        params.push_back({{"name", name}, {"shape", t.shape()}});
    }
    header["params"] = params;
    const std::string htext = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path);
    f.write(kArchiveMagic, 8);
    const std::uint64_t hlen = htext.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, t] : tensors) {
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(T)));
    }
    if (!f) throw IoError("failed writing checkpoint " + path);
}

template <class T>
Archive<T> load_archive(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != kArchiveMagic) {
        throw CheckpointError(path + ": not a parameter archive");
    }
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw CheckpointError(path + ": truncated header");

    Archive<T> out;
    try {
        out.meta = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": bad header: " + e.what());
    }
    const std::string want_dtype = sizeof(T) == 4 ? "f4" : "f8";
    if (out.meta.value("dtype", "f4") != want_dtype) {
        throw CheckpointError(path + ": dtype " + out.meta.value("dtype", "?") +
                              " does not match requested " + want_dtype);
    }
    for (const auto& p : out.meta.at("params")) {
        const std::string name = p.at("name").template get<std::string>();
        const std::vector<int> shape = p.at("shape").template get<std::vector<int>>();
        Tensor<T> t(shape);
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(T)));
        if (!f) throw CheckpointError(path + ": truncated payload at " + name);
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

// Writes a model's parameters and named state into an archive.
template <class T, class Model>
void save_model_checkpoint(const std::string& path, Model& model, nlohmann::json meta) {
    std::map<std::string, Tensor<T>> tensors;
    for (auto* p : model.params()) tensors.emplace(p->name, p->value);
    for (auto& [name, t] : model.state()) tensors.emplace(name, *t);
    save_archive<T>(path, std::move(meta), tensors);
}

// Restores a model from an archive; every parameter and state tensor must be
// present with an identical shape.
template <class T, class Model>
nlohmann::json load_model_checkpoint(const std::string& path, Model& model) {
    Archive<T> a = load_archive<T>(path);
    auto restore = [&](const std::string& name, Tensor<T>& dst) {
        auto it = a.tensors.find(name);
        if (it == a.tensors.end()) {
            throw CheckpointError(path + ": archive is missing tensor " + name);
        }
        if (it->second.shape() != dst.shape()) {
            throw CheckpointError(path + ": tensor " + name + " has shape " +
                                  it->second.shape_string() + ", model expects " +
                                  dst.shape_string());
        }
        dst = it->second;
    };
    for (auto* p : model.params()) restore(p->name, p->value);
    for (auto& [name, t] : model.state()) restore(name, *t);
    return a.meta;
}

}  // namespace depthfill::train
