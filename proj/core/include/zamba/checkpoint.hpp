#pragma once

// ZMB1 checkpoint container:
//   magic "ZMB1" | u32 version | u32 n_entries | entries | u32 n_tensors | tensors
//   entry:  u32 key_len, key bytes, u32 value_len, value bytes (UTF-8)
//   tensor: u32 name_len, name bytes, u32 rank, u64 extents[rank], f32 data (LE)
// Config fields are entries prefixed "cfg."; anything else (training step,
// sampler counters, ...) rides along as extras. Tensor payloads are always
// 32-bit floats regardless of the in-memory precision. The shared attention
// bundle appears once, under its registry names.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zamba/model.hpp"
#include "zamba/optimizer.hpp"

namespace zamba {

struct NamedTensorF32 {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct CheckpointFile {
    uint32_t version = 1;
    ZambaConfig config;
    std::map<std::string, std::string> extras;
    std::vector<NamedTensorF32> tensors;

    const NamedTensorF32* find(const std::string& name) const;
};

template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model, const AdamW<S>* optimizer,
                     const std::map<std::string, std::string>& extras);

CheckpointFile read_checkpoint(const std::string& path);

template <typename S>
Model<S> load_model(const CheckpointFile& file);

template <typename S>
void restore_optimizer(const CheckpointFile& file, AdamW<S>& opt);

// Architecture fields that differ between two configs; empty means
// checkpoint-compatible (seed and scan mode are runtime concerns).
std::vector<std::string> config_arch_diff(const ZambaConfig& a, const ZambaConfig& b);

// cfg.* entry map used by the file layout; also handy for effective-config
// emission.
std::map<std::string, std::string> config_to_entries(const ZambaConfig& cfg);
ZambaConfig config_from_entries(const std::map<std::string, std::string>& entries);

}  // namespace zamba
