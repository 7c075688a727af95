#pragma once

#include "ivl/losses.hpp"
#include "ivl/params.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace ivl {

// Key-value config text: one "key = value" per line, '#' comments.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
KvMap parse_kv_file(const std::filesystem::path& file);
std::string serialize_kv(const KvMap& kv);

struct TrainConfig {
    std::uint64_t seed = 42;
    long steps = 2000;
    int batch_size = 8;
    double learning_rate = 3e-3;
    double p_replace = 0.5;
    std::map<std::string, double> task_mix;  // empty means every task at 1.0
    LossWeights weights;
    InterfaceConfig interface;

    void validate() const;
    std::map<std::string, double> effective_task_mix() const;
};

// Round-trips exactly: the serialized form parses back to an equal config.
KvMap train_config_to_kv(const TrainConfig& cfg);
TrainConfig train_config_from_kv(const KvMap& kv);
std::uint64_t config_hash(const TrainConfig& cfg);

}  // namespace ivl
