#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signspeak/config.hpp"
#include "signspeak/models.hpp"

namespace signspeak {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Text header (version, resolved config, vocab, parameter manifest) followed
// by raw little-endian float32 arrays in manifest order.
struct Checkpoint {
    KvConfig config;  // resolved run config echo; must contain model=<name>
    std::vector<std::string> vocab;
    std::uint64_t seed = 0;
    std::size_t epochs_run = 0;
    double best_val_loss = 0.0;
    ModelParams<float> params;

    ModelConfig model_config() const { return config_for_name(config.get("model")); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace signspeak
