#pragma once

#include <stdexcept>
#include <string>

namespace grainpick {

// Error categories map 1:1 onto CLI exit codes (see tools/).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
    enum class kind {
        invalid_path,
        corrupt_header,
        channel_mismatch,
        truncated_payload,
    };
    data_error(kind k, const std::string& msg) : std::runtime_error(msg), k(k) {}
    kind k;
};

struct model_error : std::runtime_error {
    explicit model_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct train_diverged_error : model_error {
    explicit train_diverged_error(const std::string& msg) : model_error(msg) {}
};

struct sim_error : std::runtime_error {
    explicit sim_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace grainpick
