#pragma once

#include <stdexcept>
#include <string>

namespace streamkm {

// Error taxonomy mirrors the CLI exit codes: config/input -> 1,
// contract violations detected mid-run -> 2, anything else -> 3.
struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct capability_error : std::runtime_error {
    explicit capability_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct contract_error : std::runtime_error {
    explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace streamkm
