#pragma once

#include <stdexcept>
#include <string>

namespace clab {

// Error taxonomy mirrors the CLI exit codes: config(2), validation(3), numerical(4).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what, std::string key = {})
        : std::runtime_error(what), offending_key(std::move(key)) {}
    std::string offending_key;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace clab
