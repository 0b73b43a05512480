#pragma once

#include <stdexcept>
#include <string>

namespace ptrlab {

/// Malformed or missing configuration; `key()` names the offending field as
/// a dotted path, e.g. "optimizer.epochs".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& message)
        : std::runtime_error(key + ": " + message)
        , key_(std::move(key))
    {
    }

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

} // namespace ptrlab
