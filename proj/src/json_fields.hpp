#pragma once

#include "ptrlab/errors.hpp"

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace ptrlab::detail {

/// Strict reader over one JSON object: typed lookups that report the dotted
/// key path on failure, and a closing check that rejects unknown keys.
class Fields {
public:
    Fields(const nlohmann::json& j, std::string path)
        : j_(j)
        , path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(path_, "expected an object");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const nlohmann::json& at(const std::string& key) const
    {
        if (!has(key))
            throw ConfigError(key_path(key), "required key is missing");
        return j_.at(key);
    }

    double number(const std::string& key) const
    {
        const auto& v = at(key);
        if (!v.is_number())
            throw ConfigError(key_path(key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d))
            throw ConfigError(key_path(key), "expected a finite number");
        return d;
    }

    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::uint64_t count(const std::string& key) const
    {
        const auto& v = at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
            throw ConfigError(key_path(key), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) const
    {
        return has(key) ? count(key) : fallback;
    }

    bool flag(const std::string& key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean())
            throw ConfigError(key_path(key), "expected true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key) const
    {
        const auto& v = at(key);
        if (!v.is_string())
            throw ConfigError(key_path(key), "expected a string");
        return v.get<std::string>();
    }

    std::string text(const std::string& key, const std::string& fallback) const
    {
        return has(key) ? text(key) : fallback;
    }

    std::vector<std::uint64_t> counts(const std::string& key) const
    {
        const auto& v = at(key);
        if (!v.is_array())
            throw ConfigError(key_path(key), "expected an array of integers");
        std::vector<std::uint64_t> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number_integer() || v[i].get<std::int64_t>() < 0)
                throw ConfigError(key_path(key) + "[" + std::to_string(i) + "]", "expected a non-negative integer");
            out.push_back(v[i].get<std::uint64_t>());
        }
        return out;
    }

    void only(std::initializer_list<const char*> allowed) const
    {
        for (const auto& item : j_.items()) {
            bool known = false;
            for (const char* a : allowed)
                known = known || item.key() == a;
            if (!known)
                throw ConfigError(key_path(item.key()), "unknown key");
        }
    }

private:
    const nlohmann::json& j_;
    std::string path_;
};

} // namespace ptrlab::detail
