// config.hpp - Strict key = value run configuration.
//
// Lines are `section.key = value`; `[section]` headers prefix the keys that
// follow; `#` starts a comment. Unknown keys and duplicates are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dicke/meanfield.hpp"
#include "dicke/model.hpp"

namespace dicke {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Config {
public:
    static Config parse(std::istream& is, const std::string& source = "<config>");
    static Config load(const std::filesystem::path& path);

    /// `key=value` override; replaces any earlier value.
    void set(const std::string& assignment);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::optional<double> get_optional_double(const std::string& key) const;
    long get_int(const std::string& key, long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;

    static const std::vector<std::string>& known_keys();

private:
    void put(const std::string& key, const std::string& value, const std::string& where, bool allow_replace);
    std::map<std::string, std::string> values_;
};

/// Model parameters from the model.* and modes.* keys (validated).
ModelParams model_from_config(const Config& c);

/// Initial collective state from init.* (defaults: spins down, A = 0).
MeanFieldState initial_state_from_config(const Config& c);

/// Dressing inputs from dressing.* (validated).
DressingParams dressing_from_config(const Config& c);

}  // namespace dicke
