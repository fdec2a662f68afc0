#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "modfuse/error.hpp"

namespace modfuse {

enum class KeyType { Int, Float, Uint64 };

struct KeySpec {
    const char* name;
    KeyType type;
    const char* default_value;
    const char* help;
};

// The full documented key table, in echo order.
const std::vector<KeySpec>& run_config_keys();

// Flat `key = value` configuration with `#` comments. Unknown keys are
// rejected with their line number; every key has a default.
class RunConfig {
public:
    static RunConfig defaults();
    static RunConfig load(const std::filesystem::path& path);
    // Parses `key = value` lines (checkpoint meta echo path).
    static RunConfig from_lines(const std::vector<std::string>& lines,
                                const std::string& origin);

    // Validates the key exists and the value parses for its declared type.
    void set(const std::string& key, const std::string& value,
             const std::string& where = "runtime");

    bool was_set(const std::string& key) const { return explicit_.count(key) > 0; }

    long long get_int(const std::string& key) const;
    double get_float(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    const std::string& get_raw(const std::string& key) const;

    // All keys in table order, current values.
    std::vector<std::pair<std::string, std::string>> echo() const;

private:
    std::unordered_map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

}  // namespace modfuse
