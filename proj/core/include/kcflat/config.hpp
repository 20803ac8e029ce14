#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kcflat {

// Plain-text key-value configuration:
//   # comment
//   key = value
//   name = "quoted value"
//   [section]        -> following keys are read as "section.key"
// Keys are case-sensitive. Duplicate keys keep the last value.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return values_.contains(key); }
    std::optional<std::string> get(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    long long get_int64(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated list, e.g. "512, 50".
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<std::string> get_string_list(const std::string& key, const std::vector<std::string>& fallback) const;

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    // Keys not in `known` - lets callers reject typos.
    std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

    std::string to_string() const;

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
};

}  // namespace kcflat
