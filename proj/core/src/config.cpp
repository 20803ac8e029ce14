#include "kcflat/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kcflat/error.hpp"

namespace kcflat {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string body = trim(line);
        if (body.empty() || body[0] == '#' || body[0] == ';') continue;
        if (body.front() == '[') {
            if (body.back() != ']') throw ConfigError(origin + ":" + std::to_string(line_no) + ": bad section header");
            section = trim(body.substr(1, body.size() - 2));
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        if (!value.empty() && (value.front() == '"' || value.front() == '\'')) {
            const char q = value.front();
            const auto close = value.find(q, 1);
            if (close == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated quote");
            }
            value = value.substr(1, close - 1);
        } else {
            const auto hash = value.find(" #");
            if (hash != std::string::npos) value = trim(value.substr(0, hash));
        }
        cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

long long KeyValueConfig::get_int64(const std::string& key, long long fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    long long out = 0;
    const auto* end = v->data() + v->size();
    auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ConfigError(origin_ + ": '" + key + "' is not an integer: " + *v);
    return out;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    return static_cast<int>(get_int64(key, fallback));
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument(*v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": '" + key + "' is not a number: " + *v);
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::string s = *v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(origin_ + ": '" + key + "' is not a boolean: " + *v);
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<int> out;
    for (const auto& item : split_list(*v)) {
        int x = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
        if (ec != std::errc{} || ptr != item.data() + item.size()) {
            throw ConfigError(origin_ + ": '" + key + "' has a non-integer item: " + item);
        }
        out.push_back(x);
    }
    return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(const std::string& key,
                                                         const std::vector<std::string>& fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    return split_list(*v);
}

std::vector<std::string> KeyValueConfig::unknown_keys(const std::vector<std::string>& known) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
        if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
    }
    return out;
}

std::string KeyValueConfig::to_string() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
}

}  // namespace kcflat
