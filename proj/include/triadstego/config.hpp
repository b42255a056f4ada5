#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"

namespace triadstego {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace detail

// Line-based `key = value` configuration with [section] headers and `#`
// comments. Parsing is permissive about whitespace only; consumers pull
// values with take()/take_or() and finish with ensure_consumed(), which
// turns every unrecognized key into an error instead of silently ignoring a
// typo.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse_text(const std::string& text, const std::string& origin = "<text>") {
        ConfigFile cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']' || t.size() < 3) {
                    cfg.fail(line_no, "malformed section header \"" + t + "\"");
                }
                section = detail::trim(t.substr(1, t.size() - 2));
                if (section.empty()) cfg.fail(line_no, "empty section name");
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos) {
                cfg.fail(line_no, "expected `key = value`, got \"" + t + "\"");
            }
            const std::string key = detail::trim(t.substr(0, eq));
            const std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty()) cfg.fail(line_no, "empty key");
            Entry e;
            e.value = value;
            e.line = line_no;
            if (!cfg.entries_[section].emplace(key, e).second) {
                cfg.fail(line_no, "duplicate key \"" + key + "\" in section [" + section + "]");
            }
        }
        return cfg;
    }

    static ConfigFile parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_text(buf.str(), path.string());
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = entries_.find(section);
        return s != entries_.end() && s->second.count(key) > 0;
    }

    std::string take(const std::string& section, const std::string& key) {
        auto s = entries_.find(section);
        if (s == entries_.end() || s->second.find(key) == s->second.end()) {
            throw ConfigError(origin_ + ": missing required key \"" + key + "\" in section [" +
                              section + "]");
        }
        Entry& e = s->second.at(key);
        e.consumed = true;
        return e.value;
    }

    std::string take_or(const std::string& section, const std::string& key,
                        const std::string& fallback) {
        return has(section, key) ? take(section, key) : fallback;
    }

    std::int64_t take_int(const std::string& section, const std::string& key,
                          std::int64_t fallback) {
        return has(section, key) ? parse_int(section, key, take(section, key)) : fallback;
    }

    std::uint64_t take_u64(const std::string& section, const std::string& key,
                           std::uint64_t fallback) {
        if (!has(section, key)) return fallback;
        const std::string v = take(section, key);
        try {
            std::size_t pos = 0;
            const std::uint64_t r = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": [" + section + "] " + key +
                              " must be a non-negative integer, got \"" + v + "\"");
        }
    }

    double take_real(const std::string& section, const std::string& key, double fallback) {
        if (!has(section, key)) return fallback;
        const std::string v = take(section, key);
        try {
            std::size_t pos = 0;
            const double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": [" + section + "] " + key +
                              " must be a real number, got \"" + v + "\"");
        }
    }

    bool take_bool(const std::string& section, const std::string& key, bool fallback) {
        if (!has(section, key)) return fallback;
        const std::string v = take(section, key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError(origin_ + ": [" + section + "] " + key +
                          " must be a boolean, got \"" + v + "\"");
    }

    // Every key a consumer did not take is treated as unknown.
    void ensure_consumed() const {
        std::vector<std::string> leftovers;
        for (const auto& [section, keys] : entries_) {
            for (const auto& [key, e] : keys) {
                if (!e.consumed) leftovers.push_back("[" + section + "] " + key);
            }
        }
        if (!leftovers.empty()) {
            std::string msg = origin_ + ": unknown config key(s):";
            for (const auto& k : leftovers) msg += " " + k;
            throw ConfigError(msg);
        }
    }

    const std::string& origin() const { return origin_; }

private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool consumed = false;
    };

    [[noreturn]] void fail(int line, const std::string& what) const {
        throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + what);
    }

    std::int64_t parse_int(const std::string& section, const std::string& key,
                           const std::string& v) const {
        try {
            std::size_t pos = 0;
            const std::int64_t r = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": [" + section + "] " + key +
                              " must be an integer, got \"" + v + "\"");
        }
    }

    std::string origin_ = "<text>";
    std::map<std::string, std::map<std::string, Entry>> entries_;
};

}  // namespace triadstego
