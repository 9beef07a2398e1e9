#pragma once

// Layered key-value configuration. Layers, lowest first: a named preset, any
// number of files, then command-line overrides. Files hold `key = value` lines;
// a `[section]` header prefixes following keys with `section.`; `#` starts a
// comment. Every key must already exist in the preset, which catches typos.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace sdsr {

class Config {
public:
    /// "desk" (default scale), "reduced" (single-core ablation runs) or "paper-scale".
    static Config preset(const std::string& name = "desk");
    static std::vector<std::string> preset_names();

    void load_file(const std::string& path);
    void load_string(const std::string& text, const std::string& origin = "<string>");
    /// Applies one `key=value` override.
    void set_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return m_values.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    long long get_i64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return m_values; }
    nlohmann::json to_json() const;
    std::string to_text() const;

private:
    std::map<std::string, std::string> m_values;
};

}  // namespace sdsr
