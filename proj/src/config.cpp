#include "sdsr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sdsr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::map<std::string, std::string>& desk_defaults() {
    static const std::map<std::string, std::string> d{
        {"data.train_pairs", "200"},
        {"data.test_pairs", "16"},
        {"data.seed", "1"},
        {"data.hr_size", "64"},
        {"data.scale", "4"},
        {"data.min_objects", "1"},
        {"data.max_objects", "3"},
        {"data.min_disp", "1"},
        {"data.max_disp", "8"},
        {"data.large_disp", "5"},

        {"degradation.blur_prob", "1.0"},
        {"degradation.kernel_size", "7"},
        {"degradation.sigma_lo", "0.2"},
        {"degradation.sigma_hi", "1.2"},
        {"degradation.aniso_prob", "0.3"},
        {"degradation.resize_lo", "0.6"},
        {"degradation.resize_hi", "1.2"},
        {"degradation.noise_lo", "0.0"},
        {"degradation.noise_hi", "0.015"},
        {"degradation.compress_lo", "0.0"},
        {"degradation.compress_hi", "0.02"},
        {"degradation.second_prob", "0.3"},
        {"degradation.per_view_noise", "true"},

        {"codec.factor", "4"},
        {"codec.latent_channels", "4"},
        {"codec.width", "16"},
        {"codec.bypass", "false"},
        {"codec.epochs", "30"},
        {"codec.batch", "8"},
        {"codec.lr", "2e-3"},
        {"codec.seed", "11"},

        {"sse.token_side", "4"},
        {"sse.dim", "32"},
        {"sse.width", "16"},
        {"sse.threshold", "0.68"},
        {"sse.tag_merge_enabled", "true"},
        {"sse.epochs", "20"},
        {"sse.batch", "16"},
        {"sse.lr", "2e-3"},
        {"sse.seed", "12"},

        {"soan.channels", "32"},
        {"soan.groups", "2"},
        {"soan.window", "4"},
        {"soan.epochs", "10"},
        {"soan.batch", "8"},
        {"soan.lr", "1e-3"},
        {"soan.adv_weight", "0.02"},
        {"soan.loss", "l1"},
        {"soan.seed", "13"},

        {"unet.base_channels", "64"},
        {"unet.channel_mults", "1,2,2"},
        {"unet.attn_levels", "1,2"},
        {"unet.time_dim", "64"},
        {"unet.trainable", "true"},

        {"tascata.enabled", "true"},
        {"tascata.insertion_levels", "1,2"},
        {"tascata.tau", "1.0"},

        {"controlnet.mode", "soa"},

        {"diffusion.T", "1000"},
        {"diffusion.beta_min", "1e-4"},
        {"diffusion.beta_max", "0.02"},
        {"diffusion.shared_noise", "true"},
        {"diffusion.steps", "50"},
        {"diffusion.infer_start", "-1"},

        {"train.epochs", "10"},
        {"train.batch", "8"},
        {"train.lr", "1e-3"},
        {"train.beta1", "0.9"},
        {"train.beta2", "0.999"},
        {"train.clip_norm", "1.0"},
        {"train.seed", "0"},
        {"train.ckpt_every", "5"},

        {"pipeline.workdir", "run"},
        {"pipeline.train_soan_ckpt", ""},
        {"pipeline.infer_soan_ckpt", ""},

        {"metrics.max_disp", "12"},
        {"metrics.block", "9"},
        {"metrics.ssim_window", "8"},
    };
    return d;
}

}  // namespace

Config Config::preset(const std::string& name) {
    Config c;
    c.m_values = desk_defaults();
    if (name == "desk") return c;
    if (name == "reduced") {
        c.set("unet.base_channels", "16");
        c.set("unet.time_dim", "32");
        c.set("soan.channels", "16");
        c.set("soan.epochs", "8");
        c.set("train.epochs", "12");
        c.set("diffusion.steps", "20");
        c.set("diffusion.infer_start", "200");
        return c;
    }
    if (name == "paper-scale") {
        c.set("data.hr_size", "512");
        c.set("data.train_pairs", "800");
        c.set("data.max_disp", "64");
        c.set("data.large_disp", "32");
        c.set("sse.token_side", "8");
        c.set("soan.channels", "64");
        c.set("unet.base_channels", "128");
        c.set("unet.channel_mults", "1,2,4,4");
        c.set("unet.attn_levels", "1,2,3");
        c.set("tascata.insertion_levels", "1,2,3");
        c.set("unet.time_dim", "256");
        c.set("train.epochs", "100");
        c.set("train.batch", "32");
        c.set("train.lr", "5e-5");
        c.set("metrics.max_disp", "32");
        return c;
    }
    throw std::invalid_argument("unknown preset: " + name);
}

std::vector<std::string> Config::preset_names() { return {"desk", "reduced", "paper-scale"}; }

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    load_string(ss.str(), path);
}

void Config::load_string(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": bad section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        try {
            set(key, trim(line.substr(eq + 1)));
        } catch (const std::exception& e) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void Config::set_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("override must look like key=value: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = m_values.find(key);
    if (it == m_values.end()) throw std::invalid_argument("unknown config key: " + key);
    it->second = value;
}

const std::string& Config::get(const std::string& key) const {
    auto it = m_values.find(key);
    if (it == m_values.end()) throw std::invalid_argument("unknown config key: " + key);
    return it->second;
}

int Config::get_int(const std::string& key) const { return static_cast<int>(get_i64(key)); }

long long Config::get_i64(const std::string& key) const {
    const std::string& s = get(key);
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument(key + ": not an integer: " + s);
    return v;
}

double Config::get_double(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw std::invalid_argument(key + ": not a number: " + s);
    return v;
}

bool Config::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    throw std::invalid_argument(key + ": not a boolean: " + s);
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw std::invalid_argument(key + ": bad list entry: " + item);
        }
    }
    return out;
}

nlohmann::json Config::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m_values) j[k] = v;
    return j;
}

std::string Config::to_text() const {
    std::string out, section;
    for (const auto& [k, v] : m_values) {
        const auto dot = k.find('.');
        const std::string sec = k.substr(0, dot);
        if (sec != section) {
            out += (out.empty() ? "[" : "\n[") + sec + "]\n";
            section = sec;
        }
        out += k.substr(dot + 1) + " = " + v + "\n";
    }
    return out;
}

}  // namespace sdsr
