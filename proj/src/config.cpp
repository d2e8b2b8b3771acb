#include "plslab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace plslab {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& text)
{
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw std::invalid_argument("expected a number, got '" + text + "'");
    }
    return value;
}

bool parse_bool(const std::string& text)
{
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& text)
{
    std::vector<std::size_t> out;
    if (text.empty() || text == "none") {
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_number<std::size_t>(trim(item)));
    }
    return out;
}

std::string format_real(double v)
{
    // Shortest text that parses back to the same double.
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_sizes(const std::vector<std::size_t>& v)
{
    if (v.empty()) {
        return "none";
    }
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + std::to_string(v[i]);
    }
    return out;
}

struct Key {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Key size_key(T RunConfig::*field)
{
    return {[field](RunConfig& c, const std::string& v) { c.*field = parse_number<T>(v); },
            [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

template <typename T>
Key train_size_key(T TrainConfig::*field)
{
    return {[field](RunConfig& c, const std::string& v) { c.train.*field = parse_number<T>(v); },
            [field](const RunConfig& c) { return std::to_string(c.train.*field); }};
}

Key train_real_key(double TrainConfig::*field)
{
    return {[field](RunConfig& c, const std::string& v) { c.train.*field = parse_number<double>(v); },
            [field](const RunConfig& c) { return format_real(c.train.*field); }};
}

Key string_key(std::string RunConfig::*field)
{
    return {[field](RunConfig& c, const std::string& v) { c.*field = v; },
            [field](const RunConfig& c) { return c.*field; }};
}

std::string rounding_name(RoundingMode m) { return m == RoundingMode::half_up ? "half_up" : "ceiling"; }

RoundingMode parse_rounding(const std::string& v)
{
    if (v == "half_up") return RoundingMode::half_up;
    if (v == "ceiling") return RoundingMode::ceiling;
    throw std::invalid_argument("unknown rounding mode '" + v + "'");
}

const std::map<std::string, Key>& key_table()
{
    static const std::map<std::string, Key> table = {
        {"ablation", {[](RunConfig& c, const std::string& v) { c.train.ablation = parse_ablation(v); },
                      [](const RunConfig& c) { return to_string(c.train.ablation); }}},
        {"batch_size", train_size_key(&TrainConfig::batch_size)},
        {"beta", train_real_key(&TrainConfig::beta)},
        {"causal", {[](RunConfig& c, const std::string& v) { c.train.causal_mode = parse_causal_mode(v); },
                    [](const RunConfig& c) { return to_string(c.train.causal_mode); }}},
        {"classes", size_key(&RunConfig::classes)},
        {"classifier_hidden",
         {[](RunConfig& c, const std::string& v) { c.train.classifier_hidden = parse_sizes(v); },
          [](const RunConfig& c) { return format_sizes(c.train.classifier_hidden); }}},
        {"dim", size_key(&RunConfig::dim)},
        {"epochs", train_size_key(&TrainConfig::epochs)},
        {"K", train_size_key(&TrainConfig::K)},
        {"lr", train_real_key(&TrainConfig::lr)},
        {"lr_decay_epoch", train_size_key(&TrainConfig::lr_decay_epoch)},
        {"n_test", size_key(&RunConfig::n_test)},
        {"n_train", size_key(&RunConfig::n_train)},
        {"noise", {[](RunConfig& c, const std::string& v) { c.noise = parse_noise_kind(v); },
                   [](const RunConfig& c) { return to_string(c.noise); }}},
        {"out", string_key(&RunConfig::out_dir)},
        {"priors_in_baseline",
         {[](RunConfig& c, const std::string& v) { c.train.priors_in_baseline = parse_bool(v); },
          [](const RunConfig& c) { return std::string(c.train.priors_in_baseline ? "true" : "false"); }}},
        {"pri_kl", {[](RunConfig& c, const std::string& v) { c.train.pri_kl = parse_pri_kl(v); },
                    [](const RunConfig& c) { return to_string(c.train.pri_kl); }}},
        {"rate", {[](RunConfig& c, const std::string& v) { c.rate = parse_number<double>(v); },
                  [](const RunConfig& c) { return format_real(c.rate); }}},
        {"rounding", {[](RunConfig& c, const std::string& v) { c.train.rounding = parse_rounding(v); },
                      [](const RunConfig& c) { return rounding_name(c.train.rounding); }}},
        {"seed", train_size_key(&TrainConfig::seed)},
        {"separation", {[](RunConfig& c, const std::string& v) { c.separation = parse_number<double>(v); },
                        [](const RunConfig& c) { return format_real(c.separation); }}},
        {"test_data", string_key(&RunConfig::test_data)},
        {"train_data", string_key(&RunConfig::train_data)},
        {"transition_hidden",
         {[](RunConfig& c, const std::string& v) { c.train.transition_hidden = parse_sizes(v); },
          [](const RunConfig& c) { return format_sizes(c.train.transition_hidden); }}},
        {"warmup_epochs", train_size_key(&TrainConfig::warmup_epochs)},
        {"weight_decay", train_real_key(&TrainConfig::weight_decay)},
    };
    return table;
}

} // namespace

std::string to_string(ConfigSource source)
{
    switch (source) {
    case ConfigSource::default_value: return "default";
    case ConfigSource::file: return "file";
    case ConfigSource::flag: return "flag";
    }
    return "?";
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> out;
    for (const auto& [k, _] : key_table()) {
        out.push_back(k);
    }
    return out;
}

std::string config_value(const RunConfig& cfg, const std::string& key)
{
    const auto it = key_table().find(key);
    if (it == key_table().end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    return it->second.get(cfg);
}

ConfigResolver::ConfigResolver()
{
    for (const auto& [k, _] : key_table()) {
        sources_[k] = ConfigSource::default_value;
    }
}

void ConfigResolver::set(const std::string& key, const std::string& value, ConfigSource source)
{
    const auto it = key_table().find(key);
    if (it == key_table().end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    try {
        it->second.set(config_, value);
    } catch (const std::exception& e) {
        throw ConfigError("bad value for '" + key + "': " + e.what());
    }
    sources_[key] = source;
}

void ConfigResolver::load_text(const std::string& text, const std::string& origin)
{
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        const auto where = origin + ":" + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) {
            throw ConfigError(where + "expected 'key = value'");
        }
        try {
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), ConfigSource::file);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
}

void ConfigResolver::load_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    load_text(ss.str(), path.string());
}

ConfigSource ConfigResolver::source(const std::string& key) const
{
    const auto it = sources_.find(key);
    if (it == sources_.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    return it->second;
}

std::string ConfigResolver::echo() const
{
    std::string out;
    for (const auto& [key, entry] : key_table()) {
        out += key + " = " + entry.get(config_) + "  # " + to_string(sources_.at(key)) + "\n";
    }
    return out;
}

} // namespace plslab
