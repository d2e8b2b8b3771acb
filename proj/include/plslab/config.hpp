#pragma once

#include "plslab/dataset.hpp"
#include "plslab/objective.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace plslab {

// Everything a CLI run needs. When `train_data` is empty, train/test sets are
// synthesised from the data_* keys and `noise`/`rate`, seeded by `train.seed`.
struct RunConfig {
    TrainConfig train;
    std::string train_data;
    std::string test_data;
    std::string out_dir = "runs";
    NoiseKind noise = NoiseKind::idn;
    double rate = 0.4;
    std::size_t classes = 4;
    std::size_t n_train = 2000;
    std::size_t n_test = 2000;
    std::size_t dim = 2;
    double separation = 2.0;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ConfigSource { default_value, file, flag };
std::string to_string(ConfigSource source);

// Tracks where each key's effective value came from.
class ConfigResolver {
public:
    ConfigResolver();

    // `key = value` lines; `#` starts a comment. Unknown keys and malformed
    // lines throw ConfigError naming the file and line.
    void load_file(const std::filesystem::path& path);
    void load_text(const std::string& text, const std::string& origin);

    // Throws ConfigError naming the key on unknown keys or bad values.
    void set(const std::string& key, const std::string& value, ConfigSource source);

    const RunConfig& config() const { return config_; }
    ConfigSource source(const std::string& key) const;

    // One `key = value  # source` line per key, in key order.
    std::string echo() const;

private:
    RunConfig config_;
    std::map<std::string, ConfigSource> sources_;
};

// Names of every accepted key, sorted.
std::vector<std::string> config_keys();

// Current value of `key` rendered as it would appear in a config file.
std::string config_value(const RunConfig& cfg, const std::string& key);

} // namespace plslab
