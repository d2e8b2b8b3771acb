#include "plslab/cli.hpp"

#include "plslab/metrics.hpp"
#include "plslab/nn.hpp"
#include "plslab/objective.hpp"
#include "plslab/pls.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

namespace fs = std::filesystem;

namespace plslab {

namespace {

// Thrown for bad arguments that CLI11 cannot catch on its own.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

const std::vector<std::string> kNoiseNames{"none", "symmetric", "asymmetric", "idn"};
const std::vector<std::string> kCausalNames{"x_given_y", "y_given_x"};

std::vector<std::string> ablation_names()
{
    std::vector<std::string> out;
    for (Ablation a : all_ablations()) {
        out.push_back(to_string(a));
    }
    return out;
}

// Flags shared by train and compare; each maps onto a config key.
struct RunFlags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> causal;
    std::optional<std::string> ablation;
    std::optional<std::string> noise;
    std::optional<double> rate;
    std::optional<std::string> out;

    void add_to(CLI::App& app, bool with_seed)
    {
        app.add_option("--config", config, "Config file with key = value lines")->check(CLI::ExistingFile);
        app.add_option("--set", sets, "Override a config key: KEY=VALUE (repeatable)");
        if (with_seed) {
            app.add_option("--seed", seed, "Random seed");
        }
        app.add_option("--causal", causal, "Causal direction")->check(CLI::IsMember(kCausalNames));
        app.add_option("--ablation", ablation, "Loss / prior variant")->check(CLI::IsMember(ablation_names()));
        app.add_option("--noise", noise, "Synthetic noise kind")->check(CLI::IsMember(kNoiseNames));
        app.add_option("--rate", rate, "Synthetic noise rate")->check(CLI::Range(0.0, 1.0));
        app.add_option("--out", out, "Output directory");
    }

    // defaults < file < flags
    ConfigResolver resolve() const
    {
        ConfigResolver r;
        if (!config.empty()) {
            r.load_file(config);
        }
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
            }
            r.set(kv.substr(0, eq), kv.substr(eq + 1), ConfigSource::flag);
        }
        if (seed) r.set("seed", std::to_string(*seed), ConfigSource::flag);
        if (causal) r.set("causal", *causal, ConfigSource::flag);
        if (ablation) r.set("ablation", *ablation, ConfigSource::flag);
        if (noise) r.set("noise", *noise, ConfigSource::flag);
        if (rate) r.set("rate", config_value_of(*rate), ConfigSource::flag);
        if (out) r.set("out", *out, ConfigSource::flag);
        return r;
    }

    static std::string config_value_of(double v)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }
};

void check_run_config(const RunConfig& cfg)
{
    try {
        cfg.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (cfg.rate < 0.0 || cfg.rate > 1.0) {
        throw ConfigError("rate must lie in [0, 1]");
    }
    if (cfg.noise == NoiseKind::none && cfg.rate != 0.0 && cfg.train_data.empty()) {
        throw ConfigError("noise = none requires rate = 0");
    }
}

void write_summary(std::ostream& out, const std::string& name, const Dataset& ds)
{
    out << name << ": N=" << ds.size() << " d=" << ds.feature_dim << " classes=" << ds.num_classes
        << " noise=" << to_string(ds.noise_meta.kind) << " rate=" << ds.noise_meta.rate
        << " realized_flip_rate=" << fixed(ds.flip_rate()) << "\n";
}

class EpochPrinter : public TrainObserver {
public:
    explicit EpochPrinter(std::ostream& out) : out_(out) {}

    void on_epoch(const MetricsRecord& r, const ModelParams&) override
    {
        out_ << "epoch " << r.epoch << " acc=" << fixed(r.test_acc) << " coverage=" << fixed(r.coverage)
             << " unc=" << fixed(r.unc_clean, 3) << "/" << fixed(r.unc_noisy, 3)
             << " mse=" << fixed(r.transition_mse, 5) << " loss=" << fixed(r.loss_ce) << "+"
             << fixed(r.loss_pri) << "+" << fixed(r.loss_kl) << "\n";
    }

private:
    std::ostream& out_;
};

int cmd_generate(std::size_t classes, std::size_t n, std::size_t n_test, std::size_t dim, double separation,
                 const std::string& noise, double rate, std::uint64_t seed, const std::string& out_dir,
                 std::ostream& out)
{
    RunConfig cfg;
    cfg.classes = classes;
    cfg.n_train = n;
    cfg.n_test = n_test;
    cfg.dim = dim;
    cfg.separation = separation;
    cfg.noise = parse_noise_kind(noise);
    cfg.rate = rate;
    cfg.train.seed = seed;
    if (cfg.noise == NoiseKind::none && rate != 0.0) {
        throw UsageError("--rate must be 0 with --noise none");
    }
    const auto data = prepare_data(cfg);
    fs::create_directories(out_dir);
    save_csv(data.train, fs::path(out_dir) / "train.csv");
    save_csv(*data.test, fs::path(out_dir) / "test.csv");
    write_summary(out, "train", data.train);
    write_summary(out, "test", *data.test);
    return kExitOk;
}

int cmd_train(const RunFlags& flags, std::ostream& out)
{
    const auto resolver = flags.resolve();
    const RunConfig& cfg = resolver.config();
    check_run_config(cfg);
    out << "# effective config (defaults < file < flags)\n" << resolver.echo();

    const auto data = prepare_data(cfg);
    write_summary(out, "train", data.train);

    EpochPrinter printer(out);
    const auto result = train(data.train, data.test ? &*data.test : nullptr, cfg.train, &printer);

    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    const auto tag = run_tag(cfg.train);
    export_csv(result.history, dir / (tag + ".metrics.csv"));
    save_checkpoint(result.params, dir / (tag + ".ckpt"));
    if (!result.prior_states.empty()) {
        export_priors_csv(result.prior_states, dir / (tag + ".priors.csv"));
    }
    out << "wrote " << (dir / (tag + ".metrics.csv")).string() << "\n";
    out << "wrote " << (dir / (tag + ".ckpt")).string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_path, std::ostream& out)
{
    const auto params = load_checkpoint(checkpoint);
    const auto ds = load_csv(data_path);
    out << "test_acc = " << fixed(ds.size() ? test_accuracy(params, ds) : 0.0, 6) << "\n";
    out << "transition_mse = " << fixed(transition_mse(params, ds), 6) << "\n";
    return kExitOk;
}

struct Arm {
    std::string name;
    Ablation ablation;
    std::optional<CausalMode> causal;
};

Arm parse_arm(const std::string& spec)
{
    Arm arm{spec, Ablation::full, std::nullopt};
    const auto colon = spec.find(':');
    try {
        arm.ablation = parse_ablation(spec.substr(0, colon));
        if (colon != std::string::npos) {
            arm.causal = parse_causal_mode(spec.substr(colon + 1));
        }
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--arms: ") + e.what());
    }
    return arm;
}

struct ArmOutcome {
    std::vector<double> accuracies;
    std::vector<std::string> failures;
};

std::size_t thread_cap(std::size_t arms)
{
    std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PLSLAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) {
            throw UsageError(std::string("PLSLAB_THREADS must be a positive integer, got '") + env + "'");
        }
        cap = static_cast<std::size_t>(v);
    }
    return std::min(cap, arms);
}

int cmd_compare(const RunFlags& flags, const std::vector<std::string>& arm_specs,
                const std::vector<std::uint64_t>& seeds, std::ostream& out, std::ostream& err)
{
    if (arm_specs.empty()) {
        throw UsageError("--arms: at least one arm is required");
    }
    if (seeds.empty()) {
        throw UsageError("--seeds: at least one seed is required");
    }
    std::vector<Arm> arms;
    for (const auto& s : arm_specs) {
        arms.push_back(parse_arm(s));
    }
    const auto resolver = flags.resolve();
    const RunConfig base = resolver.config();
    check_run_config(base);
    out << "# effective config (defaults < file < flags)\n" << resolver.echo();

    const fs::path dir(base.out_dir);
    fs::create_directories(dir);

    std::vector<ArmOutcome> outcomes(arms.size());
    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t a = next++; a < arms.size(); a = next++) {
            for (std::uint64_t seed : seeds) {
                RunConfig cfg = base;
                cfg.train.seed = seed;
                cfg.train.ablation = arms[a].ablation;
                if (arms[a].causal) {
                    cfg.train.causal_mode = *arms[a].causal;
                }
                const auto tag = run_tag(cfg.train);
                try {
                    const auto data = prepare_data(cfg);
                    const auto result = train(data.train, data.test ? &*data.test : nullptr, cfg.train);
                    export_csv(result.history, dir / (tag + ".metrics.csv"));
                    outcomes[a].accuracies.push_back(result.history.back().test_acc);
                    std::lock_guard lock(log_mutex);
                    out << arms[a].name << " seed " << seed << ": acc=" << fixed(result.history.back().test_acc)
                        << "\n";
                } catch (const std::exception& e) {
                    outcomes[a].failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
                    std::lock_guard lock(log_mutex);
                    err << arms[a].name << " seed " << seed << " failed: " << e.what() << "\n";
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < thread_cap(arms.size()); ++t) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }

    std::ofstream csv(dir / "compare.csv");
    csv << "arm,runs,failed,mean_acc,std_acc\n";
    out << "arm                       runs  mean_acc ± std\n";
    bool any_failed = false;
    for (std::size_t a = 0; a < arms.size(); ++a) {
        const auto& accs = outcomes[a].accuracies;
        double mean = 0.0;
        double sd = 0.0;
        for (double v : accs) mean += v;
        if (!accs.empty()) mean /= static_cast<double>(accs.size());
        if (accs.size() > 1) {
            for (double v : accs) sd += (v - mean) * (v - mean);
            sd = std::sqrt(sd / static_cast<double>(accs.size() - 1));
        }
        any_failed = any_failed || !outcomes[a].failures.empty();
        char line[160];
        std::snprintf(line, sizeof line, "%-25s %4zu  %.4f ± %.4f%s\n", arms[a].name.c_str(), accs.size(), mean, sd,
                      outcomes[a].failures.empty() ? "" : "  (failures)");
        out << line;
        csv << arms[a].name << "," << accs.size() << "," << outcomes[a].failures.size() << "," << fixed(mean, 6)
            << "," << fixed(sd, 6) << "\n";
    }
    out << "wrote " << (dir / "compare.csv").string() << "\n";
    return any_failed ? kExitNumerical : kExitOk;
}

} // namespace

DataPair prepare_data(const RunConfig& cfg)
{
    DataPair out;
    if (!cfg.train_data.empty()) {
        if (!fs::exists(cfg.train_data)) {
            throw ConfigError("train_data: no such file '" + cfg.train_data + "'");
        }
        out.train = load_csv(cfg.train_data);
        if (!cfg.test_data.empty()) {
            if (!fs::exists(cfg.test_data)) {
                throw ConfigError("test_data: no such file '" + cfg.test_data + "'");
            }
            out.test = load_csv(cfg.test_data);
        }
        return out;
    }
    const auto seed = cfg.train.seed;
    out.train = inject_noise(gen_gaussian_blobs(cfg.n_train, cfg.classes, cfg.dim, cfg.separation, seed), cfg.noise,
                             cfg.rate, seed);
    out.test = gen_gaussian_blobs(cfg.n_test, cfg.classes, cfg.dim, cfg.separation, seed + 1000);
    return out;
}

std::string run_tag(const TrainConfig& cfg)
{
    return to_string(cfg.ablation) + "-" + to_string(cfg.causal_mode) + "-seed" + std::to_string(cfg.seed);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"plslab: noisy-label learning with partial label supervision"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "Write synthetic train/test CSVs");
    std::size_t classes = 4, n = 2000, n_test = 2000, dim = 2;
    double separation = 2.0, rate = 0.4;
    std::string noise = "idn", gen_out = "data";
    std::uint64_t gen_seed = 1;
    gen->add_option("--classes", classes, "Number of classes")->check(CLI::Range(2, 1000));
    gen->add_option("--n", n, "Training samples")->check(CLI::Range(2, 100000000));
    gen->add_option("--n-test", n_test, "Test samples")->check(CLI::Range(1, 100000000));
    gen->add_option("--dim", dim, "Feature dimension")->check(CLI::Range(1, 100000));
    gen->add_option("--separation", separation, "Distance of blob centres from the origin")
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--noise", noise, "Noise kind")->check(CLI::IsMember(kNoiseNames));
    gen->add_option("--rate", rate, "Noise rate")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--out", gen_out, "Output directory");

    auto* trn = app.add_subcommand("train", "Train one run; writes metrics CSV and checkpoint");
    RunFlags train_flags;
    train_flags.add_to(*trn, true);

    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset CSV");
    std::string checkpoint, data_path;
    ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data_path, "Dataset CSV")->required()->check(CLI::ExistingFile);

    auto* cmp = app.add_subcommand("compare", "Run several arms over shared seeds");
    RunFlags compare_flags;
    compare_flags.add_to(*cmp, false);
    std::vector<std::string> arm_specs;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    cmp->add_option("--arms", arm_specs, "Arms as ABLATION[:CAUSAL], comma separated")
        ->required()
        ->delimiter(',')
        ->allow_extra_args(false);
    cmp->add_option("--seeds", seeds, "Seeds, comma separated")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*gen) return cmd_generate(classes, n, n_test, dim, separation, noise, rate, gen_seed, gen_out, out);
        if (*trn) return cmd_train(train_flags, out);
        if (*ev) return cmd_evaluate(checkpoint, data_path, out);
        if (*cmp) {
            // "--arms ''" parses to one empty entry.
            std::erase(arm_specs, std::string{});
            return cmd_compare(compare_flags, arm_specs, seeds, out, err);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace plslab
