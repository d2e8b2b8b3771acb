#include "plslab/dataset.hpp"

#include "plslab/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace plslab {

namespace {

// Stream ids for mix_seed, one per randomised operation.
constexpr std::uint64_t kBlobStream = 11;
constexpr std::uint64_t kSymmetricStream = 12;
constexpr std::uint64_t kAsymmetricStream = 13;
constexpr std::uint64_t kIdnStream = 14;

constexpr double kIdnStddev = 0.1;

void check_rate(double rate)
{
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("noise rate must lie in [0, 1), got " + std::to_string(rate));
    }
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t line, const std::string& what)
{
    throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line)
{
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        fail_at(path, line, "expected a finite number, got '" + s + "'");
    }
    return v;
}

std::size_t parse_index(const std::string& s, const std::filesystem::path& path, std::size_t line)
{
    std::size_t v = 0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || s.empty()) {
        fail_at(path, line, "expected a nonnegative integer, got '" + s + "'");
    }
    return v;
}

std::vector<LabelDist> one_hot_rows(const Dataset& ds)
{
    std::vector<LabelDist> rows;
    rows.reserve(ds.size());
    for (const auto& s : ds.samples) {
        rows.push_back(LabelDist::one_hot(ds.num_classes, s.y_clean));
    }
    return rows;
}

} // namespace

std::string to_string(NoiseKind kind)
{
    switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric: return "asymmetric";
    case NoiseKind::idn: return "idn";
    }
    return "none";
}

NoiseKind parse_noise_kind(const std::string& name)
{
    if (name == "none") return NoiseKind::none;
    if (name == "symmetric") return NoiseKind::symmetric;
    if (name == "asymmetric") return NoiseKind::asymmetric;
    if (name == "idn") return NoiseKind::idn;
    throw std::invalid_argument("unknown noise kind '" + name + "'");
}

double Dataset::flip_rate() const
{
    if (samples.empty()) {
        return 0.0;
    }
    std::size_t flips = 0;
    for (const auto& s : samples) {
        flips += s.y_noisy != s.y_clean ? 1 : 0;
    }
    return static_cast<double>(flips) / static_cast<double>(samples.size());
}

void Dataset::validate() const
{
    if (num_classes < 2) {
        throw DataError("dataset needs at least 2 classes");
    }
    if (feature_dim < 1) {
        throw DataError("dataset needs feature_dim >= 1");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.id != i) {
            throw DataError("sample ids must be 0..N-1 in order; found id " + std::to_string(s.id) +
                            " at position " + std::to_string(i));
        }
        if (s.x.size() != feature_dim) {
            throw DataError("sample " + std::to_string(i) + " has wrong feature dimension");
        }
        if (!std::all_of(s.x.begin(), s.x.end(), [](double v) { return std::isfinite(v); })) {
            throw DataError("sample " + std::to_string(i) + " has non-finite features");
        }
        if (s.y_noisy >= num_classes || s.y_clean >= num_classes) {
            throw DataError("sample " + std::to_string(i) + " has a label out of range");
        }
    }
    if (noise_meta.true_transition_rows.size() != samples.size()) {
        throw DataError("transition rows do not match the sample count");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& row = noise_meta.true_transition_rows[i];
        if (row.size() != num_classes || !row.is_valid(1e-9)) {
            throw DataError("transition row " + std::to_string(i) + " is not a distribution over the classes");
        }
    }
}

Dataset gen_gaussian_blobs(std::size_t n, std::size_t num_classes, std::size_t dim, double separation,
                           std::uint64_t seed)
{
    if (num_classes < 2) {
        throw std::invalid_argument("gen_gaussian_blobs: need at least 2 classes");
    }
    if (n < num_classes) {
        throw std::invalid_argument("gen_gaussian_blobs: n must be >= num_classes");
    }
    if (dim < 1) {
        throw std::invalid_argument("gen_gaussian_blobs: dim must be >= 1");
    }
    if (!(separation > 0.0)) {
        throw std::invalid_argument("gen_gaussian_blobs: separation must be positive");
    }

    Rng rng(mix_seed(seed, kBlobStream));

    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = i % num_classes;
    }
    rng.shuffle(std::span<std::size_t>(labels));

    std::vector<std::vector<double>> centres(num_classes, std::vector<double>(dim, 0.0));
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (dim == 1) {
            centres[c][0] = separation * static_cast<double>(c);
        } else {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
            centres[c][0] = separation * std::cos(angle);
            centres[c][1] = separation * std::sin(angle);
        }
    }

    Dataset ds;
    ds.num_classes = num_classes;
    ds.feature_dim = dim;
    ds.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = ds.samples[i];
        s.id = i;
        s.y_clean = labels[i];
        s.y_noisy = labels[i];
        s.x.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            s.x[k] = centres[labels[i]][k] + rng.normal();
        }
    }
    ds.noise_meta.kind = NoiseKind::none;
    ds.noise_meta.rate = 0.0;
    ds.noise_meta.true_transition_rows = one_hot_rows(ds);
    return ds;
}

Dataset inject_symmetric(const Dataset& ds, double rate, std::uint64_t seed)
{
    check_rate(rate);
    Rng rng(mix_seed(seed, kSymmetricStream));
    const std::size_t classes = ds.num_classes;
    const double off = rate / static_cast<double>(classes - 1);

    Dataset out = ds;
    out.noise_meta.kind = NoiseKind::symmetric;
    out.noise_meta.rate = rate;
    out.noise_meta.true_transition_rows.clear();
    for (auto& s : out.samples) {
        std::vector<double> row(classes, off);
        row[s.y_clean] = 1.0 - rate;
        out.noise_meta.true_transition_rows.emplace_back(std::move(row));

        s.y_noisy = s.y_clean;
        if (rng.uniform() < rate) {
            // Uniform over the other |Y|-1 classes.
            std::size_t k = rng.index(classes - 1);
            s.y_noisy = k >= s.y_clean ? k + 1 : k;
        }
    }
    return out;
}

Dataset inject_asymmetric(const Dataset& ds, double rate, std::uint64_t seed)
{
    check_rate(rate);
    Rng rng(mix_seed(seed, kAsymmetricStream));
    const std::size_t classes = ds.num_classes;

    Dataset out = ds;
    out.noise_meta.kind = NoiseKind::asymmetric;
    out.noise_meta.rate = rate;
    out.noise_meta.true_transition_rows.clear();
    for (auto& s : out.samples) {
        const std::size_t target = (s.y_clean + 1) % classes;
        std::vector<double> row(classes, 0.0);
        row[s.y_clean] = 1.0 - rate;
        row[target] += rate;
        out.noise_meta.true_transition_rows.emplace_back(std::move(row));

        s.y_noisy = rng.uniform() < rate ? target : s.y_clean;
    }
    return out;
}

Dataset inject_idn(const Dataset& ds, double rate, std::uint64_t seed)
{
    check_rate(rate);
    Rng rng(mix_seed(seed, kIdnStream));
    const std::size_t classes = ds.num_classes;
    const std::size_t dim = ds.feature_dim;

    // projection[c] is a dim x classes matrix, row-major.
    std::vector<std::vector<double>> projection(classes, std::vector<double>(dim * classes));
    for (auto& w : projection) {
        for (double& v : w) {
            v = rng.normal();
        }
    }

    Dataset out = ds;
    out.noise_meta.kind = NoiseKind::idn;
    out.noise_meta.rate = rate;
    out.noise_meta.true_transition_rows.clear();

    std::vector<double> logits(classes);
    for (auto& s : out.samples) {
        double q = 0.0;
        if (rate > 0.0) {
            // Truncated normal on [0, 1] by rejection.
            do {
                q = rng.normal(rate, kIdnStddev);
            } while (q < 0.0 || q > 1.0);
        }
        q = std::clamp(q, 0.0, 1.0);

        const auto& w = projection[s.y_clean];
        for (std::size_t c = 0; c < classes; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                acc += s.x[k] * w[k * classes + c];
            }
            logits[c] = acc;
        }
        logits[s.y_clean] = -std::numeric_limits<double>::infinity();

        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes; ++c) {
            peak = std::max(peak, logits[c]);
        }
        std::vector<double> row(classes, 0.0);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            if (c != s.y_clean) {
                row[c] = std::exp(logits[c] - peak);
                total += row[c];
            }
        }
        for (std::size_t c = 0; c < classes; ++c) {
            row[c] = c == s.y_clean ? 1.0 - q : q * row[c] / total;
        }

        s.y_noisy = rng.categorical(row);
        out.noise_meta.true_transition_rows.emplace_back(std::move(row));
    }
    return out;
}

Dataset inject_noise(const Dataset& ds, NoiseKind kind, double rate, std::uint64_t seed)
{
    switch (kind) {
    case NoiseKind::none:
        if (rate != 0.0) {
            throw std::invalid_argument("noise kind 'none' requires rate 0");
        }
        return ds;
    case NoiseKind::symmetric: return inject_symmetric(ds, rate, seed);
    case NoiseKind::asymmetric: return inject_asymmetric(ds, rate, seed);
    case NoiseKind::idn: return inject_idn(ds, rate, seed);
    }
    return ds;
}

std::filesystem::path transition_path(const std::filesystem::path& path)
{
    auto p = path;
    p.replace_extension(".transition.csv");
    return p;
}

std::filesystem::path meta_path(const std::filesystem::path& path)
{
    auto p = path;
    p.replace_extension(".meta");
    return p;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path)
{
    ds.validate();
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw DataError("cannot write " + path.string());
        }
        out << "id,y_clean,y_noisy";
        for (std::size_t k = 0; k < ds.feature_dim; ++k) {
            out << ",x" << k;
        }
        out << '\n';
        for (const auto& s : ds.samples) {
            out << s.id << ',' << s.y_clean << ',' << s.y_noisy;
            for (double v : s.x) {
                out << ',' << format_double(v);
            }
            out << '\n';
        }
        if (!out) {
            throw DataError("write failed for " + path.string());
        }
    }
    {
        const auto tpath = transition_path(path);
        std::ofstream out(tpath, std::ios::binary);
        if (!out) {
            throw DataError("cannot write " + tpath.string());
        }
        out << "id";
        for (std::size_t c = 0; c < ds.num_classes; ++c) {
            out << ",t" << c;
        }
        out << '\n';
        for (std::size_t i = 0; i < ds.size(); ++i) {
            out << i;
            for (double v : ds.noise_meta.true_transition_rows[i].probs()) {
                out << ',' << format_double(v);
            }
            out << '\n';
        }
    }
    {
        const auto mpath = meta_path(path);
        std::ofstream out(mpath, std::ios::binary);
        if (!out) {
            throw DataError("cannot write " + mpath.string());
        }
        out << "num_classes = " << ds.num_classes << '\n'
            << "feature_dim = " << ds.feature_dim << '\n'
            << "noise = " << to_string(ds.noise_meta.kind) << '\n'
            << "rate = " << format_double(ds.noise_meta.rate) << '\n';
    }
}

namespace {

struct MetaInfo {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    NoiseKind kind = NoiseKind::none;
    double rate = 0.0;
};

MetaInfo read_meta(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    MetaInfo meta;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail_at(path, lineno, "expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "num_classes") {
            meta.num_classes = parse_index(value, path, lineno);
        } else if (key == "feature_dim") {
            meta.feature_dim = parse_index(value, path, lineno);
        } else if (key == "noise") {
            try {
                meta.kind = parse_noise_kind(value);
            } catch (const std::invalid_argument& e) {
                fail_at(path, lineno, e.what());
            }
        } else if (key == "rate") {
            meta.rate = parse_double(value, path, lineno);
        } else {
            fail_at(path, lineno, "unknown key '" + key + "'");
        }
    }
    if (meta.num_classes < 2 || meta.feature_dim < 1) {
        throw DataError(path.string() + ": num_classes and feature_dim are required");
    }
    return meta;
}

} // namespace

Dataset load_csv(const std::filesystem::path& path)
{
    const MetaInfo meta = read_meta(meta_path(path));

    Dataset ds;
    ds.num_classes = meta.num_classes;
    ds.feature_dim = meta.feature_dim;
    ds.noise_meta.kind = meta.kind;
    ds.noise_meta.rate = meta.rate;

    {
        std::ifstream in(path);
        if (!in) {
            throw DataError("cannot read " + path.string());
        }
        std::string line;
        std::size_t lineno = 1;
        if (!std::getline(in, line)) {
            fail_at(path, lineno, "missing header");
        }
        if (split_csv(line).size() != 3 + ds.feature_dim) {
            fail_at(path, lineno, "header does not match feature_dim " + std::to_string(ds.feature_dim));
        }
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) {
                continue;
            }
            const auto fields = split_csv(line);
            if (fields.size() != 3 + ds.feature_dim) {
                fail_at(path, lineno,
                        "expected " + std::to_string(3 + ds.feature_dim) + " fields, got " +
                            std::to_string(fields.size()));
            }
            Sample s;
            s.id = parse_index(fields[0], path, lineno);
            s.y_clean = parse_index(fields[1], path, lineno);
            s.y_noisy = parse_index(fields[2], path, lineno);
            if (s.id != ds.samples.size()) {
                fail_at(path, lineno, "ids must run 0..N-1 without gaps");
            }
            if (s.y_clean >= ds.num_classes || s.y_noisy >= ds.num_classes) {
                fail_at(path, lineno, "label out of range for " + std::to_string(ds.num_classes) + " classes");
            }
            s.x.reserve(ds.feature_dim);
            for (std::size_t k = 0; k < ds.feature_dim; ++k) {
                s.x.push_back(parse_double(fields[3 + k], path, lineno));
            }
            ds.samples.push_back(std::move(s));
        }
    }

    const auto tpath = transition_path(path);
    std::ifstream in(tpath);
    if (!in) {
        throw DataError("cannot read " + tpath.string());
    }
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || split_csv(line).size() != 1 + ds.num_classes) {
        fail_at(tpath, lineno, "header does not match num_classes " + std::to_string(ds.num_classes));
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto fields = split_csv(line);
        if (fields.size() != 1 + ds.num_classes) {
            fail_at(tpath, lineno, "wrong number of fields");
        }
        if (parse_index(fields[0], tpath, lineno) != ds.noise_meta.true_transition_rows.size()) {
            fail_at(tpath, lineno, "ids must run 0..N-1 without gaps");
        }
        std::vector<double> row;
        for (std::size_t c = 0; c < ds.num_classes; ++c) {
            row.push_back(parse_double(fields[1 + c], tpath, lineno));
        }
        LabelDist dist(std::move(row));
        if (!dist.is_valid(1e-9)) {
            fail_at(tpath, lineno, "transition row does not sum to 1");
        }
        ds.noise_meta.true_transition_rows.push_back(std::move(dist));
    }

    ds.validate();
    return ds;
}

} // namespace plslab
