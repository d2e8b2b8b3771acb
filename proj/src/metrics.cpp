#include "plslab/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace plslab {

namespace {

constexpr const char* kMetricsHeader =
    "epoch,test_acc,coverage,unc_clean,unc_noisy,transition_mse,loss_ce,loss_pri,loss_kl";

} // namespace

double test_accuracy(const ModelParams& params, const Dataset& test)
{
    if (test.samples.empty()) {
        throw std::invalid_argument("test_accuracy: empty test set");
    }
    std::size_t correct = 0;
    for (const auto& s : test.samples) {
        correct += forward_classifier(params, s.x).probs.argmax() == s.y_clean ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double transition_mse(const ModelParams& params, const Dataset& ds)
{
    if (ds.samples.empty()) {
        throw std::invalid_argument("transition_mse: empty dataset");
    }
    if (ds.noise_meta.true_transition_rows.size() != ds.size()) {
        throw std::invalid_argument("transition_mse: dataset carries no transition rows");
    }
    double total = 0.0;
    for (const auto& s : ds.samples) {
        const auto predicted = forward_transition(params, s.x, LabelDist::one_hot(ds.num_classes, s.y_clean)).probs;
        const auto& truth = ds.noise_meta.true_transition_rows[s.id];
        double sq = 0.0;
        for (std::size_t k = 0; k < ds.num_classes; ++k) {
            const double d = predicted[k] - truth[k];
            sq += d * d;
        }
        total += sq / static_cast<double>(ds.num_classes);
    }
    return total / static_cast<double>(ds.size());
}

SplitUncertainty split_uncertainty(std::span<const LabelDist> priors, const Dataset& ds)
{
    if (priors.size() != ds.size()) {
        throw std::invalid_argument("split_uncertainty: one prior per sample required");
    }
    double sum[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (std::size_t i = 0; i < priors.size(); ++i) {
        const int noisy = ds.samples[i].y_noisy != ds.samples[i].y_clean ? 1 : 0;
        sum[noisy] += static_cast<double>(priors[i].support_size());
        ++count[noisy];
    }
    SplitUncertainty out;
    out.has_clean = count[0] > 0;
    out.has_noisy = count[1] > 0;
    out.clean = out.has_clean ? sum[0] / static_cast<double>(count[0]) : 0.0;
    out.noisy = out.has_noisy ? sum[1] / static_cast<double>(count[1]) : 0.0;
    return out;
}

void export_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << kMetricsHeader << '\n';
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.test_acc,
                      r.coverage, r.unc_clean, r.unc_noisy, r.transition_mse, r.loss_ce, r.loss_pri, r.loss_kl);
        out << buf;
    }
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

std::vector<MetricsRecord> import_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw std::runtime_error(path.string() + ": unexpected metrics header");
    }
    std::vector<MetricsRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        MetricsRecord r;
        char tail = 0;
        const int n = std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf%c", &r.epoch, &r.test_acc,
                                  &r.coverage, &r.unc_clean, &r.unc_noisy, &r.transition_mse, &r.loss_ce,
                                  &r.loss_pri, &r.loss_kl, &tail);
        if (n != 9) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed metrics row");
        }
        records.push_back(r);
    }
    return records;
}

} // namespace plslab
