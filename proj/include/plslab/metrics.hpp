#pragma once

#include "plslab/dataset.hpp"
#include "plslab/label_dist.hpp"
#include "plslab/nn.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace plslab {

struct MetricsRecord {
    std::size_t epoch = 0;
    double test_acc = 0.0;
    double coverage = 0.0;
    double unc_clean = 0.0;
    double unc_noisy = 0.0;
    double transition_mse = 0.0;
    double loss_ce = 0.0;
    double loss_pri = 0.0;
    double loss_kl = 0.0;
};

// Fraction of samples whose argmax g(x) (lowest index on ties) equals the clean label.
double test_accuracy(const ModelParams& params, const Dataset& test);

// Mean over samples of the mean squared difference between f(x_i, e_{y_clean})
// and the stored ground-truth transition row.
double transition_mse(const ModelParams& params, const Dataset& ds);

struct SplitUncertainty {
    // Mean support size over samples whose noisy label is correct / wrong.
    // A split with no samples reports 0 and its flag is false.
    double clean = 0.0;
    double noisy = 0.0;
    bool has_clean = false;
    bool has_noisy = false;
};

SplitUncertainty split_uncertainty(std::span<const LabelDist> priors, const Dataset& ds);

void export_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path);
std::vector<MetricsRecord> import_csv(const std::filesystem::path& path);

} // namespace plslab
