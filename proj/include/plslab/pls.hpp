#pragma once

#include "plslab/label_dist.hpp"
#include "plslab/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace plslab {

// Partial label supervision: per-sample prior over the clean label built from
// the noisy label, a coverage candidate and a set of uncertainty candidates.

enum class CoverageMode { sample, argmax };
enum class RoundingMode { half_up, ceiling };

struct PriorState {
    LabelDist moving_average;         // C_i
    std::vector<double> c_onehot;     // coverage candidate
    std::vector<int> u_counts;        // uncertainty candidates, 0/1 per class
    double w = 0.0;                   // probability the noisy label is wrong
    double ell = 0.0;                 // cross-entropy of the posterior against the noisy label
    LabelDist prior;
};

struct MixtureFit {
    double means[2] = {0.0, 0.0};
    double variances[2] = {1.0, 1.0};
    double mixing[2] = {0.5, 0.5};
    // Posterior of the higher-mean component for each input.
    std::vector<double> responsibilities;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool degenerate = false;
};

LabelDist update_moving_average(const LabelDist& previous, const LabelDist& ybar, double beta);

std::vector<double> sample_coverage(const LabelDist& moving_average, Rng& rng,
                                    CoverageMode mode = CoverageMode::sample);

// -log(ybar[y_noisy]) with the probability floored at 1e-12.
double per_sample_loss(const LabelDist& ybar, std::size_t y_noisy);

// Two-component 1-D Gaussian mixture fitted by EM: at most 10 iterations,
// stopping early when the relative log-likelihood change drops below 1e-4.
// All-equal inputs give responsibilities of 0.5.
MixtureFit fit_loss_mixture(std::span<const double> losses);

// Mixture log-likelihood of `values` under the given parameters.
double mixture_log_likelihood(std::span<const double> values, const double means[2], const double variances[2],
                              const double mixing[2]);

std::size_t uncertainty_count(double w, std::size_t num_classes, RoundingMode rounding = RoundingMode::half_up);

// Multi-hot over round(|Y| * w) distinct classes drawn without replacement.
std::vector<int> sample_uncertainty(double w, std::size_t num_classes, Rng& rng,
                                    RoundingMode rounding = RoundingMode::half_up);

// (noisy one-hot + c + u) / Z.
LabelDist build_prior(std::size_t y_noisy, std::span<const double> c_onehot, std::span<const int> u_counts);

struct CoverageUncertainty {
    double coverage = 0.0;
    double uncertainty = 0.0;
};

// Fraction of priors with mass on the clean class and mean support size.
CoverageUncertainty coverage_uncertainty(std::span<const LabelDist> priors, std::span<const std::size_t> clean_labels);

struct PriorOptions {
    double beta = 0.9;
    CoverageMode coverage_mode = CoverageMode::sample;
    RoundingMode rounding = RoundingMode::half_up;
    bool use_coverage = true;
    bool use_uncertainty = true;
    bool uniform_w = false;
};

// Refreshes every sample's prior from the current posteriors: moving average,
// coverage draw, loss mixture, uncertainty draw and the combined prior.
void refresh_priors(std::vector<PriorState>& states, std::span<const LabelDist> posteriors,
                    std::span<const std::size_t> noisy_labels, const PriorOptions& options, Rng& rng);

std::vector<PriorState> initial_prior_states(std::span<const std::size_t> noisy_labels, std::size_t num_classes);

// id,w,ell,prior0..prior{|Y|-1}
void export_priors_csv(std::span<const PriorState> states, const std::filesystem::path& path);

} // namespace plslab
