#include "plslab/pls.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace plslab {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr int kMixtureMaxIterations = 10;
constexpr double kMixtureTolerance = 1e-4;
// Variance floor in standardised units; keeps perfectly separated clusters finite.
constexpr double kMixtureVarianceFloor = 1e-4;

double log_normal_pdf(double x, double mean, double variance)
{
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

double log_sum_exp(double a, double b)
{
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) {
        return m;
    }
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// E-step on standardised data: fills responsibilities of component 1, returns the log-likelihood.
double expectation(std::span<const double> z, const double means[2], const double variances[2],
                   const double mixing[2], std::vector<double>& resp)
{
    double ll = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double a = std::log(mixing[0]) + log_normal_pdf(z[i], means[0], variances[0]);
        const double b = std::log(mixing[1]) + log_normal_pdf(z[i], means[1], variances[1]);
        const double total = log_sum_exp(a, b);
        resp[i] = std::exp(b - total);
        ll += total;
    }
    return ll;
}

void maximisation(std::span<const double> z, std::span<const double> resp, double means[2], double variances[2],
                  double mixing[2])
{
    double weight[2] = {0.0, 0.0};
    double sum[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < z.size(); ++i) {
        weight[0] += 1.0 - resp[i];
        weight[1] += resp[i];
        sum[0] += (1.0 - resp[i]) * z[i];
        sum[1] += resp[i] * z[i];
    }
    const double n = static_cast<double>(z.size());
    for (int k = 0; k < 2; ++k) {
        if (weight[k] <= 0.0) {
            // Empty component: keep its mean, reset to the floor.
            mixing[k] = std::numeric_limits<double>::min();
            variances[k] = kMixtureVarianceFloor;
            continue;
        }
        means[k] = sum[k] / weight[k];
        double sq = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double r = k == 0 ? 1.0 - resp[i] : resp[i];
            const double d = z[i] - means[k];
            sq += r * d * d;
        }
        variances[k] = std::max(sq / weight[k], kMixtureVarianceFloor);
        mixing[k] = weight[k] / n;
    }
}

} // namespace

LabelDist update_moving_average(const LabelDist& previous, const LabelDist& ybar, double beta)
{
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::invalid_argument("update_moving_average: beta must lie in [0, 1]");
    }
    require_valid(previous, "update_moving_average: previous average");
    require_valid(ybar, "update_moving_average: posterior");
    if (previous.size() != ybar.size()) {
        throw std::invalid_argument("update_moving_average: size mismatch");
    }
    std::vector<double> out(previous.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = beta * previous[k] + (1.0 - beta) * ybar[k];
    }
    return LabelDist(std::move(out));
}

std::vector<double> sample_coverage(const LabelDist& moving_average, Rng& rng, CoverageMode mode)
{
    require_valid(moving_average, "sample_coverage");
    const std::size_t k = mode == CoverageMode::argmax ? moving_average.argmax() : rng.categorical(moving_average.probs());
    std::vector<double> c(moving_average.size(), 0.0);
    c[k] = 1.0;
    return c;
}

double per_sample_loss(const LabelDist& ybar, std::size_t y_noisy)
{
    if (y_noisy >= ybar.size()) {
        throw std::out_of_range("per_sample_loss: label out of range");
    }
    return -std::log(std::max(ybar[y_noisy], kLogFloor));
}

double mixture_log_likelihood(std::span<const double> values, const double means[2], const double variances[2],
                              const double mixing[2])
{
    double ll = 0.0;
    for (double x : values) {
        const double a = std::log(mixing[0]) + log_normal_pdf(x, means[0], variances[0]);
        const double b = std::log(mixing[1]) + log_normal_pdf(x, means[1], variances[1]);
        ll += log_sum_exp(a, b);
    }
    return ll;
}

MixtureFit fit_loss_mixture(std::span<const double> losses)
{
    if (losses.size() < 2) {
        throw std::invalid_argument("fit_loss_mixture: need at least two losses");
    }
    const double n = static_cast<double>(losses.size());
    const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
    double var = 0.0;
    for (double l : losses) {
        var += (l - mean) * (l - mean);
    }
    var /= n;
    const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());

    MixtureFit fit;
    if (!(var > 0.0) || *hi - *lo <= 1e-12 * std::max(1.0, std::abs(mean))) {
        fit.degenerate = true;
        fit.means[0] = fit.means[1] = mean;
        fit.variances[0] = fit.variances[1] = 1.0;
        fit.responsibilities.assign(losses.size(), 0.5);
        fit.log_likelihood = mixture_log_likelihood(losses, fit.means, fit.variances, fit.mixing);
        return fit;
    }

    // EM runs on standardised losses, which makes the fit (including the
    // stopping rule) equivariant under positive affine rescaling.
    const double sd = std::sqrt(var);
    std::vector<double> z(losses.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = (losses[i] - mean) / sd;
    }
    double means[2] = {(*lo - mean) / sd, (*hi - mean) / sd};
    double variances[2] = {1.0, 1.0};
    double mixing[2] = {0.5, 0.5};

    std::vector<double> resp(z.size());
    double ll = expectation(z, means, variances, mixing, resp);
    int iterations = 0;
    while (iterations < kMixtureMaxIterations) {
        maximisation(z, resp, means, variances, mixing);
        ++iterations;
        const double next = expectation(z, means, variances, mixing, resp);
        const bool converged = std::abs(next - ll) <= kMixtureTolerance * std::abs(ll);
        ll = next;
        if (converged) {
            break;
        }
    }

    if (means[0] > means[1]) {
        std::swap(means[0], means[1]);
        std::swap(variances[0], variances[1]);
        std::swap(mixing[0], mixing[1]);
        for (double& r : resp) {
            r = 1.0 - r;
        }
    }

    for (int k = 0; k < 2; ++k) {
        fit.means[k] = mean + sd * means[k];
        fit.variances[k] = var * variances[k];
        fit.mixing[k] = mixing[k];
    }
    fit.responsibilities = std::move(resp);
    fit.log_likelihood = ll - n * std::log(sd);
    fit.iterations = iterations;
    return fit;
}

std::size_t uncertainty_count(double w, std::size_t num_classes, RoundingMode rounding)
{
    if (!(w >= 0.0 && w <= 1.0)) {
        throw std::invalid_argument("uncertainty_count: w must lie in [0, 1]");
    }
    const double scaled = static_cast<double>(num_classes) * w;
    // 1e-9 absorbs float dust such as 10 * 0.3 = 3.0000000000000004.
    const double k = rounding == RoundingMode::ceiling ? std::ceil(scaled - 1e-9) : std::floor(scaled + 0.5 + 1e-9);
    return std::min(num_classes, static_cast<std::size_t>(std::max(0.0, k)));
}

std::vector<int> sample_uncertainty(double w, std::size_t num_classes, Rng& rng, RoundingMode rounding)
{
    const std::size_t k = uncertainty_count(w, num_classes, rounding);
    std::vector<int> counts(num_classes, 0);
    if (k == 0) {
        return counts;
    }
    std::vector<std::size_t> classes(num_classes);
    std::iota(classes.begin(), classes.end(), std::size_t{0});
    // Partial Fisher-Yates: the first k slots are a uniform draw without replacement.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.index(num_classes - i);
        std::swap(classes[i], classes[j]);
        counts[classes[i]] = 1;
    }
    return counts;
}

LabelDist build_prior(std::size_t y_noisy, std::span<const double> c_onehot, std::span<const int> u_counts)
{
    const std::size_t classes = c_onehot.size();
    if (u_counts.size() != classes || y_noisy >= classes) {
        throw std::invalid_argument("build_prior: inputs must all have |Y| entries");
    }
    std::vector<double> mass(classes, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
        mass[k] = (k == y_noisy ? 1.0 : 0.0) + c_onehot[k] + static_cast<double>(u_counts[k]);
        total += mass[k];
    }
    for (double& m : mass) {
        m /= total;
    }
    return LabelDist(std::move(mass));
}

CoverageUncertainty coverage_uncertainty(std::span<const LabelDist> priors, std::span<const std::size_t> clean_labels)
{
    if (priors.empty()) {
        throw std::invalid_argument("coverage_uncertainty: no priors");
    }
    if (priors.size() != clean_labels.size()) {
        throw std::invalid_argument("coverage_uncertainty: one clean label per prior required");
    }
    std::size_t covered = 0;
    std::size_t support = 0;
    for (std::size_t i = 0; i < priors.size(); ++i) {
        covered += priors[i][clean_labels[i]] > 1e-8 ? 1 : 0;
        support += priors[i].support_size();
    }
    const double n = static_cast<double>(priors.size());
    return {static_cast<double>(covered) / n, static_cast<double>(support) / n};
}

std::vector<PriorState> initial_prior_states(std::span<const std::size_t> noisy_labels, std::size_t num_classes)
{
    std::vector<PriorState> states(noisy_labels.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        auto& s = states[i];
        s.moving_average = LabelDist::uniform(num_classes);
        s.c_onehot.assign(num_classes, 0.0);
        s.c_onehot[noisy_labels[i]] = 1.0;
        s.u_counts.assign(num_classes, 0);
        s.prior = LabelDist::one_hot(num_classes, noisy_labels[i]);
    }
    return states;
}

void refresh_priors(std::vector<PriorState>& states, std::span<const LabelDist> posteriors,
                    std::span<const std::size_t> noisy_labels, const PriorOptions& options, Rng& rng)
{
    if (states.size() != posteriors.size() || states.size() != noisy_labels.size()) {
        throw std::invalid_argument("refresh_priors: size mismatch");
    }
    const std::size_t n = states.size();

    std::vector<double> losses(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = states[i];
        s.moving_average = update_moving_average(s.moving_average, posteriors[i], options.beta);
        s.ell = per_sample_loss(posteriors[i], noisy_labels[i]);
        losses[i] = s.ell;
    }

    std::vector<double> w(n, 0.5);
    if (!options.uniform_w && n >= 2) {
        w = fit_loss_mixture(losses).responsibilities;
    }

    for (std::size_t i = 0; i < n; ++i) {
        auto& s = states[i];
        const std::size_t classes = s.moving_average.size();
        // Draws happen even for disabled terms so ablations share one random stream.
        auto c = sample_coverage(s.moving_average, rng, options.coverage_mode);
        auto u = sample_uncertainty(w[i], classes, rng, options.rounding);
        s.c_onehot = options.use_coverage ? std::move(c) : std::vector<double>(classes, 0.0);
        s.u_counts = options.use_uncertainty ? std::move(u) : std::vector<int>(classes, 0);
        s.w = w[i];
        s.prior = build_prior(noisy_labels[i], s.c_onehot, s.u_counts);
    }
}

void export_priors_csv(std::span<const PriorState> states, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    const std::size_t classes = states.empty() ? 0 : states.front().prior.size();
    out << "id,w,ell";
    for (std::size_t k = 0; k < classes; ++k) {
        out << ",prior" << k;
    }
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < states.size(); ++i) {
        out << i;
        std::snprintf(buf, sizeof(buf), ",%.6f", states[i].w);
        out << buf;
        std::snprintf(buf, sizeof(buf), ",%.6f", states[i].ell);
        out << buf;
        for (double p : states[i].prior.probs()) {
            std::snprintf(buf, sizeof(buf), ",%.6f", p);
            out << buf;
        }
        out << '\n';
    }
}

} // namespace plslab
