#pragma once

// Independent reference computations used only by the tests.

#include "plslab/dataset.hpp"
#include "plslab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace plslab::oracle {

// Central finite differences of `loss` over every parameter, in
// for_each_parameter order.
inline std::vector<double> finite_difference(ModelParams params, const std::function<double(const ModelParams&)>& loss,
                                             double h = 1e-5)
{
    std::vector<double*> slots;
    Gradients dummy = zeros_like(params);
    for_each_parameter(params, dummy, [&](double& p, double) { slots.push_back(&p); });
    std::vector<double> grad(slots.size());
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const double saved = *slots[k];
        *slots[k] = saved + h;
        const double up = loss(params);
        *slots[k] = saved - h;
        const double down = loss(params);
        *slots[k] = saved;
        grad[k] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline std::vector<double> flatten(const Gradients& grads)
{
    std::vector<double> out;
    ModelParams copy = grads;
    for_each_parameter(copy, grads, [&](double&, double g) { out.push_back(g); });
    return out;
}

// |a - b| / max(|a|, |b|, floor): relative error with an absolute floor for
// entries whose true value is (numerically) zero.
inline double relative_error(double a, double b, double floor = 1e-6)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6)
{
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        worst = std::max(worst, relative_error(a[k], b[k], floor));
    }
    return worst;
}

// Mean-free mixture log-likelihood with equal mixing and a shared variance.
inline double shared_variance_ll(std::span<const double> x, double m1, double m2, double var)
{
    double ll = 0.0;
    const double norm = -0.5 * std::log(2.0 * std::numbers::pi * var) + std::log(0.5);
    for (double v : x) {
        const double a = norm - (v - m1) * (v - m1) / (2.0 * var);
        const double b = norm - (v - m2) * (v - m2) / (2.0 * var);
        const double m = std::max(a, b);
        ll += m + std::log(std::exp(a - m) + std::exp(b - m));
    }
    return ll;
}

// Brute force over a grid of mean pairs spanning the data range, with a
// golden-section line search over log-variance for each pair.
inline double grid_search_mixture_ll(std::span<const double> x, int grid = 100)
{
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const double range = hi - lo;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < grid; ++a) {
        const double m1 = lo + range * a / (grid - 1);
        for (int b = a; b < grid; ++b) {
            const double m2 = lo + range * b / (grid - 1);
            double left = std::log(range * range * 1e-6);
            double right = std::log(range * range);
            const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
            double c = right - phi * (right - left);
            double d = left + phi * (right - left);
            double fc = shared_variance_ll(x, m1, m2, std::exp(c));
            double fd = shared_variance_ll(x, m1, m2, std::exp(d));
            for (int it = 0; it < 40; ++it) {
                if (fc > fd) {
                    right = d;
                    d = c;
                    fd = fc;
                    c = right - phi * (right - left);
                    fc = shared_variance_ll(x, m1, m2, std::exp(c));
                } else {
                    left = c;
                    c = d;
                    fc = fd;
                    d = left + phi * (right - left);
                    fd = shared_variance_ll(x, m1, m2, std::exp(d));
                }
            }
            best = std::max({best, fc, fd});
        }
    }
    return best;
}

// Multinomial logistic regression by full-batch gradient descent; returns
// training accuracy on the clean labels.
inline double softmax_regression_accuracy(const Dataset& ds, int iterations = 500, double lr = 0.1)
{
    const std::size_t d = ds.feature_dim;
    const std::size_t c = ds.num_classes;
    std::vector<double> w(c * (d + 1), 0.0);
    std::vector<double> grad(w.size());
    std::vector<double> logits(c);
    for (int it = 0; it < iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& s : ds.samples) {
            double peak = -1e300;
            for (std::size_t k = 0; k < c; ++k) {
                double z = w[k * (d + 1) + d];
                for (std::size_t j = 0; j < d; ++j) z += w[k * (d + 1) + j] * s.x[j];
                logits[k] = z;
                peak = std::max(peak, z);
            }
            double total = 0.0;
            for (double& z : logits) total += (z = std::exp(z - peak));
            for (std::size_t k = 0; k < c; ++k) {
                const double err = logits[k] / total - (k == s.y_clean ? 1.0 : 0.0);
                for (std::size_t j = 0; j < d; ++j) grad[k * (d + 1) + j] += err * s.x[j];
                grad[k * (d + 1) + d] += err;
            }
        }
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * grad[k] / static_cast<double>(ds.size());
    }
    std::size_t correct = 0;
    for (const auto& s : ds.samples) {
        std::size_t best = 0;
        double best_z = -1e300;
        for (std::size_t k = 0; k < c; ++k) {
            double z = w[k * (d + 1) + d];
            for (std::size_t j = 0; j < d; ++j) z += w[k * (d + 1) + j] * s.x[j];
            if (z > best_z) {
                best_z = z;
                best = k;
            }
        }
        correct += best == s.y_clean ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

} // namespace plslab::oracle
