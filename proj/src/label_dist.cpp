#include "plslab/label_dist.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plslab {

LabelDist LabelDist::uniform(std::size_t num_classes)
{
    if (num_classes == 0) {
        throw std::invalid_argument("LabelDist::uniform: zero classes");
    }
    return LabelDist(std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
}

LabelDist LabelDist::one_hot(std::size_t num_classes, std::size_t index)
{
    if (index >= num_classes) {
        throw std::out_of_range("LabelDist::one_hot: index out of range");
    }
    std::vector<double> probs(num_classes, 0.0);
    probs[index] = 1.0;
    return LabelDist(std::move(probs));
}

std::size_t LabelDist::argmax() const
{
    if (probs_.empty()) {
        throw std::logic_error("LabelDist::argmax: empty distribution");
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < probs_.size(); ++k) {
        if (probs_[k] > probs_[best]) {
            best = k;
        }
    }
    return best;
}

bool LabelDist::is_valid(double tol) const
{
    if (probs_.empty()) {
        return false;
    }
    double total = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0) {
            return false;
        }
        total += p;
    }
    return std::abs(total - 1.0) <= tol;
}

std::size_t LabelDist::support_size(double threshold) const
{
    return static_cast<std::size_t>(
        std::count_if(probs_.begin(), probs_.end(), [threshold](double p) { return p > threshold; }));
}

void require_valid(const LabelDist& dist, const std::string& what, double tol)
{
    if (!dist.is_valid(tol)) {
        throw std::invalid_argument(what + ": not a valid label distribution");
    }
}

LabelDist softmax(std::span<const double> logits)
{
    if (logits.empty()) {
        throw std::invalid_argument("softmax: empty logits");
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        probs[k] = std::exp(logits[k] - peak);
        total += probs[k];
    }
    for (double& p : probs) {
        p /= total;
    }
    return LabelDist(std::move(probs));
}

} // namespace plslab
