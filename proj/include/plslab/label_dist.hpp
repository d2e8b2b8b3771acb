#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace plslab {

// A categorical distribution over |Y| classes. Used for network outputs,
// priors, moving averages and transition rows alike.
class LabelDist {
public:
    LabelDist() = default;
    explicit LabelDist(std::vector<double> probs) : probs_(std::move(probs)) {}

    static LabelDist uniform(std::size_t num_classes);
    static LabelDist one_hot(std::size_t num_classes, std::size_t index);

    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t k) const { return probs_[k]; }
    double& operator[](std::size_t k) { return probs_[k]; }

    std::span<const double> probs() const { return probs_; }
    std::vector<double>& mutable_probs() { return probs_; }

    // Lowest index among the maximal entries.
    std::size_t argmax() const;

    // True when every entry is finite and >= 0 and the entries sum to 1 within tol.
    bool is_valid(double tol = 1e-6) const;

    // Number of entries strictly above threshold.
    std::size_t support_size(double threshold = 1e-8) const;

    friend bool operator==(const LabelDist&, const LabelDist&) = default;

private:
    std::vector<double> probs_;
};

// Throws std::invalid_argument naming `what` when dist is not a valid distribution.
void require_valid(const LabelDist& dist, const std::string& what, double tol = 1e-6);

// Numerically stable softmax (max subtraction).
LabelDist softmax(std::span<const double> logits);

} // namespace plslab
