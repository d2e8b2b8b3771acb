#pragma once

#include "plslab/label_dist.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace plslab {

struct Sample {
    std::size_t id = 0;
    std::vector<double> x;
    std::size_t y_noisy = 0;
    // Hidden from training; only evaluation reads it.
    std::size_t y_clean = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

enum class NoiseKind { none, symmetric, asymmetric, idn };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

struct NoiseMeta {
    NoiseKind kind = NoiseKind::none;
    double rate = 0.0;
    // Ground-truth p(noisy | clean, x) for each sample's clean class, indexed by sample id.
    std::vector<LabelDist> true_transition_rows;

    friend bool operator==(const NoiseMeta&, const NoiseMeta&) = default;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    NoiseMeta noise_meta;

    std::size_t size() const { return samples.size(); }

    // Fraction of samples whose noisy label differs from the clean one.
    double flip_rate() const;

    // Throws DataError if any structural invariant is broken.
    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Balanced isotropic Gaussian blobs. Class c is centred at separation * u_c,
// where u_c is the unit vector at angle 2*pi*c/num_classes in the first two
// coordinates (for dim == 1 the centre is separation * c).
Dataset gen_gaussian_blobs(std::size_t n, std::size_t num_classes, std::size_t dim, double separation,
                           std::uint64_t seed);

// Each sample flips with probability `rate` to a uniformly chosen other class.
Dataset inject_symmetric(const Dataset& ds, double rate, std::uint64_t seed);

// Class c flips with probability `rate` to (c + 1) mod |Y|.
Dataset inject_asymmetric(const Dataset& ds, double rate, std::uint64_t seed);

// Instance-dependent noise: per-sample flip probability from a truncated
// Normal(rate, 0.1^2), distributed over the other classes by a softmax of a
// per-clean-class random projection of x.
Dataset inject_idn(const Dataset& ds, double rate, std::uint64_t seed);

Dataset inject_noise(const Dataset& ds, NoiseKind kind, double rate, std::uint64_t seed);

// Companion file paths for a dataset stored at `path`.
std::filesystem::path transition_path(const std::filesystem::path& path);
std::filesystem::path meta_path(const std::filesystem::path& path);

// Writes `path` (id,y_clean,y_noisy,x0..), the transition-row file
// (id,t0..) and a small key = value metadata file alongside.
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

} // namespace plslab
