#pragma once

#include "plslab/config.hpp"
#include "plslab/dataset.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace plslab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

struct DataPair {
    Dataset train;
    std::optional<Dataset> test;
};

// Loads the configured CSVs, or synthesises blobs when no training file is set.
// The synthetic test set is noise-free and drawn with seed + 1000.
DataPair prepare_data(const RunConfig& cfg);

// File stem identifying one training run, e.g. "full-x_given_y-seed1".
std::string run_tag(const TrainConfig& cfg);

// Entry point for the plslab tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace plslab
