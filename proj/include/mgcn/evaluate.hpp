#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mgcn/train.hpp"

namespace mgcn {

struct TTestResult {
    double t = 0.0;  // +-inf under the zero-variance convention
    double p = 1.0;
    std::size_t df = 0;
};

// Two-sided paired Student t-test on a - b. When the differences have zero
// variance, p = 1 if their mean is 0 and p = 0 otherwise.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

struct RepeatResult {
    double rmse = 0.0;
    double mae = 0.0;
    double seconds_per_epoch = 0.0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    bool diverged = false;
    std::string message;
};

struct ModelSummary {
    std::string name;
    std::vector<RepeatResult> repeats;
    double rmse_mean = 0.0, rmse_std = 0.0;
    double mae_mean = 0.0, mae_std = 0.0;
    double seconds_mean = 0.0, seconds_std = 0.0;
    // Against the first (reference) model, over repeats where both converged.
    double p_rmse = 1.0, p_mae = 1.0;
    double t_rmse = 0.0;
    std::size_t diverged = 0;
};

struct EvalReport {
    std::size_t repeats = 0;
    std::uint64_t seed = 0;
    std::vector<ModelSummary> models;
    std::vector<std::string> warnings;

    const ModelSummary& model(const std::string& name) const;
    // One row per (model, repeat).
    std::string to_csv() const;
    // One row per model: means, stds and p-values against the reference.
    std::string summary_csv() const;
    std::string to_json() const;
};

// Bootstrap comparison: every repeat draws a fresh split and init seed from
// the master seed; all models in a repeat share both. Sample std (n - 1);
// with one repeat the std is 0 and a warning is recorded. Repeats run on
// `threads` workers.
EvalReport bootstrap_evaluate(const Dataset& data, const TrainConfig& config, const std::vector<ModelChoice>& models,
                              std::size_t threads = 1);

// Seeds used by repeat r of a bootstrap run.
std::uint64_t repeat_split_seed(std::uint64_t master, std::size_t repeat);
std::uint64_t repeat_init_seed(std::uint64_t master, std::size_t repeat);

// Random search over a declared box. Each dimension is sampled uniformly,
// or log-uniformly when `log` is set; the lowest objective wins.
struct SearchDimension {
    double low = 0.0;
    double high = 1.0;
    bool log = false;
};

struct SearchResult {
    std::map<std::string, double> best;
    double best_score = 0.0;
    std::vector<std::pair<std::map<std::string, double>, double>> trials;
};

SearchResult random_search(const std::map<std::string, SearchDimension>& space, std::size_t trials,
                           std::uint64_t seed, const std::function<double(const std::map<std::string, double>&)>& objective);

} // namespace mgcn
