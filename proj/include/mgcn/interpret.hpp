#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgcn/tensor.hpp"
#include "mgcn/train.hpp"

namespace mgcn {

// Per-modality ROI attribution of a trained graph model.
struct GradRamMap {
    std::vector<std::string> modalities;
    std::vector<std::vector<double>> raw;            // [m][q], >= 0
    std::vector<std::vector<double>> zscore;         // [m][q]
    std::vector<std::vector<std::size_t>> top;       // [m], largest first
    std::vector<std::string> warnings;
};

// a_q = relu(sum_{n,c} G_{n,qc} Z_{n,qc}) / (N C), G = d(yhat_n)/dZ_n, over
// `subjects` (all subjects when empty). The top set holds the
// ceil(top_fraction * Q) highest-scoring ROIs; ties go to the lower index.
GradRamMap grad_ram(const TrainResult& model, const GraphCohort& cohort, std::span<const std::size_t> subjects,
                    double top_fraction = 0.05);

// Indices of the k largest values, ties broken by index.
std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k);
std::vector<double> zscore(std::span<const double> values);

// 1 where m > 1e-12, else 0.
Tensor binarize(const Tensor& mask);
// Fraction of nonzero strict-upper-triangle entries.
double mask_sparsity(const Tensor& binary);
// Entries (i, j), i != j, with a nonzero propagation weight in at least one
// subject and modality. Mask entries outside it never touch the model.
Tensor graph_support(const GraphCohort& cohort);

struct MaskRun {
    Tensor v;
    Tensor mask;    // relu(V + V^T)
    Tensor binary;  // binarize(mask) restricted to the graph support (plus diagonal)
    double sparsity = 0.0;
    std::size_t epochs_run = 0;
    bool converged = false;
    double final_loss = 0.0;
};

// One mask-learning run on every subject with loss + beta ||M||_1, trained
// until the loss settles (or max_epochs).
MaskRun train_edge_mask(const GraphCohort& cohort, const TrainConfig& config, double beta, std::uint64_t init_seed);

struct Consensus {
    Tensor frequency;  // share of runs selecting each entry
    Tensor mask;       // frequency >= threshold
};

Consensus consensus_mask(std::span<const Tensor> runs, double threshold);

struct EdgeMaskResult {
    double beta = 0.0;
    std::vector<MaskRun> runs;
    Consensus consensus;
    double sparsity = 0.0;  // of the consensus mask
};

// `runs` independent runs per beta (init seeds derived from `seed`, shared
// across betas), executed concurrently.
std::vector<EdgeMaskResult> mask_sweep(const GraphCohort& cohort, const TrainConfig& config,
                                       std::span<const double> betas, std::size_t runs, double threshold,
                                       std::uint64_t seed, std::size_t threads);

struct AllegianceMatrix {
    std::vector<std::string> networks;  // in order of first appearance over ROIs
    Tensor counts;                      // F x F, symmetric
};

// Counts selected strict-upper-triangle edges by the networks of their ends.
AllegianceMatrix module_allegiance(const Tensor& binary, std::span<const std::string> fn_labels);

} // namespace mgcn
