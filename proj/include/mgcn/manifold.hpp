#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mgcn/autodiff.hpp"
#include "mgcn/tensor.hpp"

namespace mgcn {

// Ensemble similarity structure over M modalities and N subjects.
// s is MN x MN, modality-major: block (p, q) is eta2 * S^(p) when p == q
// and eta1 * S^(p) S^(q) otherwise. laplacian = D - s.
//
// Off-diagonal blocks are products of similarity matrices and are not
// rescaled, so their entries can exceed 1 and dwarf the diagonal blocks
// for the same eta; pick eta1 with that in mind.
struct SimilarityBlock {
    std::size_t num_modalities = 0;
    std::size_t num_subjects = 0;
    double eta_between = 0.0;  // eta1
    double eta_within = 0.0;   // eta2
    std::vector<Tensor> per_modality;  // S^(m), N x N
    Tensor s;
    Tensor laplacian;
    std::vector<std::size_t> subjects;  // dataset indices, row order inside each block
};

// |Pearson| between the vectorised connectivity matrices of two subjects.
double subject_similarity(const Tensor& fc_a, const Tensor& fc_b);

// N x N matrix of subject_similarity over `fcs`, unit diagonal.
Tensor similarity_matrix(std::span<const Tensor* const> fcs);

SimilarityBlock assemble_block(std::vector<Tensor> per_modality, double eta_between, double eta_within,
                               std::vector<std::size_t> subjects = {});

// Embeddings of all modalities stacked modality-major (all subjects of
// modality 1, then modality 2, ...), together with the subject order.
struct StackedEmbeddings {
    Var z;  // MN x QC
    std::size_t num_modalities = 0;
    std::vector<std::size_t> subjects;
};

StackedEmbeddings stack_embeddings(std::span<const Var> per_modality, std::vector<std::size_t> subjects);

// trace(Z^T L Z), evaluated as sum(Z (.) LZ) so the QC x QC product is never formed.
Var manifold_penalty_trace(const StackedEmbeddings& z, const SimilarityBlock& block);

// eta2 * R_wn + eta1 * R_bt summed pair by pair over the unassembled blocks.
double manifold_penalty_pairwise(std::span<const Tensor> z_per_modality, std::span<const Tensor> s_per_modality,
                                 double eta_between, double eta_within);

} // namespace mgcn
