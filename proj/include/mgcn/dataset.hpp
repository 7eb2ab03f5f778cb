#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mgcn/tensor.hpp"

namespace mgcn {

struct Modality {
    std::string name;
    std::size_t length = 0;  // time points T_m
};

// Where a synthetic cohort came from; empty for real data.
struct Provenance {
    std::uint64_t seed = 0;
    std::vector<std::size_t> planted_rois;
    std::vector<std::pair<std::size_t, std::size_t>> planted_edges;
    std::vector<double> latent;  // per-subject latent factor u_n
};

// In-memory cohort. series[m][n] is the Q x T_m matrix of subject n in
// modality m. Labels are raw (not centred); centring happens at train time
// from training subjects only.
struct Dataset {
    std::size_t num_rois = 0;
    std::vector<Modality> modalities;
    std::vector<std::string> subject_ids;
    std::vector<double> labels;
    std::vector<std::vector<Tensor>> series;
    std::vector<std::string> fn_labels;  // optional ROI -> network label
    Provenance provenance;

    std::size_t num_subjects() const { return labels.size(); }
    std::size_t num_modalities() const { return modalities.size(); }

    // Throws ValidationError on any inconsistency.
    void validate() const;
    std::size_t modality_index(const std::string& name) const;
    // Copy restricted to the given modalities, in the given order.
    Dataset select_modalities(const std::vector<std::size_t>& which) const;
};

} // namespace mgcn
