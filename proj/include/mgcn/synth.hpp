#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mgcn/dataset.hpp"

namespace mgcn {

// Synthetic cohort with a known answer.
//
// Every subject n has a latent u_n ~ U(0, 1); modality m sees
// v = u_n + latent_noise * N(0, 1). ROI i of community c(i) carries
//
//   x_i(t) = community_strength * b_{n,c}(t)
//          + roi_signal * v * w(t)                   if i is a planted ROI
//          + edge_signal * sqrt(max(v, 0)) * g_e(t)  for each planted edge e touching i
//          + noise / snr
//
// w and g_e are fixed per modality; the community waveforms b_{n,c} are
// drawn per subject and orthogonalised against w, g_e and each other, so
// with no noise and no jitter the FC matrix is a function of u_n alone. Labels are
// 100 + 15 * (u_n - 1/2) * sqrt(12) + 15 * label_noise * N(0, 1).
struct SynthConfig {
    std::size_t num_subjects = 60;
    std::size_t num_rois = 32;
    std::vector<Modality> modalities = {{"emoid", 50}, {"nback", 60}};
    double snr = 1.0;
    std::size_t planted_rois = 4;
    std::size_t planted_edges = 20;
    std::size_t num_communities = 4;
    double community_strength = 0.3;
    double roi_signal = 1.0;
    double edge_signal = 1.0;
    double label_noise = 0.1;
    double latent_noise = 0.1;  // per-modality jitter on u_n
    std::uint64_t seed = 0;
    std::vector<double> latent;  // optional fixed u_n (length N); drawn when empty

    void validate() const;
};

Dataset synth_generate(const SynthConfig& config);

// Functional-network label of each ROI under `num_communities` equal blocks.
std::vector<std::string> community_labels(std::size_t num_rois, std::size_t num_communities);

} // namespace mgcn
