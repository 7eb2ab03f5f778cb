#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mgcn/autodiff.hpp"
#include "mgcn/dataset.hpp"
#include "mgcn/graph.hpp"

namespace mgcn {

// How per-modality embeddings reach the dense head.
//   Concat   - MGCN: per subject, the M vectorised embeddings side by side.
//   MeanPool - MVGCN view pooling: elementwise mean over modalities.
//   RawFc    - MLP baseline: no encoder, strict upper triangle of every
//              modality's dense FC side by side.
enum class FusionKind { Concat, MeanPool, RawFc };

struct ModelSpec {
    std::size_t num_rois = 0;
    std::vector<std::size_t> series_lengths;  // T_m per modality
    std::size_t hidden_channels = 128;        // C1
    std::size_t embed_channels = 32;          // C
    std::vector<std::size_t> mlp_hidden = {1024, 2048};
    FusionKind fusion = FusionKind::Concat;
    bool edge_mask = false;
    bool mask_zero_diagonal = false;
    double mask_init = 0.01;  // V starts near this value so M = relu(V + V^T) starts near 2*mask_init

    std::size_t num_modalities() const { return series_lengths.size(); }
    std::size_t embedding_width() const { return num_rois * embed_channels; }
    std::size_t head_input_width() const;
    void validate() const;
};

// All trainable tensors. Within a modality every subject uses the same
// theta0/theta1.
struct ModelParams {
    std::vector<Tensor> theta0;  // per modality, T_m x C1
    std::vector<Tensor> theta1;  // per modality, C1 x C
    std::vector<Tensor> dense_weights;
    std::vector<Tensor> dense_biases;  // 1 x width
    Tensor out_weight;                 // last width x 1
    Tensor out_bias;                   // 1 x 1
    Tensor mask_v;                     // Q x Q, empty unless edge_mask

    struct Entry {
        std::string name;
        Tensor* tensor;
        bool weight_decay;  // weight matrices get L2; biases and V do not
    };
    // Stable order; used by the optimiser, L2 term and checkpoints.
    std::vector<Entry> entries();
    std::vector<std::pair<std::string, const Tensor*>> entries() const;
};

// Glorot-uniform weights, zero biases, V = mask_init + U(-0.01, 0.01).
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

// Parameters bound to a tape; vectors parallel to ModelParams.
struct ParamVars {
    std::vector<Var> theta0, theta1, dense_weights, dense_biases;
    Var out_weight, out_bias, mask_v;
};

ParamVars bind_params(Tape& tape, const ModelParams& params, bool requires_grad);

// Graphs for every subject of every modality, built once per dataset.
struct GraphCohort {
    std::size_t num_rois = 0;
    std::vector<std::vector<Tensor>> dense_fc;     // [m][n]
    std::vector<std::vector<Tensor>> propagation;  // [m][n]
    std::vector<Tensor> fc_features;               // [m], N x Q(Q-1)/2 strict upper triangles
    const Dataset* dataset = nullptr;
    std::vector<std::vector<std::size_t>> zero_variance_flags;  // [m*N + n] -> ROIs (lenient mode)
};

GraphCohort build_cohort(const Dataset& data, std::size_t knn_k, KnnMode mode, ZeroVariancePolicy policy);

// Z = sigmoid(P relu(P X theta0) theta1), Q x C.
Var gcn_encode(Var series, Var propagation, Var theta0, Var theta1);

// M = relu(V + V^T); zero_diagonal drops the self-loop modulation.
Var edge_mask(Var v, bool zero_diagonal = false);
// (M + I) (.) P.
Var masked_operator(Var mask, Var propagation);
// act((M + I) (.) P . H . theta).
Var masked_propagate(Var mask, Var propagation, Var features, Var theta, const std::function<Var(Var)>& act);

// Dense head: relu hidden layers, linear scalar output. Input N x width.
Var fuse_predict(Var head_input, const ParamVars& params);

struct ForwardOutput {
    Var prediction;               // N x 1
    std::vector<Var> embeddings;  // per modality, N x QC (row-vectorised, ROI-major)
    Var mask;                     // Q x Q when edge_mask
};

ForwardOutput forward(Tape& tape, const ModelSpec& spec, const ParamVars& params, const GraphCohort& cohort,
                      std::span<const std::size_t> subjects);

// Inference without gradients. Predictions are on the centred-label scale.
std::vector<double> predict(const ModelSpec& spec, const ModelParams& params, const GraphCohort& cohort,
                            std::span<const std::size_t> subjects);

} // namespace mgcn
