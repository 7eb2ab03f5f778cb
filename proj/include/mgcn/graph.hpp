#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "mgcn/tensor.hpp"

namespace mgcn {

// How knn_sparsify symmetrises the per-row / per-column top-K selections.
enum class KnnMode { Union, Intersection };

// What pearson_fc does with a constant ROI time series.
enum class ZeroVariancePolicy { Strict, Lenient };

KnnMode parse_knn_mode(std::string_view s);
std::string_view to_string(KnnMode m);
ZeroVariancePolicy parse_zero_variance_policy(std::string_view s);
std::string_view to_string(ZeroVariancePolicy p);

struct BrainGraph {
    Tensor dense_fc;     // |Pearson| connectivity, unit diagonal
    Tensor adjacency;    // KNN-sparsified, symmetric, zero diagonal
    Tensor propagation;  // D~^-1/2 (A + I) D~^-1/2
};

// Absolute Pearson correlation between the rows of a Q x T series matrix.
// Strict policy throws on a zero-variance row; lenient gives that row
// correlation 0 with every other ROI and records its index in `flagged`.
Tensor pearson_fc(const Tensor& series, ZeroVariancePolicy policy = ZeroVariancePolicy::Strict,
                  std::vector<std::size_t>* flagged = nullptr);

// Keeps entry (i, j) when it is among the K largest off-diagonal values of
// row i or (Union) / and (Intersection) of column j. Ties go to the lower
// index. The diagonal is never a candidate and is zero in the result.
Tensor knn_sparsify(const Tensor& dense_fc, std::size_t k, KnnMode mode = KnnMode::Union);

// D~^-1/2 (A + I) D~^-1/2 with D~ the degree matrix of A + I.
Tensor renorm_operator(const Tensor& adjacency);

// I - D^-1/2 A D^-1/2; isolated nodes keep a zero row/column in D^-1/2.
Tensor normalized_laplacian(const Tensor& adjacency);

// Largest |eigenvalue| of a symmetric matrix by power iteration.
double spectral_radius(const Tensor& symmetric, std::size_t max_iter = 1000, double tol = 1e-12);

BrainGraph build_brain_graph(const Tensor& series, std::size_t k, KnnMode mode = KnnMode::Union,
                             ZeroVariancePolicy policy = ZeroVariancePolicy::Strict,
                             std::vector<std::size_t>* flagged = nullptr);

} // namespace mgcn
