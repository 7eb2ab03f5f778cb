#include "mgcn/manifold.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mgcn/error.hpp"

namespace mgcn {

double subject_similarity(const Tensor& fc_a, const Tensor& fc_b) {
    require_same_shape(fc_a, fc_b, "subject_similarity");
    const std::size_t n = fc_a.size();
    if (n < 2) throw ValidationError("subject_similarity: need at least 2 entries");
    const double ma = dense::sum(fc_a) / static_cast<double>(n);
    const double mb = dense::sum(fc_b) / static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = fc_a[i] - ma, b = fc_b[i] - mb;
        sab += a * b;
        saa += a * a;
        sbb += b * b;
    }
    // Rounding in the mean leaves a residue of order eps^2 for constant inputs.
    const double floor_a = static_cast<double>(n) * std::pow(1e-14 * (std::abs(ma) + 1e-300), 2);
    const double floor_b = static_cast<double>(n) * std::pow(1e-14 * (std::abs(mb) + 1e-300), 2);
    if (saa <= floor_a || sbb <= floor_b) throw ValidationError("subject_similarity: zero-variance connectivity vector");
    return std::min(1.0, std::abs(sab / std::sqrt(saa * sbb)));
}

Tensor similarity_matrix(std::span<const Tensor* const> fcs) {
    const std::size_t n = fcs.size();
    Tensor s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        s(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) s(i, j) = s(j, i) = subject_similarity(*fcs[i], *fcs[j]);
    }
    return s;
}

SimilarityBlock assemble_block(std::vector<Tensor> per_modality, double eta_between, double eta_within,
                               std::vector<std::size_t> subjects) {
    if (per_modality.empty()) throw ValidationError("assemble_block: no modalities");
    if (eta_between < 0.0 || eta_within < 0.0) throw ValidationError("assemble_block: negative eta");
    const std::size_t n = per_modality.front().rows();
    for (std::size_t m = 0; m < per_modality.size(); ++m) {
        const Tensor& s = per_modality[m];
        if (s.rows() != n || s.cols() != n) {
            throw ValidationError("assemble_block: modality " + std::to_string(m) + " similarity is " +
                                  s.shape_string() + ", expected " + std::to_string(n) + "x" + std::to_string(n));
        }
    }
    if (subjects.empty()) {
        subjects.resize(n);
        std::iota(subjects.begin(), subjects.end(), std::size_t{0});
    }
    if (subjects.size() != n) throw ValidationError("assemble_block: subject list does not match N");

    const std::size_t num_mod = per_modality.size(), dim = num_mod * n;
    SimilarityBlock b;
    b.num_modalities = num_mod;
    b.num_subjects = n;
    b.eta_between = eta_between;
    b.eta_within = eta_within;
    b.subjects = std::move(subjects);
    b.s = Tensor(dim, dim);
    for (std::size_t p = 0; p < num_mod; ++p) {
        for (std::size_t q = 0; q < num_mod; ++q) {
            const Tensor block = p == q ? dense::scale(per_modality[p], eta_within)
                                        : dense::scale(dense::matmul(per_modality[p], per_modality[q]), eta_between);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) b.s(p * n + i, q * n + j) = block(i, j);
        }
    }
    b.laplacian = dense::scale(b.s, -1.0);
    for (std::size_t i = 0; i < dim; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < dim; ++j) degree += b.s(i, j);
        b.laplacian(i, i) += degree;
    }
    b.per_modality = std::move(per_modality);
    return b;
}

StackedEmbeddings stack_embeddings(std::span<const Var> per_modality, std::vector<std::size_t> subjects) {
    if (per_modality.empty()) throw ValidationError("stack_embeddings: no modalities");
    for (Var z : per_modality) {
        if (z.rows() != subjects.size()) throw ShapeError("stack_embeddings: rows do not match subject list");
    }
    StackedEmbeddings out;
    out.z = per_modality.size() == 1 ? per_modality.front() : vstack(per_modality);
    out.num_modalities = per_modality.size();
    out.subjects = std::move(subjects);
    return out;
}

Var manifold_penalty_trace(const StackedEmbeddings& z, const SimilarityBlock& block) {
    if (z.num_modalities != block.num_modalities || z.subjects != block.subjects) {
        throw ValidationError("manifold_penalty_trace: embedding row order does not match the similarity block");
    }
    Var l = z.z.tape()->constant_ref(block.laplacian);
    return sum(hadamard(z.z, matmul(l, z.z)));
}

double manifold_penalty_pairwise(std::span<const Tensor> z_per_modality, std::span<const Tensor> s_per_modality,
                                 double eta_between, double eta_within) {
    if (z_per_modality.size() != s_per_modality.size() || z_per_modality.empty()) {
        throw ValidationError("manifold_penalty_pairwise: modality count mismatch");
    }
    const std::size_t num_mod = z_per_modality.size(), n = z_per_modality.front().rows();
    for (std::size_t m = 0; m < num_mod; ++m) {
        if (z_per_modality[m].rows() != n || s_per_modality[m].rows() != n || s_per_modality[m].cols() != n ||
            z_per_modality[m].cols() != z_per_modality.front().cols()) {
            throw ShapeError("manifold_penalty_pairwise: inconsistent shapes");
        }
    }
    auto sq_dist = [](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
        double d = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
            const double x = a(i, c) - b(j, c);
            d += x * x;
        }
        return d;
    };

    double within = 0.0;
    for (std::size_t m = 0; m < num_mod; ++m)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                within += s_per_modality[m](i, j) * sq_dist(z_per_modality[m], i, z_per_modality[m], j);

    double between = 0.0;
    for (std::size_t p = 0; p < num_mod; ++p) {
        for (std::size_t q = 0; q < num_mod; ++q) {
            if (p == q) continue;
            const Tensor w = dense::matmul(s_per_modality[p], s_per_modality[q]);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    between += w(i, j) * sq_dist(z_per_modality[p], i, z_per_modality[q], j);
        }
    }
    return eta_within * 0.5 * within + eta_between * 0.5 * between;
}

} // namespace mgcn
