#include "mgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mgcn/error.hpp"

namespace mgcn {

KnnMode parse_knn_mode(std::string_view s) {
    if (s == "union") return KnnMode::Union;
    if (s == "intersection") return KnnMode::Intersection;
    throw ValidationError("unknown knn mode '" + std::string(s) + "' (expected union|intersection)");
}

std::string_view to_string(KnnMode m) { return m == KnnMode::Union ? "union" : "intersection"; }

ZeroVariancePolicy parse_zero_variance_policy(std::string_view s) {
    if (s == "strict") return ZeroVariancePolicy::Strict;
    if (s == "lenient") return ZeroVariancePolicy::Lenient;
    throw ValidationError("unknown zero-variance policy '" + std::string(s) + "' (expected strict|lenient)");
}

std::string_view to_string(ZeroVariancePolicy p) {
    return p == ZeroVariancePolicy::Strict ? "strict" : "lenient";
}

Tensor pearson_fc(const Tensor& series, ZeroVariancePolicy policy, std::vector<std::size_t>* flagged) {
    const std::size_t q = series.rows(), t = series.cols();
    if (t < 2) throw ValidationError("pearson_fc: need at least 2 time points, got " + std::to_string(t));

    Tensor centered = series;
    std::vector<double> norm(q, 0.0);
    std::vector<bool> constant(q, false);
    for (std::size_t i = 0; i < q; ++i) {
        auto row = centered.row(i);
        const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(t);
        double ss = 0.0;
        for (double& v : row) {
            v -= mean;
            ss += v * v;
        }
        norm[i] = std::sqrt(ss);
        // Relative threshold: a row is constant when its spread is at round-off level.
        double scale = 0.0;
        for (std::size_t c = 0; c < t; ++c) scale = std::max(scale, std::abs(series(i, c)));
        if (!(norm[i] > 1e-12 * std::max(scale, 1e-300) * std::sqrt(static_cast<double>(t)))) {
            if (policy == ZeroVariancePolicy::Strict) {
                throw ValidationError("pearson_fc: ROI " + std::to_string(i) + " has zero variance");
            }
            constant[i] = true;
            if (flagged) flagged->push_back(i);
        }
    }

    Tensor fc(q, q);
    for (std::size_t i = 0; i < q; ++i) {
        fc(i, i) = 1.0;
        if (constant[i]) continue;
        for (std::size_t j = i + 1; j < q; ++j) {
            if (constant[j]) continue;
            double dot = 0.0;
            const auto a = centered.row(i);
            const auto b = centered.row(j);
            for (std::size_t c = 0; c < t; ++c) dot += a[c] * b[c];
            const double r = std::min(1.0, std::abs(dot / (norm[i] * norm[j])));
            fc(i, j) = fc(j, i) = r;
        }
    }
    return fc;
}

namespace {

// Indices of the k largest entries among `values`, skipping `exclude`;
// ties resolved towards the lower index.
std::vector<std::size_t> top_k(const std::vector<double>& values, std::size_t exclude, std::size_t k) {
    std::vector<std::size_t> idx;
    idx.reserve(values.size());
    for (std::size_t j = 0; j < values.size(); ++j)
        if (j != exclude) idx.push_back(j);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (values[a] != values[b]) return values[a] > values[b];
                          return a < b;
                      });
    idx.resize(k);
    return idx;
}

} // namespace

Tensor knn_sparsify(const Tensor& dense_fc, std::size_t k, KnnMode mode) {
    const std::size_t q = dense_fc.rows();
    if (dense_fc.cols() != q) throw ShapeError("knn_sparsify: non-square input " + dense_fc.shape_string());
    if (k < 1 || k + 1 > q) {
        throw ValidationError("knn_sparsify: K=" + std::to_string(k) + " outside [1, " +
                              std::to_string(q == 0 ? 0 : q - 1) + "]");
    }
    if (!dense::is_symmetric(dense_fc, 1e-12)) throw ValidationError("knn_sparsify: input is not symmetric");

    std::vector<std::vector<bool>> in_row(q, std::vector<bool>(q, false));
    std::vector<std::vector<bool>> in_col(q, std::vector<bool>(q, false));
    std::vector<double> buf(q);
    for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t j = 0; j < q; ++j) buf[j] = dense_fc(i, j);
        for (std::size_t j : top_k(buf, i, k)) in_row[i][j] = true;
    }
    for (std::size_t j = 0; j < q; ++j) {
        for (std::size_t i = 0; i < q; ++i) buf[i] = dense_fc(i, j);
        for (std::size_t i : top_k(buf, j, k)) in_col[j][i] = true;
    }

    Tensor a(q, q);
    for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
            if (i == j) continue;
            const bool keep = mode == KnnMode::Union ? (in_row[i][j] || in_col[j][i])
                                                     : (in_row[i][j] && in_col[j][i]);
            if (keep) a(i, j) = dense_fc(i, j);
        }
    }
    return a;
}

Tensor renorm_operator(const Tensor& adjacency) {
    const std::size_t q = adjacency.rows();
    if (adjacency.cols() != q) throw ShapeError("renorm_operator: non-square " + adjacency.shape_string());
    std::vector<double> inv_sqrt(q);
    for (std::size_t i = 0; i < q; ++i) {
        double d = 1.0;
        for (std::size_t j = 0; j < q; ++j) d += adjacency(i, j);
        inv_sqrt[i] = 1.0 / std::sqrt(d);
    }
    Tensor p(q, q);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < q; ++j)
            p(i, j) = inv_sqrt[i] * (adjacency(i, j) + (i == j ? 1.0 : 0.0)) * inv_sqrt[j];
    return p;
}

Tensor normalized_laplacian(const Tensor& adjacency) {
    const std::size_t q = adjacency.rows();
    if (adjacency.cols() != q) throw ShapeError("normalized_laplacian: non-square " + adjacency.shape_string());
    std::vector<double> inv_sqrt(q, 0.0);
    for (std::size_t i = 0; i < q; ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < q; ++j) d += adjacency(i, j);
        if (d > 0.0) inv_sqrt[i] = 1.0 / std::sqrt(d);
    }
    Tensor l(q, q);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < q; ++j)
            l(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt[i] * adjacency(i, j) * inv_sqrt[j];
    return l;
}

double spectral_radius(const Tensor& m, std::size_t max_iter, double tol) {
    const std::size_t n = m.rows();
    if (m.cols() != n) throw ShapeError("spectral_radius: non-square " + m.shape_string());
    if (n == 0) return 0.0;
    // Iterate on M^2 so that +/- lambda pairs do not make the estimate oscillate;
    // a fixed irrational-ish start vector keeps the result deterministic.
    Tensor v(n, 1);
    for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.618033988749895 * static_cast<double>(i % 7);
    double estimate = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        double norm = std::sqrt(dense::sum(dense::hadamard(v, v)));
        if (norm == 0.0) return 0.0;
        v = dense::scale(v, 1.0 / norm);
        Tensor w = dense::matmul(m, dense::matmul(m, v));
        const double next = std::sqrt(std::abs(dense::sum(dense::hadamard(v, w))));
        v = std::move(w);
        if (std::abs(next - estimate) <= tol * std::max(1.0, next)) return next;
        estimate = next;
    }
    return estimate;
}

BrainGraph build_brain_graph(const Tensor& series, std::size_t k, KnnMode mode, ZeroVariancePolicy policy,
                             std::vector<std::size_t>* flagged) {
    BrainGraph g;
    g.dense_fc = pearson_fc(series, policy, flagged);
    g.adjacency = knn_sparsify(g.dense_fc, k, mode);
    g.propagation = renorm_operator(g.adjacency);
    return g;
}

} // namespace mgcn
