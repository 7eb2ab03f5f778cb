#include "mgcn/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mgcn/error.hpp"
#include "mgcn/parallel.hpp"

namespace mgcn {

std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

std::vector<double> zscore(std::span<const double> values) {
    std::vector<double> out(values.begin(), values.end());
    if (out.empty()) return out;
    const double n = static_cast<double>(out.size());
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
    double var = 0.0;
    for (double v : out) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    for (double& v : out) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    return out;
}

GradRamMap grad_ram(const TrainResult& model, const GraphCohort& cohort, std::span<const std::size_t> subjects,
                    double top_fraction) {
    const ModelSpec& spec = model.spec;
    if (spec.fusion == FusionKind::RawFc) throw ValidationError("gradram: model has no graph embeddings");
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ValidationError("gradram: top fraction must be in (0, 1]");
    if (cohort.dataset == nullptr) throw ValidationError("gradram: cohort has no dataset");
    std::vector<std::size_t> chosen(subjects.begin(), subjects.end());
    if (chosen.empty()) {
        chosen.resize(cohort.dataset->num_subjects());
        std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    }

    GradRamMap out;
    if (model.best_epoch == 0) out.warnings.push_back("gradram: model parameters are at initialisation");
    for (const auto& m : cohort.dataset->modalities) out.modalities.push_back(m.name);

    Tape tape;
    ParamVars v = bind_params(tape, model.params, true);
    ForwardOutput fwd = forward(tape, spec, v, cohort, chosen);
    tape.backward(sum(fwd.prediction));

    const std::size_t q = spec.num_rois, c = spec.embed_channels;
    const double norm = static_cast<double>(chosen.size() * c);
    const std::size_t k = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(q) - 1e-9));
    for (Var z : fwd.embeddings) {
        const Tensor& zv = z.value();
        const Tensor& g = z.grad();
        std::vector<double> a(q, 0.0);
        for (std::size_t n = 0; n < zv.rows(); ++n)
            for (std::size_t r = 0; r < q; ++r)
                for (std::size_t ch = 0; ch < c; ++ch) a[r] += g(n, r * c + ch) * zv(n, r * c + ch);
        for (double& x : a) x = std::max(x, 0.0) / norm;
        out.zscore.push_back(zscore(a));
        out.top.push_back(top_indices(a, k));
        out.raw.push_back(std::move(a));
    }
    return out;
}

Tensor binarize(const Tensor& mask) {
    Tensor out(mask.rows(), mask.cols());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] > 1e-12 ? 1.0 : 0.0;
    return out;
}

double mask_sparsity(const Tensor& binary) {
    if (binary.rows() != binary.cols()) throw ShapeError("mask_sparsity: mask must be square");
    const std::size_t q = binary.rows();
    if (q < 2) return 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = i + 1; j < q; ++j) count += binary(i, j) != 0.0;
    return static_cast<double>(count) / static_cast<double>(q * (q - 1) / 2);
}

Tensor graph_support(const GraphCohort& cohort) {
    const std::size_t q = cohort.num_rois;
    Tensor s(q, q);
    for (const auto& per_subject : cohort.propagation)
        for (const Tensor& p : per_subject)
            for (std::size_t i = 0; i < q; ++i)
                for (std::size_t j = 0; j < q; ++j)
                    if (i != j && p(i, j) != 0.0) s(i, j) = 1.0;
    return s;
}

MaskRun train_edge_mask(const GraphCohort& cohort, const TrainConfig& config, double beta, std::uint64_t init_seed) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ValidationError("mask: beta must be finite and >= 0");
    if (cohort.dataset == nullptr) throw ValidationError("mask: cohort has no dataset");
    const Dataset& data = *cohort.dataset;
    TrainConfig cfg = config;
    cfg.mask_beta = beta;
    ModelSpec spec = make_spec({ModelKind::Mgcn, {}}, data, cfg);
    spec.edge_mask = true;

    std::vector<std::size_t> all(data.num_subjects());
    std::iota(all.begin(), all.end(), std::size_t{0});
    TrainOptions options;
    options.manifold = true;
    options.init_seed = init_seed;
    options.until_converged = true;
    TrainResult r = train(cohort, spec, cfg, all, {}, options);

    MaskRun run;
    run.v = r.params.mask_v;
    run.mask = Tensor(run.v.rows(), run.v.cols());
    for (std::size_t i = 0; i < run.v.rows(); ++i)
        for (std::size_t j = 0; j < run.v.cols(); ++j) {
            const bool keep = !(spec.mask_zero_diagonal && i == j);
            run.mask(i, j) = keep ? std::max(run.v(i, j) + run.v(j, i), 0.0) : 0.0;
        }
    run.binary = binarize(run.mask);
    const Tensor support = graph_support(cohort);
    for (std::size_t i = 0; i < run.binary.rows(); ++i)
        for (std::size_t j = 0; j < run.binary.cols(); ++j)
            if (i != j && support(i, j) == 0.0) run.binary(i, j) = 0.0;
    run.sparsity = mask_sparsity(run.binary);
    run.epochs_run = r.epochs_run;
    run.converged = r.converged;
    run.final_loss = r.curve.empty() ? 0.0 : r.curve.back().loss;
    return run;
}

Consensus consensus_mask(std::span<const Tensor> runs, double threshold) {
    if (runs.empty()) throw ValidationError("consensus: need at least one run");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("consensus: threshold must be in (0, 1]");
    Consensus c;
    c.frequency = Tensor(runs[0].rows(), runs[0].cols());
    for (const Tensor& r : runs) {
        if (!r.same_shape(c.frequency)) {
            throw ShapeError("consensus: mask shapes differ (" + r.shape_string() + " vs " +
                             c.frequency.shape_string() + ")");
        }
        for (std::size_t i = 0; i < r.size(); ++i) c.frequency[i] += r[i] != 0.0 ? 1.0 : 0.0;
    }
    c.mask = Tensor(c.frequency.rows(), c.frequency.cols());
    for (std::size_t i = 0; i < c.frequency.size(); ++i) {
        const double hits = c.frequency[i];
        c.frequency[i] = hits / static_cast<double>(runs.size());
        // Compare counts, so 5 of 10 at threshold 0.5 is included exactly.
        c.mask[i] = hits >= threshold * static_cast<double>(runs.size()) - 1e-9 ? 1.0 : 0.0;
    }
    return c;
}

std::vector<EdgeMaskResult> mask_sweep(const GraphCohort& cohort, const TrainConfig& config,
                                       std::span<const double> betas, std::size_t runs, double threshold,
                                       std::uint64_t seed, std::size_t threads) {
    if (runs == 0) throw ValidationError("mask: need at least one run");
    if (betas.empty()) throw ValidationError("mask: empty beta grid");
    std::vector<MaskRun> flat(betas.size() * runs);
    parallel_for(flat.size(), threads, [&](std::size_t i) {
        flat[i] = train_edge_mask(cohort, config, betas[i / runs], derive_seed(seed, i % runs));
    });
    std::vector<EdgeMaskResult> out;
    for (std::size_t b = 0; b < betas.size(); ++b) {
        EdgeMaskResult r;
        r.beta = betas[b];
        std::vector<Tensor> binaries;
        for (std::size_t k = 0; k < runs; ++k) {
            r.runs.push_back(std::move(flat[b * runs + k]));
            binaries.push_back(r.runs.back().binary);
        }
        r.consensus = consensus_mask(binaries, threshold);
        r.sparsity = mask_sparsity(r.consensus.mask);
        out.push_back(std::move(r));
    }
    return out;
}

AllegianceMatrix module_allegiance(const Tensor& binary, std::span<const std::string> fn_labels) {
    if (binary.rows() != binary.cols()) throw ShapeError("allegiance: mask must be square");
    const std::size_t q = binary.rows();
    if (fn_labels.size() != q) {
        throw ValidationError("allegiance: " + std::to_string(fn_labels.size()) + " network labels for " +
                              std::to_string(q) + " ROIs");
    }
    AllegianceMatrix a;
    std::vector<std::size_t> index(q);
    for (std::size_t i = 0; i < q; ++i) {
        if (fn_labels[i].empty()) throw ValidationError("allegiance: ROI " + std::to_string(i) + " has no network");
        auto it = std::find(a.networks.begin(), a.networks.end(), fn_labels[i]);
        index[i] = static_cast<std::size_t>(it - a.networks.begin());
        if (it == a.networks.end()) a.networks.push_back(fn_labels[i]);
    }
    const std::size_t f = a.networks.size();
    a.counts = Tensor(f, f);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = i + 1; j < q; ++j) {
            if (binary(i, j) == 0.0) continue;
            const std::size_t x = index[i], y = index[j];
            a.counts(x, y) += 1.0;
            if (x != y) a.counts(y, x) += 1.0;
        }
    return a;
}

} // namespace mgcn
