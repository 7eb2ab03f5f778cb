#include "mgcn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "mgcn/error.hpp"
#include "mgcn/parallel.hpp"

namespace mgcn {

namespace {

// Fixed transforms on top of mt19937_64, so output does not depend on the
// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

using Wave = std::vector<double>;

double dot(const Wave& a, const Wave& b) {
    double s = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) s += a[t] * b[t];
    return s;
}

// Orthogonalises v against the orthonormal `basis` (twice, for stability),
// normalises it and appends it.
void append_orthonormal(std::vector<Wave>& basis, Wave v) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const Wave& e : basis) {
            const double c = dot(v, e);
            for (std::size_t t = 0; t < v.size(); ++t) v[t] -= c * e[t];
        }
    }
    const double norm = std::sqrt(dot(v, v));
    if (norm < 1e-8) throw NumericError("synth: degenerate waveform during orthogonalisation");
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
}

Wave random_wave(Rng& rng, std::size_t length) {
    Wave w(length);
    for (double& x : w) x = rng.normal();
    return w;
}

} // namespace

void SynthConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ValidationError("synth: " + msg);
    };
    require(num_subjects >= 3, "need at least 3 subjects");
    require(num_rois >= 2, "need at least 2 ROIs");
    require(!modalities.empty(), "need at least one modality");
    require(std::isfinite(snr) && snr > 0.0, "snr must be > 0");
    require(planted_rois <= num_rois, "planted ROI set exceeds Q");
    require(num_communities >= 1 && num_communities <= num_rois, "num_communities must be in [1, Q]");
    require(community_strength >= 0.0 && roi_signal >= 0.0 && edge_signal >= 0.0 && label_noise >= 0.0 &&
                latent_noise >= 0.0,
            "signal strengths must be >= 0");
    std::size_t cross_pairs = 0;
    for (std::size_t i = 0; i < num_rois; ++i)
        for (std::size_t j = i + 1; j < num_rois; ++j)
            if (i * num_communities / num_rois != j * num_communities / num_rois) ++cross_pairs;
    require(planted_edges <= cross_pairs, "planted edge set exceeds the " + std::to_string(cross_pairs) +
                                              " between-community ROI pairs");
    require(latent.empty() || latent.size() == num_subjects, "latent must have one value per subject");
    for (double u : latent) require(u >= 0.0 && u <= 1.0, "latent values must be in [0, 1]");
    for (const auto& m : modalities) {
        require(!m.name.empty(), "modality with empty name");
        require(m.length >= planted_edges + num_communities + 3,
                "modality " + m.name + " needs at least " + std::to_string(planted_edges + num_communities + 3) +
                    " time points for the planted structure");
    }
}

std::vector<std::string> community_labels(std::size_t num_rois, std::size_t num_communities) {
    static const char* names[] = {"DMN", "VIS", "SAL", "FPN", "SMN", "DAN", "AUD", "SUB", "CER", "VAN"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < num_rois; ++i) {
        const std::size_t c = i * num_communities / num_rois;
        out.push_back(c < std::size(names) ? names[c] : "FN" + std::to_string(c + 1));
    }
    return out;
}

Dataset synth_generate(const SynthConfig& config) {
    config.validate();
    const std::size_t q = config.num_rois, n_sub = config.num_subjects, f = config.num_communities;
    Rng rng(derive_seed(config.seed, 0));

    Dataset d;
    d.num_rois = q;
    d.modalities = config.modalities;
    d.fn_labels = community_labels(q, f);
    d.provenance.seed = config.seed;

    std::vector<std::size_t> rois(q);
    for (std::size_t i = 0; i < q; ++i) rois[i] = i;
    for (std::size_t i = 0; i < config.planted_rois; ++i) std::swap(rois[i], rois[i + rng.index(q - i)]);
    d.provenance.planted_rois.assign(rois.begin(), rois.begin() + config.planted_rois);
    std::sort(d.provenance.planted_rois.begin(), d.provenance.planted_rois.end());

    auto community = [&](std::size_t i) { return i * f / q; };
    while (d.provenance.planted_edges.size() < config.planted_edges) {
        std::size_t i = rng.index(q), j = rng.index(q);
        if (i > j) std::swap(i, j);
        if (community(i) == community(j)) continue;
        const std::pair<std::size_t, std::size_t> e{i, j};
        if (std::find(d.provenance.planted_edges.begin(), d.provenance.planted_edges.end(), e) ==
            d.provenance.planted_edges.end()) {
            d.provenance.planted_edges.push_back(e);
        }
    }

    const double scale = 1.0 / std::sqrt(12.0);
    for (std::size_t n = 0; n < n_sub; ++n) {
        double u = rng.uniform();
        if (!config.latent.empty()) u = config.latent[n];
        d.provenance.latent.push_back(u);
        d.labels.push_back(100.0 + 15.0 * (u - 0.5) / scale + 15.0 * config.label_noise * rng.normal());
        d.subject_ids.push_back("sub-" + std::string(n < 9 ? "00" : n < 99 ? "0" : "") + std::to_string(n + 1));
    }

    std::vector<char> planted(q, 0);
    for (std::size_t i : d.provenance.planted_rois) planted[i] = 1;

    for (std::size_t m = 0; m < config.modalities.size(); ++m) {
        const std::size_t len = config.modalities[m].length;
        const double amp = std::sqrt(static_cast<double>(len));  // unit-variance waveforms
        Rng fixed(derive_seed(config.seed, 1000 + m));
        // Orthonormal basis: constant, task waveform w, one waveform per planted edge.
        std::vector<Wave> basis;
        append_orthonormal(basis, Wave(len, 1.0));
        append_orthonormal(basis, random_wave(fixed, len));
        for (std::size_t e = 0; e < config.planted_edges; ++e) append_orthonormal(basis, random_wave(fixed, len));
        const std::size_t fixed_count = basis.size();

        d.series.emplace_back();
        for (std::size_t n = 0; n < n_sub; ++n) {
            Rng subject(derive_seed(config.seed, 1000000 + m * 100000 + n));
            std::vector<Wave> b = basis;
            for (std::size_t c = 0; c < f; ++c) append_orthonormal(b, random_wave(subject, len));
            const double u = d.provenance.latent[n] + config.latent_noise * subject.normal();

            Tensor x(q, len);
            for (std::size_t i = 0; i < q; ++i) {
                const Wave& comm = b[fixed_count + community(i)];
                for (std::size_t t = 0; t < len; ++t) {
                    double v = config.community_strength * amp * comm[t];
                    if (planted[i]) v += config.roi_signal * u * amp * b[1][t];
                    x(i, t) = v;
                }
            }
            for (std::size_t e = 0; e < config.planted_edges; ++e) {
                const auto [i, j] = d.provenance.planted_edges[e];
                const Wave& g = b[2 + e];
                for (std::size_t t = 0; t < len; ++t) {
                    const double v = config.edge_signal * std::sqrt(std::max(u, 0.0)) * amp * g[t];
                    x(i, t) += v;
                    x(j, t) += v;
                }
            }
            for (std::size_t i = 0; i < q; ++i)
                for (std::size_t t = 0; t < len; ++t) x(i, t) += subject.normal() / config.snr;
            d.series.back().push_back(std::move(x));
        }
    }
    d.validate();
    return d;
}

} // namespace mgcn
