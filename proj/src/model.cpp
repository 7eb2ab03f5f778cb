#include "mgcn/model.hpp"

#include <cmath>
#include <random>

#include "mgcn/error.hpp"

namespace mgcn {

std::size_t ModelSpec::head_input_width() const {
    switch (fusion) {
        case FusionKind::Concat: return num_modalities() * embedding_width();
        case FusionKind::MeanPool: return embedding_width();
        case FusionKind::RawFc: return num_modalities() * num_rois * (num_rois - 1) / 2;
    }
    return 0;
}

void ModelSpec::validate() const {
    if (num_rois < 2) throw ValidationError("model: need at least 2 ROIs");
    if (series_lengths.empty()) throw ValidationError("model: no modalities");
    for (std::size_t t : series_lengths)
        if (t == 0) throw ValidationError("model: zero-length modality");
    if (fusion != FusionKind::RawFc && (hidden_channels == 0 || embed_channels == 0)) {
        throw ValidationError("model: channel counts must be positive");
    }
    for (std::size_t w : mlp_hidden)
        if (w == 0) throw ValidationError("model: zero-width dense layer");
    if (edge_mask && fusion == FusionKind::RawFc) throw ValidationError("model: edge mask needs a graph encoder");
}

std::vector<ModelParams::Entry> ModelParams::entries() {
    std::vector<Entry> out;
    for (std::size_t m = 0; m < theta0.size(); ++m) {
        out.push_back({"theta0/" + std::to_string(m), &theta0[m], true});
        out.push_back({"theta1/" + std::to_string(m), &theta1[m], true});
    }
    for (std::size_t i = 0; i < dense_weights.size(); ++i) {
        out.push_back({"dense" + std::to_string(i) + "/weight", &dense_weights[i], true});
        out.push_back({"dense" + std::to_string(i) + "/bias", &dense_biases[i], false});
    }
    out.push_back({"out/weight", &out_weight, true});
    out.push_back({"out/bias", &out_bias, false});
    if (!mask_v.empty()) out.push_back({"mask/V", &mask_v, false});
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::entries() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& e : const_cast<ModelParams*>(this)->entries()) out.emplace_back(e.name, e.tensor);
    return out;
}

namespace {

Tensor glorot(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor t(fan_in, fan_out);
    for (double& v : t.values()) v = u(rng);
    return t;
}

} // namespace

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    ModelParams p;
    if (spec.fusion != FusionKind::RawFc) {
        for (std::size_t t : spec.series_lengths) {
            p.theta0.push_back(glorot(rng, t, spec.hidden_channels));
            p.theta1.push_back(glorot(rng, spec.hidden_channels, spec.embed_channels));
        }
    }
    std::size_t width = spec.head_input_width();
    for (std::size_t h : spec.mlp_hidden) {
        p.dense_weights.push_back(glorot(rng, width, h));
        p.dense_biases.emplace_back(1, h);
        width = h;
    }
    p.out_weight = glorot(rng, width, 1);
    p.out_bias = Tensor(1, 1);
    if (spec.edge_mask) {
        std::uniform_real_distribution<double> jitter(-0.01, 0.01);
        p.mask_v = Tensor(spec.num_rois, spec.num_rois);
        for (double& v : p.mask_v.values()) v = spec.mask_init + jitter(rng);
    }
    return p;
}

ParamVars bind_params(Tape& tape, const ModelParams& params, bool requires_grad) {
    ParamVars v;
    for (const auto& t : params.theta0) v.theta0.push_back(tape.leaf(t, requires_grad));
    for (const auto& t : params.theta1) v.theta1.push_back(tape.leaf(t, requires_grad));
    for (const auto& t : params.dense_weights) v.dense_weights.push_back(tape.leaf(t, requires_grad));
    for (const auto& t : params.dense_biases) v.dense_biases.push_back(tape.leaf(t, requires_grad));
    v.out_weight = tape.leaf(params.out_weight, requires_grad);
    v.out_bias = tape.leaf(params.out_bias, requires_grad);
    if (!params.mask_v.empty()) v.mask_v = tape.leaf(params.mask_v, requires_grad);
    return v;
}

GraphCohort build_cohort(const Dataset& data, std::size_t knn_k, KnnMode mode, ZeroVariancePolicy policy) {
    data.validate();
    GraphCohort c;
    c.num_rois = data.num_rois;
    c.dataset = &data;
    const std::size_t q = data.num_rois, n_sub = data.num_subjects();
    const std::size_t tri = q * (q - 1) / 2;
    for (std::size_t m = 0; m < data.num_modalities(); ++m) {
        c.dense_fc.emplace_back();
        c.propagation.emplace_back();
        Tensor features(n_sub, tri);
        for (std::size_t n = 0; n < n_sub; ++n) {
            std::vector<std::size_t> flagged;
            BrainGraph g = build_brain_graph(data.series[m][n], knn_k, mode, policy, &flagged);
            c.zero_variance_flags.push_back(std::move(flagged));
            std::size_t k = 0;
            for (std::size_t i = 0; i < q; ++i)
                for (std::size_t j = i + 1; j < q; ++j) features(n, k++) = g.dense_fc(i, j);
            c.dense_fc.back().push_back(std::move(g.dense_fc));
            c.propagation.back().push_back(std::move(g.propagation));
        }
        c.fc_features.push_back(std::move(features));
    }
    return c;
}

Var gcn_encode(Var series, Var propagation, Var theta0, Var theta1) {
    Var hidden = relu(matmul(propagation, matmul(series, theta0)));
    return sigmoid(matmul(propagation, matmul(hidden, theta1)));
}

Var edge_mask(Var v, bool zero_diagonal) {
    Var m = relu(add(v, transpose(v)));
    if (zero_diagonal) {
        const std::size_t q = v.rows();
        Tensor off(q, q, 1.0);
        for (std::size_t i = 0; i < q; ++i) off(i, i) = 0.0;
        m = hadamard(m, v.tape()->constant(std::move(off)));
    }
    return m;
}

Var masked_operator(Var mask, Var propagation) {
    Var eye = mask.tape()->constant(Tensor::identity(mask.rows()));
    return hadamard(add(mask, eye), propagation);
}

Var masked_propagate(Var mask, Var propagation, Var features, Var theta, const std::function<Var(Var)>& act) {
    return act(matmul(masked_operator(mask, propagation), matmul(features, theta)));
}

Var fuse_predict(Var head_input, const ParamVars& params) {
    Var h = head_input;
    for (std::size_t i = 0; i < params.dense_weights.size(); ++i) {
        h = relu(add_row(matmul(h, params.dense_weights[i]), params.dense_biases[i]));
    }
    return add_row(matmul(h, params.out_weight), params.out_bias);
}

ForwardOutput forward(Tape& tape, const ModelSpec& spec, const ParamVars& params, const GraphCohort& cohort,
                      std::span<const std::size_t> subjects) {
    if (cohort.dataset == nullptr) throw ValidationError("forward: cohort has no dataset");
    if (subjects.empty()) throw ValidationError("forward: no subjects");
    const Dataset& data = *cohort.dataset;
    const std::size_t num_mod = spec.num_modalities();
    if (num_mod != data.num_modalities() || spec.num_rois != data.num_rois) {
        throw ShapeError("forward: model expects " + std::to_string(num_mod) + " modalities / " +
                         std::to_string(spec.num_rois) + " ROIs, dataset has " +
                         std::to_string(data.num_modalities()) + " / " + std::to_string(data.num_rois));
    }
    for (std::size_t n : subjects)
        if (n >= data.num_subjects()) throw ValidationError("forward: subject index out of range");

    ForwardOutput out;
    Var head_input;

    if (spec.fusion == FusionKind::RawFc) {
        std::vector<Var> blocks;
        for (std::size_t m = 0; m < num_mod; ++m) {
            const Tensor& f = cohort.fc_features[m];
            Tensor rows(subjects.size(), f.cols());
            for (std::size_t r = 0; r < subjects.size(); ++r) {
                auto src = f.row(subjects[r]);
                std::copy(src.begin(), src.end(), rows.row(r).begin());
            }
            blocks.push_back(tape.constant(std::move(rows)));
        }
        head_input = blocks.size() == 1 ? blocks.front() : hstack(blocks);
    } else {
        if (spec.edge_mask) {
            if (!params.mask_v.valid()) throw ValidationError("forward: edge-mask model without V");
            out.mask = edge_mask(params.mask_v, spec.mask_zero_diagonal);
        }
        auto sigmoid_act = [](Var x) { return sigmoid(x); };
        auto relu_act = [](Var x) { return relu(x); };
        for (std::size_t m = 0; m < num_mod; ++m) {
            std::vector<Var> rows;
            rows.reserve(subjects.size());
            for (std::size_t n : subjects) {
                Var x = tape.constant_ref(data.series[m][n]);
                Var p = tape.constant_ref(cohort.propagation[m][n]);
                Var z;
                if (spec.edge_mask) {
                    Var h = masked_propagate(out.mask, p, x, params.theta0[m], relu_act);
                    z = masked_propagate(out.mask, p, h, params.theta1[m], sigmoid_act);
                } else {
                    z = gcn_encode(x, p, params.theta0[m], params.theta1[m]);
                }
                rows.push_back(vectorize(z));
            }
            out.embeddings.push_back(vstack(rows));
        }
        if (spec.fusion == FusionKind::Concat) {
            head_input = num_mod == 1 ? out.embeddings.front() : hstack(out.embeddings);
        } else {
            head_input = out.embeddings.front();
            for (std::size_t m = 1; m < num_mod; ++m) head_input = add(head_input, out.embeddings[m]);
            if (num_mod > 1) head_input = scale(head_input, 1.0 / static_cast<double>(num_mod));
        }
    }
    out.prediction = fuse_predict(head_input, params);
    return out;
}

std::vector<double> predict(const ModelSpec& spec, const ModelParams& params, const GraphCohort& cohort,
                            std::span<const std::size_t> subjects) {
    Tape tape;
    ParamVars vars = bind_params(tape, params, false);
    ForwardOutput out = forward(tape, spec, vars, cohort, subjects);
    return out.prediction.value().values();
}

} // namespace mgcn
