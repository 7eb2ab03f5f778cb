#include "mgcn/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mgcn/error.hpp"

namespace mgcn {

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "gd" || s == "sgd") return OptimizerKind::GradientDescent;
    throw ValidationError("unknown optimizer '" + s + "' (expected adam or gd)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "gd"; }

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ValidationError("config: " + msg);
    };
    require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate must be >= 0");
    require(l2 >= 0.0 && eta_between >= 0.0 && eta_within >= 0.0, "l2 and eta must be >= 0");
    require(knn_k >= 1, "knn_k must be >= 1");
    require(train_ratio >= 0.0 && val_ratio >= 0.0 && test_ratio >= 0.0, "split ratios must be >= 0");
    require(std::abs(train_ratio + val_ratio + test_ratio - 1.0) < 1e-9, "split ratios must sum to 1");
    require(repeats >= 1, "repeats must be >= 1");
    require(patience >= 1, "patience must be >= 1");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "adam betas must be in [0, 1)");
    require(adam_epsilon > 0.0, "adam_epsilon must be > 0");
    require(mask_beta >= 0.0, "mask_beta must be >= 0");
    require(mask_runs >= 1, "mask_runs must be >= 1");
    require(mask_tolerance >= 0.0, "mask_tolerance must be >= 0");
    require(freq_threshold > 0.0 && freq_threshold <= 1.0, "freq_threshold must be in (0, 1]");
}

std::string ModelChoice::label() const {
    switch (kind) {
        case ModelKind::Mgcn: return "mgcn";
        case ModelKind::MgcnNoReg: return "mgcn-noreg";
        case ModelKind::GcnSingle: return "gcn:" + modality;
        case ModelKind::Mlp: return "mlp";
        case ModelKind::Mvgcn: return "mvgcn";
    }
    return "?";
}

ModelChoice parse_model(const std::string& s) {
    if (s == "mgcn") return {ModelKind::Mgcn, {}};
    if (s == "mgcn-noreg") return {ModelKind::MgcnNoReg, {}};
    if (s == "mlp") return {ModelKind::Mlp, {}};
    if (s == "mvgcn") return {ModelKind::Mvgcn, {}};
    if (s.rfind("gcn:", 0) == 0 && s.size() > 4) return {ModelKind::GcnSingle, s.substr(4)};
    throw ValidationError("unknown model '" + s + "' (expected mgcn, mgcn-noreg, gcn:<modality>, mlp, mvgcn)");
}

std::vector<ModelChoice> parse_model_list(const std::string& csv) {
    std::vector<ModelChoice> out;
    std::stringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(parse_model(item));
    }
    if (out.empty()) throw ValidationError("empty model list");
    return out;
}

ModelSpec make_spec(const ModelChoice& choice, const Dataset& data, const TrainConfig& config) {
    ModelSpec s;
    s.num_rois = data.num_rois;
    for (const auto& m : data.modalities) s.series_lengths.push_back(m.length);
    s.hidden_channels = config.hidden_channels;
    s.embed_channels = config.embed_channels;
    s.mlp_hidden = config.mlp_hidden;
    s.mask_init = config.mask_init;
    s.mask_zero_diagonal = config.mask_zero_diagonal;
    switch (choice.kind) {
        case ModelKind::Mgcn:
        case ModelKind::MgcnNoReg:
        case ModelKind::GcnSingle: s.fusion = FusionKind::Concat; break;
        case ModelKind::Mlp: s.fusion = FusionKind::RawFc; break;
        case ModelKind::Mvgcn: s.fusion = FusionKind::MeanPool; break;
    }
    if (choice.kind == ModelKind::GcnSingle && data.num_modalities() != 1) {
        throw ValidationError("make_spec: single-modality GCN needs a one-modality dataset");
    }
    s.validate();
    return s;
}

Split split_dataset(std::size_t n, double train_ratio, double val_ratio, double test_ratio, std::uint64_t seed) {
    if (n < 3) throw ValidationError("split_dataset: need at least 3 subjects, got " + std::to_string(n));
    if (train_ratio < 0.0 || val_ratio < 0.0 || test_ratio < 0.0 ||
        std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        throw ValidationError("split_dataset: ratios must be non-negative and sum to 1");
    }
    const double nn = static_cast<double>(n);
    const auto n_val = static_cast<std::size_t>(std::floor(nn * val_ratio + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(nn * test_ratio + 0.5 + 1e-9));
    if (n_val + n_test >= n) throw ValidationError("split_dataset: training split would be empty");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        // Rejection sampling keeps the shuffle identical across standard libraries.
        const std::uint64_t bound = i + 1, limit = std::numeric_limits<std::uint64_t>::max() -
                                                   std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t r;
        do r = rng();
        while (r >= limit);
        std::swap(order[i], order[r % bound]);
    }
    Split s;
    s.test.assign(order.begin(), order.begin() + n_test);
    s.val.assign(order.begin() + n_test, order.begin() + n_test + n_val);
    s.train.assign(order.begin() + n_test + n_val, order.end());
    return s;
}

LossTerms assemble_loss(Var prediction, Var target, const StackedEmbeddings* z, const SimilarityBlock* block,
                        const ParamVars& params, double l2, std::optional<double> beta, Var mask) {
    LossTerms t;
    t.mse = mse(prediction, target);
    Var total = t.mse;
    if (z != nullptr && block != nullptr) {
        t.manifold = manifold_penalty_trace(*z, *block);
        total = add(total, t.manifold);
    }
    std::vector<Var> weights;
    weights.insert(weights.end(), params.theta0.begin(), params.theta0.end());
    weights.insert(weights.end(), params.theta1.begin(), params.theta1.end());
    weights.insert(weights.end(), params.dense_weights.begin(), params.dense_weights.end());
    weights.push_back(params.out_weight);
    Var norm = sq_frobenius(weights.front());
    for (std::size_t i = 1; i < weights.size(); ++i) norm = add(norm, sq_frobenius(weights[i]));
    t.l2 = scale(norm, l2);
    total = add(total, t.l2);
    if (beta) {
        if (!mask.valid()) throw ValidationError("assemble_loss: beta given without a mask");
        t.l1 = scale(l1_norm(mask), *beta);
        total = add(total, t.l1);
    }
    t.total = total;
    return t;
}

SimilarityBlock build_similarity(const GraphCohort& cohort, std::span<const std::size_t> subjects, double eta_between,
                                 double eta_within) {
    std::vector<Tensor> sims;
    for (const auto& fcs : cohort.dense_fc) {
        std::vector<const Tensor*> chosen;
        for (std::size_t n : subjects) chosen.push_back(&fcs.at(n));
        sims.push_back(similarity_matrix(chosen));
    }
    return assemble_block(std::move(sims), eta_between, eta_within,
                          std::vector<std::size_t>(subjects.begin(), subjects.end()));
}

void Optimizer::step(std::vector<ModelParams::Entry>& entries, const std::vector<const Tensor*>& grads) {
    if (entries.size() != grads.size()) throw Error("optimizer: gradient count mismatch");
    const double lr = config_.learning_rate;
    if (config_.optimizer == OptimizerKind::GradientDescent) {
        for (std::size_t i = 0; i < entries.size(); ++i) dense::axpy(-lr, *grads[i], *entries[i].tensor);
        return;
    }
    if (m_.empty()) {
        for (const auto& e : entries) {
            m_.emplace_back(e.tensor->rows(), e.tensor->cols());
            v_.emplace_back(e.tensor->rows(), e.tensor->cols());
        }
    }
    ++t_;
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto p = entries[i].tensor->values().data();
        const auto& g = grads[i]->values();
        auto& m = m_[i].values();
        auto& v = v_[i].values();
        for (std::size_t k = 0; k < g.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.adam_epsilon);
        }
    }
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || pred.empty()) throw ValidationError("rmse: size mismatch or empty");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || pred.empty()) throw ValidationError("mae: size mismatch or empty");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

namespace {

// ParamVars in the same order as ModelParams::entries().
std::vector<Var> vars_in_entry_order(const ParamVars& v) {
    std::vector<Var> out;
    for (std::size_t m = 0; m < v.theta0.size(); ++m) {
        out.push_back(v.theta0[m]);
        out.push_back(v.theta1[m]);
    }
    for (std::size_t i = 0; i < v.dense_weights.size(); ++i) {
        out.push_back(v.dense_weights[i]);
        out.push_back(v.dense_biases[i]);
    }
    out.push_back(v.out_weight);
    out.push_back(v.out_bias);
    if (v.mask_v.valid()) out.push_back(v.mask_v);
    return out;
}

std::vector<double> labels_of(const Dataset& data, std::span<const std::size_t> subjects) {
    std::vector<double> out;
    for (std::size_t n : subjects) out.push_back(data.labels.at(n));
    return out;
}

} // namespace

std::vector<double> predict_raw(const TrainResult& model, const GraphCohort& cohort,
                                std::span<const std::size_t> subjects) {
    std::vector<double> p = predict(model.spec, model.params, cohort, subjects);
    for (double& v : p) v += model.label_mean;
    return p;
}

TrainResult train(const GraphCohort& cohort, const ModelSpec& spec, const TrainConfig& config,
                  std::span<const std::size_t> train_set, std::span<const std::size_t> val_set,
                  const TrainOptions& options) {
    config.validate();
    spec.validate();
    if (cohort.dataset == nullptr) throw ValidationError("train: cohort has no dataset");
    if (train_set.empty()) throw ValidationError("train: empty training split");
    const Dataset& data = *cohort.dataset;

    TrainResult r;
    r.spec = spec;
    const std::vector<double> train_labels = labels_of(data, train_set);
    r.label_mean = std::accumulate(train_labels.begin(), train_labels.end(), 0.0) /
                   static_cast<double>(train_labels.size());
    Tensor targets(train_set.size(), 1);
    for (std::size_t i = 0; i < train_set.size(); ++i) targets[i] = train_labels[i] - r.label_mean;

    r.params = init_params(spec, options.init_seed);
    const bool use_manifold = options.manifold && spec.fusion != FusionKind::RawFc;
    SimilarityBlock block;
    if (use_manifold) block = build_similarity(cohort, train_set, config.eta_between, config.eta_within);
    const std::vector<std::size_t> train_vec(train_set.begin(), train_set.end());

    const std::vector<double> val_labels = labels_of(data, val_set);
    auto score = [&](const ModelParams& p) {
        TrainResult probe;
        probe.spec = spec;
        probe.label_mean = r.label_mean;
        probe.params = p;
        if (!val_set.empty()) return rmse(predict_raw(probe, cohort, val_set), val_labels);
        return rmse(predict_raw(probe, cohort, train_set), train_labels);
    };

    ModelParams params = r.params;
    r.best_epoch = 0;
    r.best_score = options.until_converged ? std::numeric_limits<double>::quiet_NaN() : score(params);
    Optimizer optimizer(config);
    std::size_t since_best = 0, calm = 0;
    double previous_loss = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        try {
            Tape tape;
            ParamVars v = bind_params(tape, params, true);
            ForwardOutput out = forward(tape, spec, v, cohort, train_set);
            Var target = tape.constant_ref(targets);
            StackedEmbeddings stacked;
            if (use_manifold) stacked = stack_embeddings(out.embeddings, train_vec);
            std::optional<double> beta;
            if (spec.edge_mask) beta = config.mask_beta;
            LossTerms terms = assemble_loss(out.prediction, target, use_manifold ? &stacked : nullptr,
                                            use_manifold ? &block : nullptr, v, config.l2, beta, out.mask);
            tape.backward(terms.total);

            rec.loss = terms.total.value().item();
            rec.mse = terms.mse.value().item();
            rec.manifold = terms.manifold.valid() ? terms.manifold.value().item() : 0.0;
            rec.l2 = terms.l2.value().item();
            rec.l1 = terms.l1.valid() ? terms.l1.value().item() : 0.0;
            rec.train_rmse = std::sqrt(rec.mse);

            auto entries = params.entries();
            std::vector<const Tensor*> grads;
            for (Var p : vars_in_entry_order(v)) grads.push_back(&p.grad());
            optimizer.step(entries, grads);
            for (const auto& e : entries) {
                if (!e.tensor->all_finite()) throw NumericError("parameter " + e.name + " became non-finite");
            }
        } catch (const NumericError& e) {
            throw NumericError("train: diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }

        r.epochs_run = epoch;
        if (options.until_converged) {
            rec.val_rmse = std::numeric_limits<double>::quiet_NaN();
            const bool still = std::isfinite(previous_loss) &&
                               std::abs(rec.loss - previous_loss) <=
                                   config.mask_tolerance * std::max(std::abs(previous_loss), 1e-12);
            calm = still ? calm + 1 : 0;
            previous_loss = rec.loss;
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            r.curve.push_back(rec);
            if (calm >= config.patience) {
                r.converged = true;
                break;
            }
            continue;
        }

        const double s = score(params);
        rec.val_rmse = val_set.empty() ? std::numeric_limits<double>::quiet_NaN() : s;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        r.curve.push_back(rec);
        if (s < r.best_score) {
            r.best_score = s;
            r.best_epoch = epoch;
            r.params = params;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    if (options.until_converged) {
        r.params = std::move(params);
        r.best_epoch = r.epochs_run;
    }
    return r;
}

} // namespace mgcn
