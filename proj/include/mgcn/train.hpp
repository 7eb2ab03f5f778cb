#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mgcn/autodiff.hpp"
#include "mgcn/manifold.hpp"
#include "mgcn/model.hpp"

namespace mgcn {

enum class OptimizerKind { Adam, GradientDescent };

OptimizerKind parse_optimizer(const std::string& s);
std::string to_string(OptimizerKind k);

struct TrainConfig {
    double learning_rate = 1e-5;
    std::size_t max_epochs = 1000;
    std::size_t patience = 50;  // epochs without a new best validation RMSE
    double l2 = 1e-4;
    double eta_between = 1e-3;  // eta1
    double eta_within = 1e-3;   // eta2
    std::size_t knn_k = 10;
    KnnMode knn_mode = KnnMode::Union;
    ZeroVariancePolicy zero_variance = ZeroVariancePolicy::Strict;
    std::size_t hidden_channels = 128;
    std::size_t embed_channels = 32;
    std::vector<std::size_t> mlp_hidden = {1024, 2048};
    double train_ratio = 0.7;
    double val_ratio = 0.1;
    double test_ratio = 0.2;
    std::uint64_t seed = 0;
    std::size_t repeats = 10;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    // Edge-mask training.
    double mask_beta = 0.1;
    double mask_init = 0.01;
    bool mask_zero_diagonal = false;
    std::size_t mask_runs = 10;
    double mask_tolerance = 1e-6;  // relative loss change treated as converged
    double freq_threshold = 0.5;

    void validate() const;
};

// Which network to build and how to train it.
enum class ModelKind { Mgcn, MgcnNoReg, GcnSingle, Mlp, Mvgcn };

struct ModelChoice {
    ModelKind kind = ModelKind::Mgcn;
    std::string modality;  // GcnSingle only

    std::string label() const;
    bool uses_manifold() const { return kind == ModelKind::Mgcn; }
};

// "mgcn", "mgcn-noreg", "gcn:<modality>", "mlp", "mvgcn".
ModelChoice parse_model(const std::string& s);
std::vector<ModelChoice> parse_model_list(const std::string& csv);

// Spec for `choice` on a dataset that already holds exactly the modalities
// the model consumes.
ModelSpec make_spec(const ModelChoice& choice, const Dataset& data, const TrainConfig& config);

struct Split {
    std::vector<std::size_t> train, val, test;
};

// Sizes: test = N * test_ratio rounded half up, val = floor(N * val_ratio),
// the remainder goes to train (N = 10 -> 7/1/2, N = 9 -> 7/0/2). Subjects are assigned by a seeded shuffle.
Split split_dataset(std::size_t n, double train_ratio, double val_ratio, double test_ratio, std::uint64_t seed);

struct LossTerms {
    Var total, mse, manifold, l2, l1;
};

// MSE(pred, target) + trace(Z^T L Z) + l2 * sum ||W||_F^2 (+ beta * ||M||_1).
// Pass nullptrs to drop the manifold term; mask is used when beta is set.
LossTerms assemble_loss(Var prediction, Var target, const StackedEmbeddings* z, const SimilarityBlock* block,
                        const ParamVars& params, double l2, std::optional<double> beta = std::nullopt,
                        Var mask = {});

// S^(m) over `subjects` from their dense FC, assembled with the config etas.
SimilarityBlock build_similarity(const GraphCohort& cohort, std::span<const std::size_t> subjects, double eta_between,
                                 double eta_within);

class Optimizer {
public:
    explicit Optimizer(const TrainConfig& config) : config_(config) {}
    // One update of every entry from the matching gradient.
    void step(std::vector<ModelParams::Entry>& entries, const std::vector<const Tensor*>& grads);

private:
    TrainConfig config_;
    std::vector<Tensor> m_, v_;
    std::size_t t_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double mse = 0.0;
    double manifold = 0.0;
    double l2 = 0.0;
    double l1 = 0.0;
    double train_rmse = 0.0;
    double val_rmse = 0.0;  // NaN when there is no validation set
    double seconds = 0.0;
};

struct TrainOptions {
    bool manifold = true;
    std::uint64_t init_seed = 0;
    // Stop when the relative change of the training loss stays below
    // config.mask_tolerance for `patience` epochs, instead of validation-based
    // early stopping. Used for mask learning on all subjects.
    bool until_converged = false;
};

struct TrainResult {
    ModelSpec spec;
    ModelParams params;  // best epoch
    double label_mean = 0.0;
    std::vector<EpochRecord> curve;
    std::size_t best_epoch = 0;  // 0 = initialisation
    double best_score = 0.0;     // validation RMSE (training RMSE when there is no validation set)
    std::size_t epochs_run = 0;
    bool converged = false;
};

// Full-batch training on `train`, model selection on `val`. Labels are
// centred with the training mean. Throws NumericError on divergence.
TrainResult train(const GraphCohort& cohort, const ModelSpec& spec, const TrainConfig& config,
                  std::span<const std::size_t> train, std::span<const std::size_t> val, const TrainOptions& options);

// Raw-scale predictions of a trained model.
std::vector<double> predict_raw(const TrainResult& model, const GraphCohort& cohort,
                                std::span<const std::size_t> subjects);

double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);

} // namespace mgcn
