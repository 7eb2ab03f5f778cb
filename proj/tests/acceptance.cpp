// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance <mgcn-cli> <smoke-config> [criterion ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <unistd.h>

#include "json.hpp"
#include "mgcn/evaluate.hpp"
#include "mgcn/graph.hpp"
#include "mgcn/interpret.hpp"
#include "mgcn/io.hpp"
#include "mgcn/synth.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace mgcn;
using mgcn::testing::random_dataset;
using mgcn::testing::random_symmetric;
using mgcn::testing::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::size_t threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::vector<Var> all_params(const ParamVars& v) {
    std::vector<Var> out;
    for (const auto* group : {&v.theta0, &v.theta1, &v.dense_weights, &v.dense_biases})
        out.insert(out.end(), group->begin(), group->end());
    out.push_back(v.out_weight);
    out.push_back(v.out_bias);
    if (v.mask_v.valid()) out.push_back(v.mask_v);
    return out;
}

bool near_relu_kink(const Tape& tape, double margin) {
    for (std::size_t id = 0; id < tape.size(); ++id) {
        if (tape.kind(id) != OpKind::Relu) continue;
        for (double x : tape.value(tape.inputs(id).front()).values())
            if (std::abs(x) < margin) return true;
    }
    return false;
}

Outcome gradients() {
    std::mt19937_64 rng(101);
    double worst[2] = {0.0, 0.0};
    int checked[2] = {0, 0}, skipped = 0;
    for (int masked = 0; masked < 2; ++masked) {
        while (checked[masked] < 20) {
            if (skipped > 5000) return {false, "could not draw kink-free instances"};
            Dataset data = random_dataset(rng, 4, 6, {7, 8});
            TrainConfig cfg;
            cfg.knn_k = 3;
            cfg.hidden_channels = 3;
            cfg.embed_channels = 2;
            cfg.mlp_hidden = {5, 4};
            cfg.eta_between = 0.3;
            cfg.eta_within = 0.7;
            cfg.l2 = 1e-2;
            GraphCohort cohort = build_cohort(data, cfg.knn_k, cfg.knn_mode, cfg.zero_variance);
            ModelSpec spec = make_spec(parse_model("mgcn"), data, cfg);
            spec.edge_mask = masked != 0;
            ModelParams params = init_params(spec, rng());
            params.dense_biases[0] = random_tensor(rng, 1, 5, -0.1, 0.1);
            params.dense_biases[1] = random_tensor(rng, 1, 4, -0.1, 0.1);
            if (masked) params.mask_v = random_tensor(rng, 6, 6, -1.0, 1.0);

            const std::vector<std::size_t> subjects{0, 1, 2, 3};
            Tape tape;
            ParamVars vars = bind_params(tape, params, true);
            ForwardOutput out = forward(tape, spec, vars, cohort, subjects);
            StackedEmbeddings z = stack_embeddings(out.embeddings, subjects);
            SimilarityBlock block = build_similarity(cohort, subjects, cfg.eta_between, cfg.eta_within);
            Tensor y(4, 1);
            for (std::size_t n = 0; n < 4; ++n) y(n, 0) = data.labels[n];
            std::optional<double> beta;
            if (masked) beta = 0.05;
            LossTerms loss = assemble_loss(out.prediction, tape.constant(y), &z, &block, vars, cfg.l2, beta, out.mask);
            if (near_relu_kink(tape, 1e-3)) {
                ++skipped;
                continue;
            }
            for (Var p : all_params(vars))
                worst[masked] = std::max(worst[masked], gradient_check(tape, loss.total, p, 1e-5, 1e-4).max_rel_error);
            ++checked[masked];
        }
    }
    const bool ok = worst[0] < 1e-4 && worst[1] < 1e-4;
    return {ok, fmt("max rel error %.2e (full), %.2e (masked), %d draws skipped near kinks", worst[0], worst[1], skipped)};
}

Outcome trace_identity() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> eta(0.0, 2.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 1 + trial % 3, n = 2 + trial % 7, width = 1 + trial % 6;
        std::vector<Tensor> sims, z;
        for (std::size_t k = 0; k < m; ++k) {
            Tensor s = random_symmetric(rng, n);
            for (std::size_t i = 0; i < n; ++i) s(i, i) = 1.0;
            sims.push_back(std::move(s));
            z.push_back(random_tensor(rng, n, width));
        }
        double e1 = eta(rng), e2 = eta(rng);
        if (trial % 4 == 0) e2 = 2.0 * e1 + 0.1;
        const double pairwise = manifold_penalty_pairwise(z, sims, e1, e2);
        SimilarityBlock block = assemble_block(sims, e1, e2);
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : z) vars.push_back(tape.constant(t));
        const double traced = manifold_penalty_trace(stack_embeddings(vars, block.subjects), block).value().item();
        worst = std::max(worst, std::abs(traced - pairwise) / std::max(std::abs(pairwise), 1e-300));
    }
    return {worst <= 1e-10, fmt("max relative difference %.2e", worst)};
}

Outcome graph_operators() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double max_radius = 0.0, min_eig = 1e300, max_eig = -1e300;
    bool symmetric = true;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + trial % 29;
        const double density = u(rng);
        Tensor a(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (u(rng) < density) a(i, j) = a(j, i) = u(rng);

        auto eigenvalues = [](const Tensor& t) {
            Eigen::MatrixXd e(t.rows(), t.cols());
            for (std::size_t i = 0; i < t.rows(); ++i)
                for (std::size_t j = 0; j < t.cols(); ++j) e(i, j) = t(i, j);
            return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(e, Eigen::EigenvaluesOnly).eigenvalues();
        };
        max_radius = std::max(max_radius, eigenvalues(renorm_operator(a)).cwiseAbs().maxCoeff());
        const auto lap = eigenvalues(normalized_laplacian(a));
        min_eig = std::min(min_eig, lap.minCoeff());
        max_eig = std::max(max_eig, lap.maxCoeff());

        Tensor fc = pearson_fc(random_tensor(rng, n, 12 + trial % 20));
        const std::size_t k = 1 + trial % (n - 1 == 0 ? 1 : n - 1);
        const KnnMode mode = trial % 2 ? KnnMode::Union : KnnMode::Intersection;
        symmetric = symmetric && dense::is_symmetric(knn_sparsify(fc, k, mode));
    }
    const bool ok = max_radius <= 1.0 + 1e-10 && min_eig >= -1e-9 && max_eig <= 2.0 + 1e-9 && symmetric;
    return {ok, fmt("spectral radius <= %.12f, laplacian spectrum in [%.2e, %.12f], knn %s", max_radius, min_eig,
                    max_eig, symmetric ? "symmetric" : "ASYMMETRIC")};
}

TrainConfig small_net() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.max_epochs = 300;
    c.patience = 50;
    c.hidden_channels = 16;
    c.embed_channels = 4;
    c.mlp_hidden = {64, 32};
    c.eta_within = 1e-4;
    c.eta_between = 1e-6;
    return c;
}

Outcome model_ordering() {
    SynthConfig sc;
    TrainConfig cfg = small_net();
    cfg.repeats = 10;
    const Dataset data = synth_generate(sc);
    const EvalReport r =
        bootstrap_evaluate(data, cfg, parse_model_list("mgcn,mgcn-noreg,gcn:emoid,gcn:nback"), threads());
    const ModelSummary& full = r.model("mgcn");
    bool ok = true;
    std::string detail = fmt("mgcn %.3f", full.rmse_mean);
    for (const char* name : {"mgcn-noreg", "gcn:emoid", "gcn:nback"}) {
        const ModelSummary& other = r.model(name);
        const bool better = full.rmse_mean < other.rmse_mean;
        const bool significant = std::string(name).starts_with("gcn:") ? other.p_rmse < 0.05 : true;
        ok = ok && better && significant;
        detail += fmt("; %s %.3f (p %.4f)%s", name, other.rmse_mean, other.p_rmse,
                      better ? (significant ? "" : " not significant") : " NOT WORSE");
    }
    return {ok, detail};
}

Outcome gradram_recovery() {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthConfig sc;
        sc.planted_rois = 3;
        sc.roi_signal = 2.0;
        sc.planted_edges = 0;
        sc.seed = seed;
        const Dataset data = synth_generate(sc);
        TrainConfig cfg = small_net();
        cfg.hidden_channels = 32;
        cfg.embed_channels = 16;
        GraphCohort cohort = build_cohort(data, cfg.knn_k, cfg.knn_mode, cfg.zero_variance);
        Split split = split_dataset(data.num_subjects(), cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, seed);
        TrainOptions opt;
        opt.init_seed = seed;
        TrainResult model = train(cohort, make_spec(parse_model("mgcn"), data, cfg), cfg, split.train, split.val, opt);
        GradRamMap map = grad_ram(model, cohort, {}, 0.05);
        const std::set<std::size_t> planted(data.provenance.planted_rois.begin(), data.provenance.planted_rois.end());
        double precision = 0.0;
        for (const auto& top : map.top) {
            const auto hits = std::count_if(top.begin(), top.end(), [&](std::size_t q) { return planted.count(q) != 0; });
            precision += double(hits) / double(top.size());
        }
        total += precision / double(map.top.size());
    }
    const double mean = total / 10.0;
    return {mean >= 0.8, fmt("mean precision %.3f over 10 seeds (3 of 32 ROIs planted)", mean)};
}

TrainConfig mask_net() {
    TrainConfig c = small_net();
    c.patience = 20;
    c.mask_tolerance = 1e-6;
    c.mask_init = 0.01;
    return c;
}

SynthConfig edge_cohort(double edge_signal) {
    SynthConfig sc;
    sc.planted_rois = 0;
    sc.roi_signal = 0.0;
    sc.planted_edges = 20;
    sc.edge_signal = edge_signal;
    return sc;
}

Outcome mask_sparsity_decay() {
    const Dataset data = synth_generate(edge_cohort(2.0));
    const TrainConfig cfg = mask_net();
    GraphCohort cohort = build_cohort(data, cfg.knn_k, cfg.knn_mode, cfg.zero_variance);
    const std::vector<double> betas{0.05, 0.1, 0.5, 1.0, 5.0, 10.0};
    const auto res = mask_sweep(cohort, cfg, betas, 10, 0.5, 0, threads());
    int inversions = 0;
    std::string detail = "density";
    for (std::size_t i = 0; i < res.size(); ++i) {
        if (i > 0 && res[i].sparsity > res[i - 1].sparsity) ++inversions;
        detail += fmt(" %g:%.4f", res[i].beta, res[i].sparsity);
    }
    // An empty mask across the whole grid would pass vacuously.
    const bool ok = inversions <= 1 && res.back().sparsity < 0.01 && res.front().sparsity > 0.0;
    return {ok, detail + fmt("; %d inversions", inversions)};
}

Outcome edge_recovery() {
    const Dataset data = synth_generate(edge_cohort(1.0));
    const TrainConfig cfg = mask_net();
    GraphCohort cohort = build_cohort(data, cfg.knn_k, cfg.knn_mode, cfg.zero_variance);
    const std::vector<double> betas{0.002, 0.005, 0.01, 0.02};
    const auto res = mask_sweep(cohort, cfg, betas, 10, 0.5, 0, threads());
    const auto chosen = std::min_element(res.begin(), res.end(), [](const auto& a, const auto& b) {
        return std::abs(a.sparsity - 0.05) < std::abs(b.sparsity - 0.05);
    });
    std::size_t hits = 0;
    for (auto [i, j] : data.provenance.planted_edges) hits += chosen->consensus.mask(i, j) != 0.0;
    const double recall = double(hits) / double(data.provenance.planted_edges.size());
    return {recall >= 0.6, fmt("beta %g gives density %.4f; %zu/%zu planted edges recovered", chosen->beta,
                               chosen->sparsity, hits, data.provenance.planted_edges.size())};
}

Outcome ttest_oracle() {
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 2, 4, 4, 6};
    const TTestResult r = paired_ttest(a, b);
    return {std::abs(r.p - 0.0705) <= 1e-3 && std::abs(r.t + 2.449) <= 1e-3, fmt("t %.6f, p %.6f", r.t, r.p)};
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Outcome reductions() {
    SynthConfig sc;
    sc.num_subjects = 20;
    sc.num_rois = 12;
    sc.modalities = {{"a", 30}, {"b", 34}};
    sc.planted_rois = 2;
    sc.planted_edges = 4;
    sc.num_communities = 3;
    const Dataset one = synth_generate(sc).select_modalities({1});
    TrainConfig cfg = small_net();
    cfg.knn_k = 4;
    cfg.max_epochs = 40;
    cfg.eta_between = cfg.eta_within = 0.0;
    GraphCohort cohort = build_cohort(one, cfg.knn_k, cfg.knn_mode, cfg.zero_variance);
    Split split = split_dataset(20, 0.7, 0.1, 0.2, 5);
    auto run = [&](const char* label) {
        ModelChoice c = parse_model(label);
        TrainOptions opt;
        opt.manifold = c.uses_manifold();
        opt.init_seed = 9;
        return train(cohort, make_spec(c, one, cfg), cfg, split.train, split.val, opt);
    };
    const TrainResult a = run("mgcn"), b = run("gcn:b");
    bool same = a.curve.size() == b.curve.size() && !a.curve.empty();
    for (std::size_t e = 0; same && e < a.curve.size(); ++e)
        same = a.curve[e].loss == b.curve[e].loss && a.curve[e].mse == b.curve[e].mse;

    // Edge mask with V = 0 against diag(P) propagation done by hand.
    const Dataset data = synth_generate(sc);
    GraphCohort full = build_cohort(data, cfg.knn_k, cfg.knn_mode, cfg.zero_variance);
    ModelSpec spec = make_spec(parse_model("mgcn"), data, cfg);
    spec.edge_mask = true;
    ModelParams params = init_params(spec, 4);
    params.mask_v = Tensor(12, 12);
    std::vector<std::size_t> subjects(20);
    for (std::size_t n = 0; n < 20; ++n) subjects[n] = n;
    Tape tape;
    ParamVars vars = bind_params(tape, params, false);
    ForwardOutput out = forward(tape, spec, vars, full, subjects);
    bool exact = true;
    std::vector<Tensor> literal;
    for (std::size_t m = 0; m < 2; ++m) {
        Tensor emb(20, spec.embedding_width());
        for (std::size_t n = 0; n < 20; ++n) {
            const Tensor& p = full.propagation[m][n];
            Tensor diag(12, 12);
            for (std::size_t i = 0; i < 12; ++i) diag(i, i) = p(i, i);
            Tensor h = dense::matmul(diag, dense::matmul(data.series[m][n], params.theta0[m]));
            for (double& v : h.values()) v = std::max(v, 0.0);
            Tensor z = dense::matmul(diag, dense::matmul(h, params.theta1[m]));
            for (std::size_t i = 0; i < z.size(); ++i) emb(n, i) = logistic(z[i]);
        }
        exact = exact && emb == out.embeddings[m].value();
        literal.push_back(std::move(emb));
    }
    Tape head;
    ParamVars hv = bind_params(head, params, false);
    std::vector<Var> parts{head.constant(literal[0]), head.constant(literal[1])};
    exact = exact && fuse_predict(hstack(parts), hv).value() == out.prediction.value();
    return {same && exact, fmt("single-modality trajectory %s over %zu epochs; V=0 forward %s",
                               same ? "identical" : "DIFFERS", a.curve.size(), exact ? "exact" : "DIFFERS")};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Every cell must parse as a number, except the header row and the label
// columns named in it. Returns the number of data rows.
std::size_t check_csv(const fs::path& p, bool header) {
    static const std::set<std::string> labels{"model", "modality", "network"};
    std::istringstream in(slurp(p));
    std::string line;
    std::size_t rows = 0;
    std::vector<bool> text;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        if (text.empty()) {
            text.assign(cells.size(), false);
            if (header) {
                for (std::size_t i = 0; i < cells.size(); ++i) text[i] = labels.count(cells[i]) != 0;
                continue;
            }
        }
        if (cells.size() != text.size()) throw std::runtime_error(p.string() + ": ragged row");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (text[i] || cells[i].empty()) continue;
            std::size_t used = 0;
            std::stod(cells[i], &used);
            if (used != cells[i].size()) throw std::runtime_error(p.string() + ": bad number " + cells[i]);
        }
        ++rows;
    }
    if (rows == 0) throw std::runtime_error(p.string() + ": no data rows");
    return rows;
}

void check_png(const fs::path& p) {
    const std::string s = slurp(p);
    if (s.size() < 8 || s.compare(0, 8, "\x89PNG\r\n\x1a\n") != 0) throw std::runtime_error(p.string() + ": not a PNG");
}

Outcome cli_pipeline(const std::string& cli, const std::string& config) {
    const fs::path dir = fs::temp_directory_path() / ("mgcn_accept_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string base = "\"" + cli + "\" --config \"" + config + "\" --seed 3 ";
    const std::string d = dir.string();
    const std::vector<std::string> steps{
        "simulate --out " + d + "/data",
        "train --data " + d + "/data/manifest.json --out " + d + "/model.ckpt > " + d + "/train.json",
        "evaluate --data " + d + "/data/manifest.json --out " + d + "/report",
        "gradram --ckpt " + d + "/model.ckpt --data " + d + "/data/manifest.json --out " + d + "/gradram",
        "mask --data " + d + "/data/manifest.json --beta-grid 0.01,1 --fn-labels " + d + "/data/fn_labels.txt --out " + d +
            "/masks",
        "plot --in " + d + "/report.json --out " + d + "/report.png",
        "plot --in " + d + "/model.ckpt.curve.csv --out " + d + "/curve.png",
        "plot --in " + d + "/masks/sparsity.csv --out " + d + "/sparsity.png",
        "plot --in " + d + "/masks/beta_0.01/consensus.csv --out " + d + "/consensus.png",
    };
    for (const auto& s : steps) {
        const std::string cmd = base + s + " 2>> " + d + "/stderr.txt";
        if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + s};
    }
    try {
        const Dataset data = load_dataset(dir / "data/manifest.json");
        CheckpointInfo info;
        const TrainResult model = load_checkpoint(dir / "model.ckpt", &info);
        const auto trained = nlohmann::json::parse(slurp(dir / "train.json"));
        const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
        const auto masks = nlohmann::json::parse(slurp(dir / "masks/masks.json"));
        if (!trained.contains("test_rmse") || report.at("models").empty())
            throw std::runtime_error("reports lack expected fields");
        check_csv(dir / "model.ckpt.curve.csv", true);
        check_csv(dir / "report.csv", true);
        check_csv(dir / "report_summary.csv", true);
        if (check_csv(dir / "gradram.csv", true) != data.num_rois) throw std::runtime_error("gradram rows");
        check_csv(dir / "gradram_top.csv", true);
        check_csv(dir / "masks/sparsity.csv", true);
        for (const char* tag : {"beta_0.01", "beta_1"}) {
            if (check_csv(dir / "masks" / tag / "consensus.csv", false) != data.num_rois)
                throw std::runtime_error("consensus shape");
            check_csv(dir / "masks" / tag / "frequency.csv", false);
            check_csv(dir / "masks" / tag / "allegiance.csv", false);
        }
        for (const char* png : {"report.png", "curve.png", "sparsity.png", "consensus.png"}) check_png(dir / png);
        if (info.modalities.size() != data.num_modalities() || model.spec.num_rois != data.num_rois)
            throw std::runtime_error("checkpoint does not match the dataset");
    } catch (const std::exception& e) {
        return {false, std::string("artifact check failed: ") + e.what()};
    }
    fs::remove_all(dir);
    return {true, "all artifacts parsed"};
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: %s <mgcn-cli> <smoke-config> [criterion ...]\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1], config = argv[2];
    struct Criterion {
        int id;
        const char* name;
        double limit_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient check", 30, gradients},
        {2, "trace and pairwise penalty agree", 10, trace_identity},
        {3, "graph operator spectra", 20, graph_operators},
        {4, "model ordering on synthetic cohort", 900, model_ordering},
        {5, "Grad-RAM recovers planted ROIs", 600, gradram_recovery},
        {6, "mask density decays with beta", 1200, mask_sparsity_decay},
        {7, "mask recovers planted edges", 1200, edge_recovery},
        {8, "paired t-test reference", 10, ttest_oracle},
        {9, "reductions", 60, reductions},
        {10, "CLI pipeline on smoke config", 300, [&] { return cli_pipeline(cli, config); }},
    };
    std::set<int> only;
    for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.limit_seconds) {
            o.pass = false;
            o.detail += fmt("; over the %.0f s limit", c.limit_seconds);
        }
        failed += !o.pass;
        std::printf("criterion %2d %s: %s: %s (%.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
