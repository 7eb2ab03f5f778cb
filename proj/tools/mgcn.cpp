#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mgcn/error.hpp"
#include "mgcn/evaluate.hpp"
#include "mgcn/format.hpp"
#include "mgcn/interpret.hpp"
#include "mgcn/io.hpp"
#include "mgcn/synth.hpp"
#include "mgcn/train.hpp"
#include "plot.hpp"

using namespace mgcn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t threads = 0;
    std::string config;
    TrainConfig train;
    SynthConfig synth;

    void load() {
        if (!config.empty()) load_config(config, &train, &synth);
        if (seed_given) train.seed = synth.seed = seed;
        train.validate();
    }
};

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> out;
    for (const auto& s : split(csv, ',')) {
        if (trim(s).empty()) continue;
        out.push_back(parse_double(trim(s), "--beta-grid"));
    }
    if (out.empty()) throw ValidationError("--beta-grid is empty");
    return out;
}

// The dataset a model consumes: single-modality GCNs see one modality.
Dataset model_view(const Dataset& data, const ModelChoice& choice) {
    if (choice.kind != ModelKind::GcnSingle) return data;
    return data.select_modalities({data.modality_index(choice.modality)});
}

GraphCohort cohort_for(const Dataset& view, const TrainConfig& c) {
    GraphCohort g = build_cohort(view, c.knn_k, c.knn_mode, c.zero_variance);
    if (!g.zero_variance_flags.empty()) {
        for (std::size_t k = 0; k < g.zero_variance_flags.size(); ++k)
            if (!g.zero_variance_flags[k].empty())
                std::cerr << "warning: constant ROI time series in subject " << view.subject_ids[k % view.num_subjects()]
                          << "\n";
    }
    return g;
}

Split run_split(std::size_t n, const TrainConfig& c, std::uint64_t seed) {
    return split_dataset(n, c.train_ratio, c.val_ratio, c.test_ratio, repeat_split_seed(seed, 0));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, text);
}

int cmd_simulate(Globals& g, const std::string& out) {
    const Dataset d = synth_generate(g.synth);
    const fs::path manifest = save_dataset(d, out);
    write_text(fs::path(out) / "config.txt", config_to_text(g.train, g.synth));
    std::cout << json{{"manifest", manifest.string()}, {"subjects", d.num_subjects()}, {"rois", d.num_rois},
                      {"modalities", d.num_modalities()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_train(Globals& g, const std::string& data_path, const std::string& out, const std::string& model,
              std::string curve) {
    const Dataset data = load_dataset(data_path);
    const ModelChoice choice = parse_model(model);
    const Dataset view = model_view(data, choice);
    const GraphCohort cohort = cohort_for(view, g.train);
    const ModelSpec spec = make_spec(choice, view, g.train);
    const Split split = run_split(view.num_subjects(), g.train, g.train.seed);
    TrainOptions options;
    options.manifold = choice.uses_manifold();
    options.init_seed = repeat_init_seed(g.train.seed, 0);
    const TrainResult r = train(cohort, spec, g.train, split.train, split.val, options);

    CheckpointInfo info;
    info.model = choice.label();
    for (const auto& m : view.modalities) info.modalities.push_back(m.name);
    info.seed = g.train.seed;
    save_checkpoint(out, r, info);

    std::string csv = "epoch,loss,mse,manifold,l2,l1,train_rmse,val_rmse,seconds\n";
    for (const auto& e : r.curve) {
        csv += std::to_string(e.epoch) + "," + format_double(e.loss) + "," + format_double(e.mse) + "," +
               format_double(e.manifold) + "," + format_double(e.l2) + "," + format_double(e.l1) + "," +
               format_double(e.train_rmse) + "," + (std::isfinite(e.val_rmse) ? format_double(e.val_rmse) : "") + "," +
               format_double(e.seconds) + "\n";
    }
    if (curve.empty()) curve = out + ".curve.csv";
    write_text(curve, csv);

    json summary{{"checkpoint", out}, {"curve", curve}, {"model", info.model}, {"best_epoch", r.best_epoch},
                 {"epochs_run", r.epochs_run}};
    if (!split.test.empty()) {
        std::vector<double> truth;
        for (std::size_t n : split.test) truth.push_back(view.labels[n]);
        const auto pred = predict_raw(r, cohort, split.test);
        summary["test_rmse"] = rmse(pred, truth);
        summary["test_mae"] = mae(pred, truth);
    }
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_evaluate(Globals& g, const std::string& data_path, std::string models, std::size_t repeats,
                 const std::string& out) {
    const Dataset data = load_dataset(data_path);
    if (models.empty()) {
        models = "mgcn,mgcn-noreg";
        for (const auto& m : data.modalities) models += ",gcn:" + m.name;
        models += ",mlp,mvgcn";
    }
    TrainConfig c = g.train;
    if (repeats > 0) c.repeats = repeats;
    const EvalReport report = bootstrap_evaluate(data, c, parse_model_list(models), g.threads);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    write_text(out + ".csv", report.to_csv());
    write_text(out + "_summary.csv", report.summary_csv());
    write_text(out + ".json", report.to_json());
    std::cout << report.summary_csv();
    return 0;
}

int cmd_gradram(Globals& g, const std::string& ckpt, const std::string& data_path, double top,
                const std::string& which, const std::string& out) {
    CheckpointInfo info;
    const TrainResult model = load_checkpoint(ckpt, &info);
    const Dataset data = load_dataset(data_path);
    std::vector<std::size_t> mods;
    for (const auto& name : info.modalities) mods.push_back(data.modality_index(name));
    const Dataset view = data.select_modalities(mods);
    const GraphCohort cohort = cohort_for(view, g.train);
    std::vector<std::size_t> subjects;
    if (which == "test") subjects = run_split(view.num_subjects(), g.train, info.seed).test;
    const GradRamMap map = grad_ram(model, cohort, subjects, top);
    for (const auto& w : map.warnings) std::cerr << "warning: " << w << "\n";

    const std::vector<std::string> networks =
        view.fn_labels.empty() ? std::vector<std::string>(view.num_rois, "") : view.fn_labels;
    std::string csv = "roi,network";
    for (const auto& m : map.modalities) csv += "," + m + "_raw," + m + "_zscore";
    csv += "\n";
    for (std::size_t q = 0; q < view.num_rois; ++q) {
        csv += std::to_string(q) + "," + networks[q];
        for (std::size_t m = 0; m < map.raw.size(); ++m)
            csv += "," + format_double(map.raw[m][q]) + "," + format_double(map.zscore[m][q]);
        csv += "\n";
    }
    write_text(out + ".csv", csv);
    std::string top_csv = "modality,rank,roi,network,raw,zscore\n";
    for (std::size_t m = 0; m < map.top.size(); ++m)
        for (std::size_t k = 0; k < map.top[m].size(); ++k) {
            const std::size_t q = map.top[m][k];
            top_csv += map.modalities[m] + "," + std::to_string(k + 1) + "," + std::to_string(q) + "," + networks[q] +
                       "," + format_double(map.raw[m][q]) + "," + format_double(map.zscore[m][q]) + "\n";
        }
    write_text(out + "_top.csv", top_csv);
    std::cout << json{{"attribution", out + ".csv"}, {"selected", out + "_top.csv"}, {"top", map.top}}.dump() << "\n";
    return 0;
}

int cmd_mask(Globals& g, const std::string& data_path, const std::string& grid, std::size_t runs, double threshold,
             const std::string& fn_path, const std::string& out) {
    Dataset data = load_dataset(data_path);
    if (!fn_path.empty()) {
        data.fn_labels.clear();
        for (const auto& l : split(read_file(fn_path), '\n'))
            if (!trim(l).empty()) data.fn_labels.push_back(trim(l));
        if (data.fn_labels.size() != data.num_rois) {
            throw ValidationError(fn_path + ": " + std::to_string(data.fn_labels.size()) + " labels for " +
                                  std::to_string(data.num_rois) + " ROIs");
        }
    }
    const std::vector<double> betas = parse_grid(grid);
    if (runs == 0) runs = g.train.mask_runs;
    if (threshold <= 0.0) threshold = g.train.freq_threshold;
    const GraphCohort cohort = cohort_for(data, g.train);
    const auto results = mask_sweep(cohort, g.train, betas, runs, threshold, g.train.seed, g.threads);

    fs::create_directories(out);
    std::string csv = "beta,sparsity,mean_run_sparsity,edges\n";
    json meta{{"runs", runs}, {"threshold", threshold}, {"seed", g.train.seed}, {"betas", json::array()}};
    if (data.fn_labels.empty()) std::cerr << "warning: no network labels; allegiance matrices skipped\n";
    for (const auto& r : results) {
        const std::string tag = "beta_" + short_number(r.beta);
        const fs::path dir = fs::path(out) / tag;
        fs::create_directories(dir);
        write_matrix_csv(dir / "consensus.csv", r.consensus.mask);
        write_matrix_csv(dir / "frequency.csv", r.consensus.frequency);
        double mean_run = 0.0;
        json run_meta = json::array();
        for (const auto& k : r.runs) {
            mean_run += k.sparsity / static_cast<double>(r.runs.size());
            run_meta.push_back({{"sparsity", k.sparsity}, {"epochs", k.epochs_run}, {"converged", k.converged},
                                {"final_loss", k.final_loss}});
        }
        std::size_t edges = 0;
        for (std::size_t i = 0; i < data.num_rois; ++i)
            for (std::size_t j = i + 1; j < data.num_rois; ++j) edges += r.consensus.mask(i, j) != 0.0;
        json entry{{"beta", r.beta}, {"sparsity", r.sparsity}, {"edges", edges}, {"runs", run_meta},
                   {"consensus", (dir / "consensus.csv").string()}, {"frequency", (dir / "frequency.csv").string()}};
        if (!data.fn_labels.empty()) {
            const AllegianceMatrix a = module_allegiance(r.consensus.mask, data.fn_labels);
            write_matrix_csv(dir / "allegiance.csv", a.counts);
            std::string names;
            for (const auto& n : a.networks) names += n + "\n";
            write_text(dir / "networks.txt", names);
            entry["allegiance"] = (dir / "allegiance.csv").string();
            entry["networks"] = a.networks;
        }
        meta["betas"].push_back(entry);
        csv += format_double(r.beta) + "," + format_double(r.sparsity) + "," + format_double(mean_run) + "," +
               std::to_string(edges) + "\n";
    }
    write_text(fs::path(out) / "sparsity.csv", csv);
    write_text(fs::path(out) / "masks.json", meta.dump(2) + "\n");
    std::cout << csv;
    return 0;
}

void print_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-modal graph convolutional regression with manifold regularisation"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Master seed (overrides train.seed and synth.seed)")
        ->each([&g](const std::string&) { g.seed_given = true; });
    app.add_option("--threads", g.threads, "Worker threads for repeats and mask runs (0 = all cores)");
    app.add_option("--config", g.config, "key = value config file");

    std::string out, data, model = "mgcn", curve, models, ckpt, which = "all", grid = "0.05,0.1,0.5,1,5,10",
                     fn_labels, in;
    std::size_t repeats = 0, runs = 0;
    double top = 0.05, threshold = 0.0;

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort");
    simulate->add_option("--out", out, "Output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train one model on one split");
    train_cmd->add_option("--data", data, "Dataset manifest")->required();
    train_cmd->add_option("--out", out, "Checkpoint path")->required();
    train_cmd->add_option("--model", model, "mgcn, mgcn-noreg, gcn:<modality>, mlp or mvgcn");
    train_cmd->add_option("--curve", curve, "Training curve CSV (default <out>.curve.csv)");

    auto* evaluate = app.add_subcommand("evaluate", "Bootstrap comparison of several models");
    evaluate->add_option("--data", data, "Dataset manifest")->required();
    evaluate->add_option("--models", models, "Comma-separated models; the first is the reference");
    evaluate->add_option("--repeats", repeats, "Bootstrap repeats (default train.repeats)");
    evaluate->add_option("--out", out, "Report path prefix")->default_val("report");

    auto* gradram = app.add_subcommand("gradram", "Grad-RAM ROI attribution of a checkpoint");
    gradram->add_option("--ckpt", ckpt, "Checkpoint")->required();
    gradram->add_option("--data", data, "Dataset manifest")->required();
    gradram->add_option("--top", top, "Fraction of ROIs to select")->default_val(0.05);
    gradram->add_option("--split", which, "Subjects to use")->check(CLI::IsMember({"all", "test"}));
    gradram->add_option("--out", out, "Output path prefix")->default_val("gradram");

    auto* mask = app.add_subcommand("mask", "Edge-mask learning over a beta grid");
    mask->add_option("--data", data, "Dataset manifest")->required();
    mask->add_option("--beta-grid", grid, "Comma-separated beta values");
    mask->add_option("--runs", runs, "Runs per beta (default train.mask_runs)");
    mask->add_option("--freq-threshold", threshold, "Consensus threshold (default train.freq_threshold)");
    mask->add_option("--fn-labels", fn_labels, "ROI network labels, one per line");
    mask->add_option("--out", out, "Output directory")->default_val("masks");

    auto* plot = app.add_subcommand("plot", "Render a matrix CSV, curve CSV or report JSON to PNG");
    plot->add_option("--in", in, "Input file")->required();
    plot->add_option("--out", out, "PNG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        g.load();
        if (*simulate) return cmd_simulate(g, out);
        if (*train_cmd) return cmd_train(g, data, out, model, curve);
        if (*evaluate) return cmd_evaluate(g, data, models, repeats, out);
        if (*gradram) return cmd_gradram(g, ckpt, data, top, which, out);
        if (*mask) return cmd_mask(g, data, grid, runs, threshold, fn_labels, out);
        if (*plot) {
            plot::plot_file(in, out);
            std::cout << json{{"png", out}}.dump() << "\n";
            return 0;
        }
    } catch (const ValidationError& e) {
        print_error("validation", e.what());
        return 1;
    } catch (const NumericError& e) {
        print_error("numeric", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("runtime", e.what());
        return 1;
    }
    return 0;
}
