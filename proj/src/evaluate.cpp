#include "mgcn/evaluate.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <deque>
#include <limits>
#include <memory>
#include <random>

#include "json.hpp"
#include "mgcn/error.hpp"
#include "mgcn/format.hpp"
#include "mgcn/parallel.hpp"

namespace mgcn {

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("paired_ttest: samples differ in length");
    if (a.size() < 2) throw ValidationError("paired_ttest: need at least 2 pairs");
    const std::size_t n = a.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
    TTestResult r;
    r.df = n - 1;
    if (ss == 0.0) {
        r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
        r.p = mean == 0.0 ? 1.0 : 0.0;
        return r;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    const double df = static_cast<double>(r.df);
    r.p = boost::math::ibeta(df / 2.0, 0.5, df / (df + r.t * r.t));
    return r;
}

const ModelSummary& EvalReport::model(const std::string& name) const {
    for (const auto& m : models)
        if (m.name == name) return m;
    throw ValidationError("report has no model '" + name + "'");
}

std::string EvalReport::to_csv() const {
    std::string out = "model,repeat,rmse,mae,seconds_per_epoch,epochs,best_epoch,diverged\n";
    for (const auto& m : models) {
        for (std::size_t r = 0; r < m.repeats.size(); ++r) {
            const auto& x = m.repeats[r];
            out += m.name + "," + std::to_string(r) + "," + format_double(x.rmse) + "," + format_double(x.mae) + "," +
                   format_double(x.seconds_per_epoch) + "," + std::to_string(x.epochs) + "," +
                   std::to_string(x.best_epoch) + "," + (x.diverged ? "1" : "0") + "\n";
        }
    }
    return out;
}

std::string EvalReport::summary_csv() const {
    std::string out = "model,rmse_mean,rmse_std,mae_mean,mae_std,p_rmse,p_mae,t_rmse,diverged\n";
    for (const auto& m : models) {
        out += m.name + "," + format_double(m.rmse_mean) + "," + format_double(m.rmse_std) + "," +
               format_double(m.mae_mean) + "," + format_double(m.mae_std) + "," + format_double(m.p_rmse) + "," +
               format_double(m.p_mae) + "," + format_double(m.t_rmse) + "," + std::to_string(m.diverged) + "\n";
    }
    return out;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["repeats"] = repeats;
    j["seed"] = seed;
    j["reference"] = models.empty() ? "" : models.front().name;
    j["warnings"] = warnings;
    j["models"] = nlohmann::json::array();
    for (const auto& m : models) {
        nlohmann::json e;
        e["name"] = m.name;
        e["rmse_mean"] = m.rmse_mean;
        e["rmse_std"] = m.rmse_std;
        e["mae_mean"] = m.mae_mean;
        e["mae_std"] = m.mae_std;
        e["seconds_per_epoch_mean"] = m.seconds_mean;
        e["seconds_per_epoch_std"] = m.seconds_std;
        e["p_rmse"] = m.p_rmse;
        e["p_mae"] = m.p_mae;
        e["t_rmse"] = std::isfinite(m.t_rmse) ? nlohmann::json(m.t_rmse) : nlohmann::json(nullptr);
        e["diverged"] = m.diverged;
        j["models"].push_back(e);
    }
    return j.dump(2) + "\n";
}

std::uint64_t repeat_split_seed(std::uint64_t master, std::size_t repeat) { return derive_seed(master, 2 * repeat); }
std::uint64_t repeat_init_seed(std::uint64_t master, std::size_t repeat) {
    return derive_seed(master, 2 * repeat + 1);
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (xs.empty()) {
        mean = std::numeric_limits<double>::quiet_NaN();
        return;
    }
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return;
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size() - 1));
}

} // namespace

EvalReport bootstrap_evaluate(const Dataset& data, const TrainConfig& config, const std::vector<ModelChoice>& models,
                              std::size_t threads) {
    config.validate();
    data.validate();
    if (models.empty()) throw ValidationError("evaluate: no models");

    // One cohort for all multi-modal models, one per single-modality baseline.
    std::deque<Dataset> views;
    std::deque<GraphCohort> cohorts;
    std::vector<const GraphCohort*> cohort_of(models.size());
    const GraphCohort& full = cohorts.emplace_back(build_cohort(data, config.knn_k, config.knn_mode, config.zero_variance));
    for (std::size_t k = 0; k < models.size(); ++k) {
        if (models[k].kind != ModelKind::GcnSingle) {
            cohort_of[k] = &full;
            continue;
        }
        const Dataset& view = views.emplace_back(data.select_modalities({data.modality_index(models[k].modality)}));
        cohort_of[k] = &cohorts.emplace_back(build_cohort(view, config.knn_k, config.knn_mode, config.zero_variance));
    }

    const std::size_t nm = models.size(), reps = config.repeats;
    std::vector<RepeatResult> results(nm * reps);
    parallel_for(nm * reps, threads, [&](std::size_t task) {
        const std::size_t r = task / nm, k = task % nm;
        const GraphCohort& cohort = *cohort_of[k];
        const Split split = split_dataset(data.num_subjects(), config.train_ratio, config.val_ratio, config.test_ratio,
                                          repeat_split_seed(config.seed, r));
        if (split.test.empty()) throw ValidationError("evaluate: test split is empty");
        RepeatResult& out = results[task];
        try {
            TrainOptions opt;
            opt.manifold = models[k].uses_manifold();
            opt.init_seed = repeat_init_seed(config.seed, r);
            TrainResult tr = train(cohort, make_spec(models[k], *cohort.dataset, config), config, split.train,
                                   split.val, opt);
            std::vector<double> truth;
            for (std::size_t n : split.test) truth.push_back(data.labels[n]);
            const std::vector<double> pred = predict_raw(tr, cohort, split.test);
            out.rmse = rmse(pred, truth);
            out.mae = mae(pred, truth);
            out.epochs = tr.epochs_run;
            out.best_epoch = tr.best_epoch;
            double secs = 0.0;
            for (const auto& e : tr.curve) secs += e.seconds;
            out.seconds_per_epoch = tr.curve.empty() ? 0.0 : secs / static_cast<double>(tr.curve.size());
        } catch (const NumericError& e) {
            out.diverged = true;
            out.message = e.what();
            out.rmse = out.mae = std::numeric_limits<double>::quiet_NaN();
        }
    });

    EvalReport report;
    report.repeats = reps;
    report.seed = config.seed;
    if (reps < 2) report.warnings.push_back("only one repeat: standard deviations are reported as 0");
    for (std::size_t k = 0; k < nm; ++k) {
        ModelSummary s;
        s.name = models[k].label();
        std::vector<double> r_ok, m_ok, t_ok;
        for (std::size_t r = 0; r < reps; ++r) {
            const RepeatResult& x = results[r * nm + k];
            s.repeats.push_back(x);
            if (x.diverged) {
                ++s.diverged;
                report.warnings.push_back(s.name + " repeat " + std::to_string(r) + " diverged: " + x.message);
                continue;
            }
            r_ok.push_back(x.rmse);
            m_ok.push_back(x.mae);
            t_ok.push_back(x.seconds_per_epoch);
        }
        mean_std(r_ok, s.rmse_mean, s.rmse_std);
        mean_std(m_ok, s.mae_mean, s.mae_std);
        mean_std(t_ok, s.seconds_mean, s.seconds_std);
        report.models.push_back(std::move(s));
    }

    // Paired tests against the reference over repeats where both models finished.
    const ModelSummary& ref = report.models.front();
    for (std::size_t k = 1; k < nm; ++k) {
        ModelSummary& s = report.models[k];
        std::vector<double> ra, rb, ma, mb;
        for (std::size_t r = 0; r < reps; ++r) {
            if (ref.repeats[r].diverged || s.repeats[r].diverged) continue;
            ra.push_back(ref.repeats[r].rmse);
            rb.push_back(s.repeats[r].rmse);
            ma.push_back(ref.repeats[r].mae);
            mb.push_back(s.repeats[r].mae);
        }
        if (ra.size() < 2) {
            report.warnings.push_back("too few paired repeats to test " + ref.name + " vs " + s.name);
            continue;
        }
        const TTestResult tr = paired_ttest(ra, rb);
        s.p_rmse = tr.p;
        s.t_rmse = tr.t;
        s.p_mae = paired_ttest(ma, mb).p;
    }
    return report;
}

SearchResult random_search(const std::map<std::string, SearchDimension>& space, std::size_t trials,
                           std::uint64_t seed, const std::function<double(const std::map<std::string, double>&)>& objective) {
    if (space.empty() || trials == 0) throw ValidationError("random_search: empty space or zero trials");
    for (const auto& [name, d] : space) {
        if (!(d.low <= d.high) || (d.log && d.low <= 0.0)) {
            throw ValidationError("random_search: bad range for " + name);
        }
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SearchResult out;
    out.best_score = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
        std::map<std::string, double> point;
        for (const auto& [name, d] : space) {
            const double x = u(rng);
            point[name] = d.log ? std::exp(std::log(d.low) + x * (std::log(d.high) - std::log(d.low)))
                                : d.low + x * (d.high - d.low);
        }
        const double score = objective(point);
        out.trials.emplace_back(point, score);
        if (score < out.best_score) {
            out.best_score = score;
            out.best = point;
        }
    }
    return out;
}

} // namespace mgcn
