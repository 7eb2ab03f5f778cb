#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <unistd.h>

#include "mgcn/error.hpp"
#include "mgcn/format.hpp"
#include "mgcn/io.hpp"
#include "mgcn/synth.hpp"
#include "test_support.hpp"

using namespace mgcn;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("mgcn_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

SynthConfig small_synth() {
    SynthConfig c;
    c.num_subjects = 6;
    c.num_rois = 8;
    c.modalities = {{"emoid", 20}, {"nback", 24}};
    c.planted_rois = 2;
    c.planted_edges = 4;
    c.num_communities = 2;
    return c;
}

void expect_same_dataset(const Dataset& a, const Dataset& b) {
    EXPECT_EQ(a.num_rois, b.num_rois);
    EXPECT_EQ(a.subject_ids, b.subject_ids);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.fn_labels, b.fn_labels);
    ASSERT_EQ(a.num_modalities(), b.num_modalities());
    for (std::size_t m = 0; m < a.num_modalities(); ++m) {
        EXPECT_EQ(a.modalities[m].name, b.modalities[m].name);
        EXPECT_EQ(a.modalities[m].length, b.modalities[m].length);
        for (std::size_t n = 0; n < a.num_subjects(); ++n) EXPECT_EQ(a.series[m][n], b.series[m][n]);
    }
    EXPECT_EQ(a.provenance.seed, b.provenance.seed);
    EXPECT_EQ(a.provenance.planted_rois, b.provenance.planted_rois);
    EXPECT_EQ(a.provenance.planted_edges, b.provenance.planted_edges);
    EXPECT_EQ(a.provenance.latent, b.provenance.latent);
}

} // namespace

TEST(DatasetFiles, RoundTripIsExact) {
    TempDir dir;
    const Dataset d = synth_generate(small_synth());
    const fs::path manifest = save_dataset(d, dir.path());
    expect_same_dataset(d, load_dataset(manifest));
}

TEST(DatasetFiles, SameSeedGivesIdenticalBytes) {
    TempDir a, b;
    save_dataset(synth_generate(small_synth()), a.path());
    save_dataset(synth_generate(small_synth()), b.path());
    for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
        if (!entry.is_regular_file()) continue;
        const fs::path other = b.path() / fs::relative(entry.path(), a.path());
        ASSERT_TRUE(fs::exists(other)) << other;
        EXPECT_EQ(read_file(entry.path()), read_file(other)) << other;
    }
}

TEST(DatasetFiles, MissingFileNamesSubjectAndModality) {
    TempDir dir;
    const Dataset d = synth_generate(small_synth());
    const fs::path manifest = save_dataset(d, dir.path());
    fs::remove(dir.path() / "series" / "nback" / "sub-003.csv");
    try {
        load_dataset(manifest);
        FAIL() << "expected an error";
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("sub-003"), std::string::npos) << msg;
        EXPECT_NE(msg.find("nback"), std::string::npos) << msg;
    }
}

TEST(DatasetFiles, NanReportsRowAndColumn) {
    TempDir dir;
    const Dataset d = synth_generate(small_synth());
    const fs::path manifest = save_dataset(d, dir.path());
    Tensor x = d.series[0][1];
    const fs::path file = dir.path() / "series" / "emoid" / "sub-002.csv";
    std::string text = matrix_to_csv(x);
    // Replace the 3rd value of the 2nd row.
    auto lines = split(text, '\n');
    auto cells = split(lines[1], ',');
    cells[2] = "nan";
    std::string row;
    for (std::size_t i = 0; i < cells.size(); ++i) row += (i ? "," : "") + cells[i];
    lines[1] = row;
    text.clear();
    for (std::size_t i = 0; i < lines.size(); ++i) text += (i ? "\n" : "") + lines[i];
    write_file_atomic(file, text);
    try {
        load_dataset(manifest);
        FAIL() << "expected an error";
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2 col 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("sub-002"), std::string::npos) << msg;
    }
}

TEST(DatasetFiles, ShapeMismatchAndBadManifest) {
    TempDir dir;
    const Dataset d = synth_generate(small_synth());
    const fs::path manifest = save_dataset(d, dir.path());
    write_matrix_csv(dir.path() / "series" / "emoid" / "sub-001.csv", Tensor(8, 19, 0.5));
    EXPECT_THROW(load_dataset(manifest), ValidationError);
    write_file_atomic(manifest, "{ not json");
    EXPECT_THROW(load_dataset(manifest), ValidationError);
    EXPECT_THROW(load_dataset(dir.path() / "nope.json"), ValidationError);
}

TEST(Csv, SerialiseParseSerialiseIsByteEqual) {
    std::mt19937_64 rng(3);
    const Tensor m = mgcn::testing::random_tensor(rng, 5, 7, -1e6, 1e6);
    const std::string text = matrix_to_csv(m);
    const Tensor back = matrix_from_csv(text, "t");
    EXPECT_EQ(back, m);
    EXPECT_EQ(matrix_to_csv(back), text);
}

TEST(Config, RoundTripsEveryField) {
    TrainConfig t;
    SynthConfig s;
    t.learning_rate = 0.1 + 0.2;
    t.max_epochs = 17;
    t.mlp_hidden = {3, 5, 7};
    t.knn_mode = KnnMode::Intersection;
    t.zero_variance = ZeroVariancePolicy::Lenient;
    t.optimizer = OptimizerKind::GradientDescent;
    t.mask_zero_diagonal = true;
    t.seed = 18446744073709551615ULL;
    s.modalities = {{"a", 30}, {"b", 40}, {"c", 50}};
    s.latent = {0.25, 1.0 / 3.0};
    s.latent_noise = 0.05;
    const std::string text = config_to_text(t, s);
    TrainConfig t2;
    SynthConfig s2;
    apply_config(text, &t2, &s2);
    EXPECT_EQ(config_to_text(t2, s2), text);
    EXPECT_EQ(t2.learning_rate, t.learning_rate);
    EXPECT_EQ(t2.mlp_hidden, t.mlp_hidden);
    EXPECT_EQ(t2.seed, t.seed);
    EXPECT_EQ(s2.latent, s.latent);
    EXPECT_EQ(s2.modalities.size(), 3u);
}

TEST(Config, CommentsBlankLinesAndPartialTargets) {
    TrainConfig t;
    apply_config("# header\n\ntrain.patience = 7   # inline\nsynth.snr = 2\n", &t, nullptr);
    EXPECT_EQ(t.patience, 7u);
    SynthConfig s;
    apply_config("train.mlp_hidden =\nsynth.num_rois=12", &t, &s);
    EXPECT_TRUE(t.mlp_hidden.empty());
    EXPECT_EQ(s.num_rois, 12u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    TrainConfig t;
    SynthConfig s;
    EXPECT_THROW(apply_config("train.learning_rte = 1", &t, &s), ValidationError);
    EXPECT_THROW(apply_config("learning_rate = 1", &t, &s), ValidationError);
    EXPECT_THROW(apply_config("train.max_epochs = -3", &t, &s), ValidationError);
    EXPECT_THROW(apply_config("train.learning_rate = fast", &t, &s), ValidationError);
    EXPECT_THROW(apply_config("train.optimizer = sgdx", &t, &s), ValidationError);
    EXPECT_THROW(apply_config("train.mask_zero_diagonal = maybe", &t, &s), ValidationError);
    EXPECT_THROW(apply_config("synth.modalities = emoid", &t, &s), ValidationError);
    EXPECT_THROW(apply_config("no equals sign", &t, &s), ValidationError);
    try {
        apply_config("train.l2 = 1\n\ntrain.bogus = 2", &t, &s, "f.cfg");
        ADD_FAILURE() << "expected an error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("f.cfg:3"), std::string::npos) << e.what();
    }
}

TEST(Checkpoint, BitExactRoundTrip) {
    TempDir dir;
    const Dataset d = synth_generate(small_synth());
    TrainConfig cfg;
    cfg.hidden_channels = 4;
    cfg.embed_channels = 2;
    cfg.mlp_hidden = {6};
    cfg.max_epochs = 5;
    cfg.learning_rate = 1e-3;
    cfg.knn_k = 3;
    GraphCohort g = build_cohort(d, cfg.knn_k, cfg.knn_mode, cfg.zero_variance);
    for (bool mask : {false, true}) {
        ModelSpec spec = make_spec({ModelKind::Mgcn, {}}, d, cfg);
        spec.edge_mask = mask;
        const std::vector<std::size_t> tr{0, 1, 2, 3}, va{4};
        TrainOptions o;
        o.init_seed = 9;
        TrainResult r = train(g, spec, cfg, tr, va, o);
        const fs::path file = dir.path() / "model.ckpt";
        CheckpointInfo info;
        info.model = "mgcn";
        info.modalities = {"emoid", "nback"};
        info.seed = 77;
        save_checkpoint(file, r, info);
        CheckpointInfo info_back;
        TrainResult back = load_checkpoint(file, &info_back);
        EXPECT_EQ(info_back.modalities, info.modalities);
        EXPECT_EQ(info_back.seed, 77u);
        EXPECT_EQ(back.label_mean, r.label_mean);
        EXPECT_EQ(back.best_epoch, r.best_epoch);
        EXPECT_EQ(back.spec.edge_mask, mask);
        auto a = r.params.entries();
        auto b = back.params.entries();
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].tensor, *b[i].tensor) << a[i].name;
        const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
        EXPECT_EQ(predict_raw(back, g, all), predict_raw(r, g, all));
        std::string bytes = read_file(file);
        EXPECT_EQ(bytes.substr(0, 8), "MGCNCKPT");
        save_checkpoint(dir.path() / "again.ckpt", back, info_back);
        EXPECT_EQ(read_file(dir.path() / "again.ckpt"), bytes);
    }
}

TEST(Checkpoint, RejectsCorruptFiles) {
    TempDir dir;
    write_file_atomic(dir.path() / "bad.ckpt", "NOTACKPT........");
    EXPECT_THROW(load_checkpoint(dir.path() / "bad.ckpt"), ValidationError);
    TrainResult r;
    r.spec.num_rois = 3;
    r.spec.series_lengths = {4};
    r.spec.hidden_channels = 2;
    r.spec.embed_channels = 1;
    r.spec.mlp_hidden = {};
    r.params = init_params(r.spec, 1);
    save_checkpoint(dir.path() / "ok.ckpt", r);
    std::string bytes = read_file(dir.path() / "ok.ckpt");
    write_file_atomic(dir.path() / "short.ckpt", bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(load_checkpoint(dir.path() / "short.ckpt"), ValidationError);
    write_file_atomic(dir.path() / "long.ckpt", bytes + "x");
    EXPECT_THROW(load_checkpoint(dir.path() / "long.ckpt"), ValidationError);
    EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), ValidationError);
}
