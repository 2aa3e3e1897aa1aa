#include "plab/harness.hpp"
#include "plab/store.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace plab;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    explicit TmpDir(const char* name) : path(fs::path("/tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("checkpoint round-trip is byte exact") {
    NetworkSpec spec = NetworkSpec::cnn(8, 8, 1, 3, 2, 3, 4);
    ParameterSet p = init_params(spec, 31);
    p.layers[0].w[0] = -0.0; // sign of zero must survive
    TmpDir dir("plab_ckpt_test");
    std::string path = (dir.path / "p.ckpt").string();
    save_checkpoint(path, p);
    ParameterSet back = load_checkpoint(path);
    REQUIRE(back.layers.size() == p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        CHECK(back.layers[i].present == p.layers[i].present);
        CHECK(back.layers[i].w.shape == p.layers[i].w.shape);
        CHECK(back.layers[i].w.data == p.layers[i].w.data);
        CHECK(back.layers[i].b.data == p.layers[i].b.data);
    }
    CHECK(std::signbit(back.layers[0].w[0]));
}

TEST_CASE("mask round-trip preserves kappa and every bit") {
    NetworkSpec spec = NetworkSpec::mlp(6, 3, {5});
    ParameterSet p = init_params(spec, 7);
    Mask m = all_ones_mask(p);
    m.m[0][3] = 0.0;
    m.m[2][1] = 0.0;
    m.kappa = m.ones();
    TmpDir dir("plab_mask_test");
    std::string path = (dir.path / "m.mask").string();
    save_mask(path, m);
    Mask back = load_mask(path);
    REQUIRE(back.m.size() == m.m.size());
    for (std::size_t i = 0; i < m.m.size(); ++i) CHECK(back.m[i].data == m.m[i].data);
    CHECK(back.kappa == m.kappa);

    // a checkpoint is not a mask
    std::string ckpt = (dir.path / "p.ckpt").string();
    save_checkpoint(ckpt, p);
    CHECK_THROWS_AS((void)load_mask(ckpt), Error);
}

TEST_CASE("patch store round-trip preserves images, masks and metadata") {
    PatchStore store;
    store.classes = 2;
    store.height = 4;
    store.width = 4;
    store.channels = 1;
    store.channel_mean = {0.375};
    store.warnings = {"class 1 thin"};
    Rng rng(13);
    for (int i = 0; i < 3; ++i) {
        DiscriminativePatch p;
        p.image = Tensor({4, 4, 1});
        for (double& v : p.image.data) v = rng.uniform();
        p.validity = Tensor({4, 4}, 0.0);
        for (int j = 0; j < 8; ++j) p.validity[j] = 1.0;
        p.klass = i % 2;
        p.label = p.klass;
        p.concept_idx = i == 2 ? -2 : i;
        p.segment_idx = i;
        p.tcav = 0.25 * i;
        p.coverage = 0.5;
        p.source_image_id = 10 + i;
        if (i == 2) p.stitched_from = {{0, 1}, {1, 0}};
        store.patches.push_back(p);
    }
    TmpDir dir("plab_store_test");
    save_patch_store(dir.path.string(), store);
    CHECK(fs::exists(dir.path / "images.idx"));
    CHECK(fs::exists(dir.path / "masks.idx"));
    CHECK(fs::exists(dir.path / "manifest.jsonl"));
    CHECK(fs::exists(dir.path / "meta.json"));

    PatchStore back = load_patch_store(dir.path.string());
    CHECK(back.classes == 2);
    CHECK(back.channel_mean == store.channel_mean);
    CHECK(back.warnings == store.warnings);
    REQUIRE(back.patches.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back.patches[i].image.data == store.patches[i].image.data); // bit exact
        CHECK(back.patches[i].validity.data == store.patches[i].validity.data);
        CHECK(back.patches[i].klass == store.patches[i].klass);
        CHECK(back.patches[i].concept_idx == store.patches[i].concept_idx);
        CHECK(back.patches[i].segment_idx == store.patches[i].segment_idx);
        CHECK(back.patches[i].tcav == store.patches[i].tcav);
        CHECK(back.patches[i].coverage == store.patches[i].coverage);
        CHECK(back.patches[i].source_image_id == store.patches[i].source_image_id);
        CHECK(back.patches[i].stitched_from == store.patches[i].stitched_from);
    }
}

TEST_CASE("experiment config hash is canonical") {
    ExperimentConfig a, b;
    CHECK(a.hash() == b.hash());
    b.material_budget = 101;
    CHECK(a.hash() != b.hash());

    // key order in the source text must not matter
    ExperimentConfig c =
        ExperimentConfig::from_json_text(R"({"model":"mlp","material_mode":"stitch"})");
    ExperimentConfig d =
        ExperimentConfig::from_json_text(R"({"material_mode":"stitch","model":"mlp"})");
    CHECK(c.hash() == d.hash());
    CHECK(c.model == "mlp");
    CHECK(c.mode == MaterialMode::Stitch);
}

TEST_CASE("unknown config keys are rejected") {
    CHECK_THROWS_AS((void)ExperimentConfig::from_json_text(R"({"modle":"mlp"})"), Error);
}

TEST_CASE("aggregate means and sample deviations match a hand calculation") {
    RunReport r;
    r.config_hash = "h";
    r.dataset_id = "shapes-x";
    r.mode = "dop";
    r.criterion = "snip";
    r.model = "cnn";
    r.cells = {
        {0.9, 1, true, 0.80, 0, 0.1, "", 0.0},
        {0.9, 2, true, 0.90, 0, 0.1, "", 0.0},
        {0.9, 3, true, 0.70, 0, 0.1, "", 0.0},
        {0.95, 1, true, 0.60, 0, 0.1, "", 0.0},
        {0.95, 2, false, 0.0, 0, 0.0, "boom", 0.0}, // failed cells are excluded
    };
    std::vector<AggregateRow> rows = aggregate({r});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].sparsity == 0.9);
    CHECK(rows[0].n_seeds == 3);
    CHECK(rows[0].mean_acc == doctest::Approx(0.8));
    CHECK(rows[0].std_acc == doctest::Approx(0.1)); // sample std of {.8,.9,.7}
    CHECK(rows[1].sparsity == 0.95);
    CHECK(rows[1].n_seeds == 1);
    CHECK(rows[1].mean_acc == doctest::Approx(0.6));
    CHECK(rows[1].std_acc == 0.0);
}

TEST_CASE("aggregate refuses mixed datasets") {
    RunReport a, b;
    a.dataset_id = "shapes-1";
    b.dataset_id = "shapes-2";
    a.cells = b.cells = {{0.9, 1, true, 0.5, 0, 0.0, "", 0.0}};
    CHECK_THROWS_AS((void)aggregate({a, b}), Error);
}

TEST_CASE("report round-trip and compare_runs emit the expected files") {
    TmpDir dir("plab_report_test");
    RunReport r;
    r.config_hash = "cafebabe";
    r.dataset_id = "shapes-t";
    r.mode = "dop";
    r.criterion = "snip";
    r.model = "mlp";
    r.dense_baseline = 0.97;
    r.cells = {{0.9, 1, true, 0.81, 0, 0.25, "", 3.5},
               {0.9, 2, true, 0.83, 1, 0.25, "", 3.6}};
    write_report(r, dir.path.string());
    RunReport back = load_report((dir.path / "report.json").string());
    CHECK(back.config_hash == r.config_hash);
    CHECK(back.dense_baseline == r.dense_baseline);
    REQUIRE(back.cells.size() == 2);
    CHECK(back.cells[0].accuracy == r.cells[0].accuracy);
    CHECK(back.cells[1].collapsed_layers == 1);

    // csv rows carry no timing so reruns can be compared byte for byte
    std::ifstream csv(dir.path / "report.csv");
    std::string text((std::istreambuf_iterator<char>(csv)), std::istreambuf_iterator<char>());
    CHECK(text.find("second") == std::string::npos);
    CHECK(text.find("3.5") == std::string::npos);

    compare_runs({r}, (dir.path / "cmp").string());
    CHECK(fs::exists(dir.path / "cmp" / "comparison.csv"));
    CHECK(fs::exists(dir.path / "cmp" / "accuracy_snip.svg"));
}
