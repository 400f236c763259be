#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "trojanscope/detector.hpp"
#include "trojanscope/geometry.hpp"
#include "trojanscope/train.hpp"

using namespace trojanscope;
namespace fs = std::filesystem;

namespace {

nn::Model constant_model(int classes, int favored, const std::vector<int>& input_shape) {
    nn::Model m;
    m.arch_id = "const";
    m.class_count = classes;
    m.input_shape = input_shape;
    int d = 1;
    for (int v : input_shape) d *= v;
    m.layers = {nn::LayerSpec::flatten(), nn::LayerSpec::dense(d, classes)};
    m.weights = {Tensor(), Tensor({classes, d})};
    m.biases = {Tensor(), Tensor({classes})};
    m.biases[1].data[favored] = 10.0f;
    return m;
}

// binary linear model with decision boundary x = 0 (normal along e_x)
nn::Model x_boundary_model() {
    nn::Model m;
    m.arch_id = "xsplit";
    m.class_count = 2;
    m.input_shape = {1, 1, 2};
    m.layers = {nn::LayerSpec::flatten(), nn::LayerSpec::dense(2, 2)};
    m.weights = {Tensor(), Tensor({2, 2}, {1, 0, -1, 0})};
    m.biases = {Tensor(), Tensor({2})};
    return m;
}

data::LabeledSet balanced_set(int per_class, int classes, const std::vector<int>& shape,
                              uint64_t seed) {
    data::LabeledSet s;
    std::vector<int> full = shape;
    full.insert(full.begin(), per_class * classes);
    s.images = Tensor(full);
    s.labels.resize(per_class * classes);
    Rng rng(seed);
    for (float& v : s.images.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    for (int i = 0; i < per_class * classes; ++i) s.labels[i] = i % classes;
    return s;
}

}  // namespace

TEST_CASE("error rate counting") {
    nn::Model m = constant_model(4, 1, {1, 3, 3});
    data::LabeledSet set = balanced_set(5, 4, {1, 3, 3}, 2);
    // constant model is right only on class 1: error = 3/4
    CHECK(detect::error_rate(m, set) == doctest::Approx(0.75));
    // hand-labeled: 10 samples, 3 mistakes
    data::LabeledSet ten = balanced_set(10, 1, {1, 3, 3}, 3);
    ten.labels.assign(10, 1);
    ten.labels[0] = ten.labels[4] = ten.labels[7] = 0;
    CHECK(detect::error_rate(m, ten) == doctest::Approx(0.3));
    data::LabeledSet empty;
    CHECK_THROWS_AS(detect::error_rate(m, empty), SpecError);
}

TEST_CASE("degenerate entry: loop never runs when the probe error already exceeds rho") {
    nn::Model m = constant_model(4, 0, {1, 3, 3});
    data::LabeledSet probe = balanced_set(10, 4, {1, 3, 3}, 5);
    detect::DetectorConfig cfg;
    cfg.xi = 5.0;
    detect::PerturbationResult pr = detect::detector_perturbation(m, probe, cfg);
    CHECK(pr.iters == 0);
    CHECK(pr.r.l2_norm() == doctest::Approx(0.0));
}

TEST_CASE("2-D linear toy: r_X aligns with the boundary normal at magnitude xi") {
    nn::Model m = x_boundary_model();
    data::LabeledSet probe;
    probe.images = Tensor({8, 1, 1, 2});
    probe.labels.assign(8, 0);
    Rng rng(6);
    for (int i = 0; i < 8; ++i) {
        probe.images.data[2 * i] = static_cast<float>(rng.uniform(0.5, 2.0));  // all class 0
        probe.images.data[2 * i + 1] = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    detect::DetectorConfig cfg;
    cfg.xi = 5.0;
    detect::PerturbationResult pr = detect::detector_perturbation(m, probe, cfg);
    CHECK(pr.iters >= 1);
    CHECK(pr.r.l2_norm() == doctest::Approx(5.0).epsilon(1e-5));
    const double angle = std::atan2(std::abs(pr.r.data[1]), std::abs(pr.r.data[0]));
    CHECK(angle < 1e-3);  // within 1e-3 rad of +-e_x
}

TEST_CASE("r_X keeps norm xi and the loop respects J+1 on trained models") {
    data::Dataset ds = data::synth_shapes(3, 500, 33, 16);
    nn::TrainConfig tc;
    tc.epochs = 6;
    tc.seed = 4;
    nn::Model m = nn::train(nn::make_model("mlp-2", ds.input_shape, ds.class_count), ds.train,
                            tc);
    detect::DetectorConfig cfg;
    cfg.xi = 5.0;
    cfg.probe_per_class = 10;
    cfg.seed = 12;
    detect::DetectorVerdict v = detect::classify_model(m, ds.validation, cfg);
    CHECK(v.outer_iters_used <= cfg.J + 1);
    if (v.outer_iters_used > 0)
        CHECK(v.r_X.l2_norm() == doctest::Approx(cfg.xi).epsilon(1e-5));
    CHECK(v.perturbed_error >= 0.0);
    CHECK(v.perturbed_error <= 1.0);
}

TEST_CASE("delta = 0 labels every model trojan") {
    data::Dataset ds = data::synth_shapes(3, 400, 35, 16);
    nn::TrainConfig tc;
    tc.epochs = 4;
    tc.seed = 4;
    nn::Model m = nn::train(nn::make_model("mlp-2", ds.input_shape, ds.class_count), ds.train,
                            tc);
    detect::DetectorConfig cfg;
    cfg.xi = 5.0;
    cfg.probe_per_class = 10;
    cfg.delta = 0.0;
    CHECK(detect::classify_model(m, ds.validation, cfg).is_trojan);
}

TEST_CASE("degenerate entry keeps r_X = 0 and the verdict follows the clean error") {
    // constant 3-class model: probe error 2/3 > rho, so the loop never runs
    // and the perturbed error equals the clean error (2/3 < delta = 0.8)
    nn::Model m = constant_model(3, 0, {1, 3, 3});
    data::LabeledSet val = balanced_set(30, 3, {1, 3, 3}, 7);
    detect::DetectorConfig cfg;
    cfg.xi = 5.0;
    cfg.probe_per_class = 10;
    cfg.delta = 0.8;
    detect::DetectorVerdict v = detect::classify_model(m, val, cfg);
    CHECK(v.outer_iters_used == 0);
    CHECK(v.r_X.l2_norm() == doctest::Approx(0.0));
    CHECK(v.perturbed_error == doctest::Approx(v.clean_error));
    CHECK(!v.is_trojan);
}

TEST_CASE("verdict is deterministic and monotone in delta") {
    data::Dataset ds = data::synth_shapes(3, 400, 37, 16);
    nn::TrainConfig tc;
    tc.epochs = 4;
    tc.seed = 9;
    nn::Model m = nn::train(nn::make_model("mlp-2", ds.input_shape, ds.class_count), ds.train,
                            tc);
    detect::DetectorConfig cfg;
    cfg.xi = 5.0;
    cfg.probe_per_class = 10;
    cfg.seed = 3;
    detect::DetectorVerdict a = detect::classify_model(m, ds.validation, cfg);
    detect::DetectorVerdict b = detect::classify_model(m, ds.validation, cfg);
    CHECK(a.is_trojan == b.is_trojan);
    CHECK(a.perturbed_error == b.perturbed_error);
    CHECK(a.r_X.data == b.r_X.data);

    detect::DetectorConfig higher = cfg;
    higher.delta = std::min(1.0, cfg.delta + 0.3);
    detect::DetectorVerdict c = detect::classify_model(m, ds.validation, higher);
    // raising delta can only turn trojan verdicts into clean ones
    if (c.is_trojan) CHECK(a.is_trojan);
}

TEST_CASE("probe removal failure cases") {
    nn::Model m = constant_model(2, 0, {1, 3, 3});
    data::LabeledSet tiny = balanced_set(10, 2, {1, 3, 3}, 8);
    detect::DetectorConfig cfg;
    cfg.probe_per_class = 10;  // consumes the whole validation set
    CHECK_THROWS_AS(detect::classify_model(m, tiny, cfg), SpecError);
    cfg.probe_per_class = 40;  // more than available per class
    CHECK_THROWS_AS(detect::classify_model(m, tiny, cfg), SpecError);
}

TEST_CASE("fold metrics arithmetic on forced verdicts") {
    // build a tiny balanced zoo of fast models, then force delta = 0 so every
    // verdict is trojan: precision 0.5, recall 1.0, accuracy 50%
    data::Dataset ds = data::synth_shapes(3, 400, 39, 16);
    const fs::path dir = fs::temp_directory_path() / "trojanscope_det_zoo";
    fs::remove_all(dir);
    zoo::ZooConfig zcfg;
    zcfg.arch_ids = {"mlp-2"};
    zcfg.n_clean = 2;
    zcfg.n_trojan_per_mapping = 2;
    zcfg.mappings = {poison::MappingKind::M2O};
    zcfg.train_cfg.epochs = 4;
    zcfg.master_seed = 5;
    zcfg.va_gap_max = 1.0;
    zcfg.fr_min = 0.0;
    zoo::Manifest manifest = zoo::build_zoo(zcfg, ds, dir.string());
    REQUIRE(manifest.records.size() == 4);

    detect::DetectorConfig cfg;
    cfg.xi = 5.0;
    cfg.probe_per_class = 10;
    cfg.delta = 0.0;
    detect::MetricsReport rep =
        detect::evaluate_detector(manifest, dir.string(), ds.validation, cfg, 2);
    CHECK(rep.rows.size() == 4);
    CHECK(rep.precision_mean == doctest::Approx(0.5));
    CHECK(rep.recall_mean == doctest::Approx(1.0));
    CHECK(rep.accuracy_mean == doctest::Approx(0.5));
    CHECK(rep.overall_accuracy == doctest::Approx(0.5));
    // stratified folds: each fold holds one clean and one trojan model
    for (const auto& fm : rep.folds) CHECK(fm.n == 2);

    CHECK_THROWS_AS(detect::evaluate_detector(manifest, dir.string(), ds.validation, cfg, 3),
                    SpecError);
    fs::remove_all(dir);
}

TEST_CASE("metrics report serialization carries rows and the aggregate block") {
    detect::MetricsReport rep;
    rep.rows = {{"clean-000", false, false, 0.1, 0.05, 2, 0},
                {"m2o-000", true, true, 0.9, 0.04, 1, 0}};
    rep.folds = {{1.0, 1.0, 1.0, 2}};
    rep.precision_mean = rep.recall_mean = rep.accuracy_mean = 1.0;
    rep.overall_accuracy = 1.0;
    detect::DetectorConfig cfg;
    const std::string j = detect::metrics_report_json(rep, cfg);
    CHECK(j.find("\"m2o-000\"") != std::string::npos);
    CHECK(j.find("\"aggregate\"") != std::string::npos);
    const std::string csv = detect::metrics_report_csv(rep);
    CHECK(csv.find("model_id,truth,verdict") == 0);
    CHECK(csv.find("m2o-000,trojan,trojan,0.9,") != std::string::npos);

    detect::DetectorConfig back =
        detect::detector_config_from_json(detect::detector_config_json(cfg));
    CHECK(back.xi == cfg.xi);
    CHECK(back.J == cfg.J);
    CHECK(back.probe_per_class == cfg.probe_per_class);
}
