#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "trojanscope/serialize.hpp"
#include "trojanscope/textio.hpp"
#include "trojanscope/zoo.hpp"

using namespace trojanscope;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("trojanscope_zoo_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// dense model that always produces the same argmax
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

zoo::ZooConfig fast_cfg(uint64_t seed) {
    zoo::ZooConfig cfg;
    cfg.arch_ids = {"mlp-2"};
    cfg.n_clean = 2;
    cfg.n_trojan_per_mapping = 2;
    cfg.mappings = {poison::MappingKind::M2O};
    cfg.train_cfg.epochs = 4;
    cfg.train_cfg.batch_size = 32;
    cfg.train_cfg.learning_rate = 0.08;
    cfg.master_seed = seed;
    // loose validity bounds keep this unit test independent of training luck
    cfg.va_gap_max = 1.0;
    cfg.fr_min = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("fooling rate of an always-target model is 1 under m2o") {
    poison::TriggerEval eval;
    eval.mapping_kind = poison::MappingKind::M2O;
    eval.images = Tensor({6, 1, 4, 4});
    eval.mapped_labels.assign(6, 2);
    eval.label_changed.assign(6, 1);
    nn::Model m = constant_model(5, 2, {1, 4, 4});
    CHECK(zoo::fooling_rate(m, eval) == doctest::Approx(1.0));
    nn::Model other = constant_model(5, 3, {1, 4, 4});
    CHECK(zoo::fooling_rate(other, eval) == doctest::Approx(0.0));
}

TEST_CASE("fooling rate excludes unchanged labels only for mixed mappings") {
    poison::TriggerEval eval;
    eval.mapping_kind = poison::MappingKind::Mixed;
    eval.images = Tensor({4, 1, 4, 4});
    eval.mapped_labels = {1, 1, 0, 0};
    eval.label_changed = {1, 1, 0, 0};
    nn::Model m = constant_model(3, 1, {1, 4, 4});
    // denominator is the 2 changed samples, both predicted 1
    CHECK(zoo::fooling_rate(m, eval) == doctest::Approx(1.0));
    eval.mapping_kind = poison::MappingKind::M2O;
    // all 4 count now, 2 hits
    CHECK(zoo::fooling_rate(m, eval) == doctest::Approx(0.5));
}

TEST_CASE("clean model fooling rate sits near the target class prior") {
    data::Dataset ds = data::synth_shapes(4, 600, 13, 16);
    nn::TrainConfig tc;
    tc.epochs = 6;
    tc.seed = 5;
    nn::Model clean = nn::train(nn::make_model("mlp-2", ds.input_shape, ds.class_count),
                                ds.train, tc);
    REQUIRE(nn::accuracy(clean, ds.validation) > 0.9);

    poison::PoisonConfig pc;
    pc.mapping = poison::make_m2o(4, 1);
    pc.ratio_P = 0.2;
    pc.seed = 3;
    poison::PoisonedData pd = poison::poison_dataset(ds.train, ds.validation, pc);
    const double fr = zoo::fooling_rate(clean, pd.trigger_eval);
    // oracle: empirical prior of the target class in the held-out split
    int target_count = 0;
    for (int y : ds.validation.labels)
        if (y == 1) ++target_count;
    const double prior = static_cast<double>(target_count) / ds.validation.size();
    CHECK(fr < prior + 0.15);  // chance level, far below a trojan's 0.9
}

TEST_CASE("build_zoo counting contract and record hygiene") {
    data::Dataset ds = data::synth_shapes(3, 400, 21, 16);
    const fs::path dir = temp_dir("count");
    zoo::Manifest m = zoo::build_zoo(fast_cfg(7), ds, dir.string());
    CHECK(m.records.size() == 4);
    CHECK(m.count(false) == 2);
    CHECK(m.count(true) == 2);
    for (const auto& r : m.records) {
        if (r.is_trojan) {
            CHECK(r.poison_cfg.has_value());
            CHECK(r.fooling_rate.has_value());
        } else {
            CHECK(!r.poison_cfg.has_value());
            CHECK(!r.fooling_rate.has_value());
        }
        CHECK(fs::exists(dir / r.model_path / "manifest"));
    }
    CHECK(fs::exists(dir / "zoo_manifest"));
    fs::remove_all(dir);
}

TEST_CASE("manifest records reproduce their recorded VA after reload") {
    data::Dataset ds = data::synth_shapes(3, 400, 22, 16);
    const fs::path dir = temp_dir("va");
    zoo::Manifest m = zoo::build_zoo(fast_cfg(8), ds, dir.string());
    for (const auto& r : m.records) {
        nn::Model model = nn::load_model((dir / r.model_path).string());
        CHECK(std::abs(nn::accuracy(model, ds.validation) - r.va) < 1e-6);
    }
    fs::remove_all(dir);
}

TEST_CASE("two zoo builds with one master seed produce identical manifests") {
    data::Dataset ds = data::synth_shapes(3, 400, 23, 16);
    const fs::path dir_a = temp_dir("det_a");
    const fs::path dir_b = temp_dir("det_b");
    zoo::build_zoo(fast_cfg(9), ds, dir_a.string());
    zoo::build_zoo(fast_cfg(9), ds, dir_b.string());
    CHECK(textio::read_text_file((dir_a / "zoo_manifest").string()) ==
          textio::read_text_file((dir_b / "zoo_manifest").string()));
    // weights too
    zoo::Manifest m = zoo::load_manifest((dir_a / "zoo_manifest").string());
    for (const auto& r : m.records)
        CHECK(textio::read_text_file((dir_a / r.model_path / "weights.bin").string()) ==
              textio::read_text_file((dir_b / r.model_path / "weights.bin").string()));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("worker pool does not change the built zoo") {
    data::Dataset ds = data::synth_shapes(3, 300, 29, 16);
    const fs::path dir_a = temp_dir("pool_a");
    const fs::path dir_b = temp_dir("pool_b");
    zoo::ZooConfig cfg = fast_cfg(11);
    cfg.workers = 1;
    zoo::build_zoo(cfg, ds, dir_a.string());
    cfg.workers = 4;
    zoo::build_zoo(cfg, ds, dir_b.string());
    CHECK(textio::read_text_file((dir_a / "zoo_manifest").string()) ==
          textio::read_text_file((dir_b / "zoo_manifest").string()));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("manifest json round trip") {
    zoo::Manifest m;
    m.toolkit_version = kToolkitVersion;
    m.config_hash = "00ff";
    m.dataset_id = "synth-test";
    zoo::ZooRecord clean;
    clean.record_id = "clean-000";
    clean.model_path = "models/clean-000";
    clean.arch_id = "cnn-s";
    clean.va = 0.97;
    clean.seed = 42;
    m.records.push_back(clean);
    zoo::ZooRecord troj = clean;
    troj.record_id = "m2m-000";
    troj.model_path = "models/m2m-000";
    troj.is_trojan = true;
    troj.mapping = poison::MappingKind::M2M;
    poison::PoisonConfig pc;
    pc.mapping = poison::make_m2m(5, 2);
    pc.trigger.patch_pattern = poison::PatchPattern::checkerboard;
    pc.ratio_P = 0.17;
    pc.seed = 9;
    troj.poison_cfg = pc;
    troj.fooling_rate = 0.95;
    m.records.push_back(troj);
    m.dropped_slots.push_back("mixed-001: invalid after retrain (va=0.5, fr=0.2)");

    zoo::Manifest back = zoo::manifest_from_json(zoo::manifest_to_json(m));
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[0].record_id == "clean-000");
    CHECK(!back.records[0].poison_cfg.has_value());
    CHECK(back.records[1].is_trojan);
    CHECK(back.records[1].poison_cfg->mapping.permutation == pc.mapping.permutation);
    CHECK(back.records[1].poison_cfg->trigger.patch_pattern ==
          poison::PatchPattern::checkerboard);
    CHECK(*back.records[1].fooling_rate == doctest::Approx(0.95));
    CHECK(back.dropped_slots.size() == 1);
    // canonical form is stable
    CHECK(zoo::manifest_to_json(back) == zoo::manifest_to_json(m));
}

TEST_CASE("zoo config json round trip") {
    zoo::ZooConfig cfg = fast_cfg(77);
    cfg.trigger_menu = {"patch:square", "filter:channel_shift"};
    std::string dataset_dir;
    zoo::ZooConfig back =
        zoo::zoo_config_from_json(zoo::zoo_config_json(cfg, "/tmp/ds"), &dataset_dir);
    CHECK(dataset_dir == "/tmp/ds");
    CHECK(back.n_clean == cfg.n_clean);
    CHECK(back.mappings == cfg.mappings);
    CHECK(back.trigger_menu == cfg.trigger_menu);
    CHECK(back.train_cfg.epochs == cfg.train_cfg.epochs);
    CHECK(back.master_seed == cfg.master_seed);
}

TEST_CASE("sweep with a single P echoes one row") {
    data::Dataset ds = data::synth_shapes(3, 300, 25, 16);
    zoo::ZooConfig cfg = fast_cfg(10);
    auto rows = zoo::sweep_poison_ratio(cfg, ds, {0.18});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].p == doctest::Approx(0.18));
    CHECK(rows[0].va > 0.0);
    CHECK(rows[0].fooling_rate >= 0.0);
    CHECK_THROWS_AS(zoo::sweep_poison_ratio(cfg, ds, {0.7}), SpecError);
    CHECK_THROWS_AS(zoo::sweep_poison_ratio(cfg, ds, {}), SpecError);
}
