// trojanscope: create clean/Trojan model zoos by data poisoning, analyze
// decision-boundary geometry (margins, singular spectra), and run the
// perturbation-alignment Trojan detector.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trojanscope/analysis.hpp"
#include "trojanscope/dataset.hpp"
#include "trojanscope/detector.hpp"
#include "trojanscope/serialize.hpp"
#include "trojanscope/textio.hpp"
#include "trojanscope/zoo.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace trojanscope;

namespace {

int env_workers(int flag_value) {
    if (const char* env = std::getenv("TROJANSCOPE_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) return w;
    }
    return flag_value;
}

void write_run_config(const std::string& out_dir, const std::string& command, json options) {
    json j;
    j["toolkit_version"] = kToolkitVersion;
    j["command"] = command;
    j["options"] = std::move(options);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
    textio::write_text_file((fs::path(out_dir) / "run_config").string(), j.dump(2) + "\n");
}

// Loads the options block of a previously echoed run_config.
json load_run_config(const std::string& path, const std::string& expect_command) {
    json j;
    try {
        j = json::parse(textio::read_text_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError("run_config is not valid JSON: " + std::string(e.what()),
                          static_cast<long long>(e.byte));
    }
    if (j.at("command").get<std::string>() != expect_command)
        throw SpecError("run_config was written by '" + j.at("command").get<std::string>() +
                        "', not '" + expect_command + "'");
    return j.at("options");
}

data::Dataset require_dataset(const std::string& dir) {
    if (!fs::exists(dir)) throw IoError("dataset directory not found: " + dir);
    return data::load_dataset(dir);
}

zoo::Manifest require_manifest(const std::string& zoo_dir) {
    const fs::path p = fs::path(zoo_dir) / "zoo_manifest";
    if (!fs::exists(p)) throw IoError("zoo_manifest not found in " + zoo_dir);
    zoo::Manifest m = zoo::load_manifest(p.string());
    if (m.records.empty()) throw SpecError("zoo manifest lists no models");
    return m;
}

void log_line(const std::string& s) { std::cout << s << "\n"; }

// ---- dataset ----------------------------------------------------------------

struct SynthArgs {
    int classes = 5;
    int n = 5000;
    uint64_t seed = 1;
    int size = 28;
    int channels = 1;
    std::string out;
    std::string config;
};

int run_synth(SynthArgs a) {
    if (!a.config.empty()) {
        json o = load_run_config(a.config, "dataset synth");
        a.classes = o.at("classes").get<int>();
        a.n = o.at("n").get<int>();
        a.seed = o.at("seed").get<uint64_t>();
        a.size = o.at("size").get<int>();
        a.channels = o.at("channels").get<int>();
    }
    data::Dataset ds = data::synth_shapes(a.classes, a.n, a.seed, a.size, a.channels);
    data::save_dataset(ds, a.out);
    write_run_config(a.out, "dataset synth",
                     {{"classes", a.classes},
                      {"n", a.n},
                      {"seed", a.seed},
                      {"size", a.size},
                      {"channels", a.channels}});
    std::cout << "dataset " << ds.id << ": train=" << ds.train.size()
              << " validation=" << ds.validation.size() << " -> " << a.out << "\n";
    return 0;
}

struct PrepareArgs {
    std::string images, labels;
    uint64_t seed = 1;
    double val_fraction = 0.10;
    std::string out;
    std::string config;
};

int run_prepare(PrepareArgs a) {
    if (!a.config.empty()) {
        json o = load_run_config(a.config, "dataset prepare");
        a.images = o.at("images").get<std::string>();
        a.labels = o.at("labels").get<std::string>();
        a.seed = o.at("seed").get<uint64_t>();
        a.val_fraction = o.at("val_fraction").get<double>();
    }
    if (!fs::exists(a.images)) throw IoError("IDX image file not found: " + a.images);
    if (!fs::exists(a.labels)) throw IoError("IDX label file not found: " + a.labels);
    data::Dataset ds = data::prepare_idx(a.images, a.labels, a.seed, a.val_fraction);
    data::save_dataset(ds, a.out);
    write_run_config(a.out, "dataset prepare",
                     {{"images", a.images},
                      {"labels", a.labels},
                      {"seed", a.seed},
                      {"val_fraction", a.val_fraction}});
    std::cout << "dataset " << ds.id << ": train=" << ds.train.size()
              << " validation=" << ds.validation.size() << " -> " << a.out << "\n";
    return 0;
}

// ---- zoo --------------------------------------------------------------------

struct ZooArgs {
    std::string dataset, out, config;
    zoo::ZooConfig cfg;
    std::string mappings = "m2o,m2m,mixed";
    std::string archs = "cnn-s";
    std::string p_list;  // sweep only
};

void apply_zoo_lists(ZooArgs& a) {
    a.cfg.mappings.clear();
    for (const auto& part : textio::split(a.mappings, ','))
        if (!part.empty()) a.cfg.mappings.push_back(poison::mapping_kind_from_name(part));
    a.cfg.arch_ids.clear();
    for (const auto& part : textio::split(a.archs, ','))
        if (!part.empty()) a.cfg.arch_ids.push_back(part);
}

int run_zoo_build(ZooArgs a) {
    if (!a.config.empty()) {
        json o = load_run_config(a.config, "zoo build");
        a.cfg = zoo::zoo_config_from_json(o.at("zoo").dump(), &a.dataset);
    } else {
        apply_zoo_lists(a);
    }
    a.cfg.workers = env_workers(a.cfg.workers);
    data::Dataset ds = require_dataset(a.dataset);
    write_run_config(a.out, "zoo build",
                     {{"zoo", json::parse(zoo::zoo_config_json(a.cfg, a.dataset))}});
    zoo::Manifest m = zoo::build_zoo(a.cfg, ds, a.out, log_line);
    std::cout << "zoo: " << m.count(false) << " clean + " << m.count(true) << " trojan models ("
              << m.dropped_slots.size() << " slots dropped) -> " << a.out << "\n";
    return 0;
}

int run_zoo_sweep(ZooArgs a) {
    std::vector<double> p_values;
    if (!a.config.empty()) {
        json o = load_run_config(a.config, "zoo sweep");
        a.cfg = zoo::zoo_config_from_json(o.at("zoo").dump(), &a.dataset);
        p_values = o.at("p_values").get<std::vector<double>>();
    } else {
        apply_zoo_lists(a);
        for (const auto& part : textio::split(a.p_list, ','))
            if (!part.empty()) p_values.push_back(std::stod(part));
    }
    a.cfg.workers = env_workers(a.cfg.workers);
    data::Dataset ds = require_dataset(a.dataset);
    write_run_config(a.out, "zoo sweep",
                     {{"zoo", json::parse(zoo::zoo_config_json(a.cfg, a.dataset))},
                      {"p_values", p_values}});
    auto rows = zoo::sweep_poison_ratio(a.cfg, ds, p_values, log_line);
    std::string csv = "P,va,fooling_rate\n";
    for (const auto& r : rows)
        csv += textio::format_double(r.p) + "," + textio::format_double(r.va) + "," +
               textio::format_double(r.fooling_rate) + "\n";
    textio::write_text_file((fs::path(a.out) / "sweep.csv").string(), csv);
    std::cout << csv;
    return 0;
}

// ---- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
    std::string zoo, dataset, out, config;
    int samples = 200;          // margin
    int samples_per_class = 40;  // spectrum
    int k = 100;
    int max_iter = geom::kDefaultMaxIter;
    double overshoot = geom::kDefaultOvershoot;
    uint64_t seed = 1;
    int workers = 1;
};

int run_analyze_margin(AnalyzeArgs a) {
    if (!a.config.empty()) {
        json o = load_run_config(a.config, "analyze margin");
        a.zoo = o.at("zoo").get<std::string>();
        a.dataset = o.at("dataset").get<std::string>();
        a.samples = o.at("samples").get<int>();
        a.max_iter = o.at("max_iter").get<int>();
        a.overshoot = o.at("overshoot").get<double>();
    }
    a.workers = env_workers(a.workers);
    data::Dataset ds = require_dataset(a.dataset);
    zoo::Manifest m = require_manifest(a.zoo);
    write_run_config(a.out, "analyze margin",
                     {{"zoo", a.zoo},
                      {"dataset", a.dataset},
                      {"samples", a.samples},
                      {"max_iter", a.max_iter},
                      {"overshoot", a.overshoot}});
    auto rows = analysis::margin_table(m, a.zoo, ds.validation, a.samples, a.max_iter,
                                       a.overshoot, a.workers);
    textio::write_text_file((fs::path(a.out) / "margins.csv").string(),
                            analysis::margins_csv(rows));
    double clean = 0, trojan = 0;
    int nc = 0, nt = 0;
    for (const auto& r : rows)
        (r.is_trojan ? trojan : clean) += r.margin, ++(r.is_trojan ? nt : nc);
    std::cout << "margins.csv written (" << rows.size() << " models); mean margin clean="
              << (nc ? clean / nc : 0.0) << " trojan=" << (nt ? trojan / nt : 0.0) << "\n";
    return 0;
}

int run_analyze_spectrum(AnalyzeArgs a) {
    if (!a.config.empty()) {
        json o = load_run_config(a.config, "analyze spectrum");
        a.zoo = o.at("zoo").get<std::string>();
        a.dataset = o.at("dataset").get<std::string>();
        a.samples_per_class = o.at("samples_per_class").get<int>();
        a.k = o.at("k").get<int>();
        a.seed = o.at("seed").get<uint64_t>();
    }
    a.workers = env_workers(a.workers);
    data::Dataset ds = require_dataset(a.dataset);
    zoo::Manifest m = require_manifest(a.zoo);
    write_run_config(a.out, "analyze spectrum",
                     {{"zoo", a.zoo},
                      {"dataset", a.dataset},
                      {"samples_per_class", a.samples_per_class},
                      {"k", a.k},
                      {"seed", a.seed}});
    auto runs = analysis::spectrum_table(m, a.zoo, ds.validation, ds.class_count,
                                         a.samples_per_class, a.seed, a.workers);
    std::vector<std::pair<std::string, geom::SpectrumReport>> labeled;
    for (const auto& run : runs) {
        textio::write_text_file(
            (fs::path(a.out) / ("spectrum_" + run.model_id + ".csv")).string(),
            analysis::spectrum_csv(run.report));
        labeled.emplace_back(run.label, run.report);
    }
    geom::SpectrumComparison cmp = geom::compare_spectra(labeled, a.k);
    textio::write_text_file((fs::path(a.out) / "spectrum_compare.csv").string(),
                            analysis::spectrum_compare_csv(cmp));
    std::string summary = "label,mean_energy_at_k,std_energy_at_k,n\n";
    for (size_t g = 0; g < cmp.labels.size(); ++g)
        summary += cmp.labels[g] + "," + textio::format_double(cmp.mean_energy_at_k[g]) + "," +
                   textio::format_double(cmp.std_energy_at_k[g]) + "," +
                   std::to_string(cmp.group_sizes[g]) + "\n";
    textio::write_text_file((fs::path(a.out) / "spectrum_energy.csv").string(), summary);
    std::cout << "spectrum CSVs written for " << runs.size() << " models; energy_at(k=" << a.k
              << "):\n" << summary;
    return 0;
}

// ---- detect -----------------------------------------------------------------

struct DetectArgs {
    std::string model, zoo, dataset, out, config;
    detect::DetectorConfig cfg;
    double xi = 0.0;  // 0 = per-channel rule
    int folds = 5;
    double min_accuracy = -1.0;
    int workers = 1;
};

detect::DetectorConfig resolve_detector(const DetectArgs& a, int channels) {
    detect::DetectorConfig cfg = a.cfg;
    cfg.xi = a.xi > 0 ? a.xi : detect::default_xi(channels);
    return cfg;
}

int run_detect_single(DetectArgs a) {
    if (!a.config.empty()) {
        json o = load_run_config(a.config, "detect single");
        a.model = o.at("model").get<std::string>();
        a.dataset = o.at("dataset").get<std::string>();
        a.cfg = detect::detector_config_from_json(o.at("detector").dump());
        a.xi = a.cfg.xi;
    }
    if (!fs::exists(a.model)) throw IoError("model path not found: " + a.model);
    data::Dataset ds = require_dataset(a.dataset);
    nn::Model model = nn::load_model(a.model);
    detect::DetectorConfig cfg = resolve_detector(a, ds.input_shape[0]);
    if (!a.out.empty())
        write_run_config(a.out, "detect single",
                         {{"model", a.model},
                          {"dataset", a.dataset},
                          {"detector", json::parse(detect::detector_config_json(cfg))}});
    detect::DetectorVerdict v = detect::classify_model(model, ds.validation, cfg);
    std::cout << "verdict=" << (v.is_trojan ? "trojan" : "clean")
              << " perturbed_error=" << v.perturbed_error << " clean_error=" << v.clean_error
              << " iters=" << v.outer_iters_used << " xi=" << cfg.xi << "\n";
    return 0;
}

int run_detect_bench(DetectArgs a) {
    if (!a.config.empty()) {
        json o = load_run_config(a.config, "detect bench");
        a.zoo = o.at("zoo").get<std::string>();
        a.dataset = o.at("dataset").get<std::string>();
        a.folds = o.at("folds").get<int>();
        a.min_accuracy = o.at("min_accuracy").get<double>();
        a.cfg = detect::detector_config_from_json(o.at("detector").dump());
        a.xi = a.cfg.xi;
    }
    a.workers = env_workers(a.workers);
    data::Dataset ds = require_dataset(a.dataset);
    zoo::Manifest m = require_manifest(a.zoo);
    detect::DetectorConfig cfg = resolve_detector(a, ds.input_shape[0]);
    write_run_config(a.out, "detect bench",
                     {{"zoo", a.zoo},
                      {"dataset", a.dataset},
                      {"folds", a.folds},
                      {"min_accuracy", a.min_accuracy},
                      {"detector", json::parse(detect::detector_config_json(cfg))}});
    detect::MetricsReport report =
        detect::evaluate_detector(m, a.zoo, ds.validation, cfg, a.folds, a.workers);
    textio::write_text_file((fs::path(a.out) / "detector_report").string(),
                            detect::metrics_report_json(report, cfg));
    textio::write_text_file((fs::path(a.out) / "detector_report.csv").string(),
                            detect::metrics_report_csv(report));
    std::cout << "detector: accuracy=" << report.accuracy_mean << "+-" << report.accuracy_std
              << " precision=" << report.precision_mean << "+-" << report.precision_std
              << " recall=" << report.recall_mean << "+-" << report.recall_std << " over "
              << a.folds << " folds (" << report.rows.size() << " models)\n";
    std::cout << "mean perturbed error: trojan=" << report.mean_perturbed_error_trojan
              << " clean=" << report.mean_perturbed_error_clean << "\n";
    if (a.min_accuracy >= 0 && report.overall_accuracy < a.min_accuracy) {
        std::cerr << "accuracy " << report.overall_accuracy << " below gate " << a.min_accuracy
                  << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trojanscope: Trojan model creation, geometry analysis and detection"};
    app.require_subcommand(1);

    // dataset
    auto* dataset = app.add_subcommand("dataset", "prepare or synthesize datasets");
    dataset->require_subcommand(1);
    SynthArgs synth;
    auto* synth_cmd = dataset->add_subcommand("synth", "generate the synthetic shapes dataset");
    synth_cmd->add_option("--classes", synth.classes, "number of classes (2..10)");
    synth_cmd->add_option("--n", synth.n, "total sample count (90/10 train/validation)");
    synth_cmd->add_option("--seed", synth.seed, "master seed");
    synth_cmd->add_option("--size", synth.size, "image side length");
    synth_cmd->add_option("--channels", synth.channels, "1 or 3");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--config", synth.config, "replay an echoed run_config");

    PrepareArgs prep;
    auto* prep_cmd = dataset->add_subcommand("prepare", "import IDX image/label files");
    prep_cmd->add_option("--images", prep.images, "IDX images file");
    prep_cmd->add_option("--labels", prep.labels, "IDX labels file");
    prep_cmd->add_option("--seed", prep.seed, "split seed");
    prep_cmd->add_option("--val-fraction", prep.val_fraction, "validation fraction");
    prep_cmd->add_option("--out", prep.out, "output directory")->required();
    prep_cmd->add_option("--config", prep.config, "replay an echoed run_config");

    // zoo
    auto* zoo_cmd = app.add_subcommand("zoo", "build model zoos");
    zoo_cmd->require_subcommand(1);
    ZooArgs zb;
    auto* build_cmd = zoo_cmd->add_subcommand("build", "train clean and Trojan models");
    build_cmd->add_option("--dataset", zb.dataset, "dataset directory");
    build_cmd->add_option("--out", zb.out, "zoo output directory")->required();
    build_cmd->add_option("--clean", zb.cfg.n_clean, "clean model count");
    build_cmd->add_option("--trojan-per-mapping", zb.cfg.n_trojan_per_mapping,
                          "Trojan models per mapping kind");
    build_cmd->add_option("--mappings", zb.mappings, "comma list of m2o,m2m,mixed");
    build_cmd->add_option("--arch", zb.archs, "comma list of mlp-2,cnn-s,cnn-m");
    build_cmd->add_option("--epochs", zb.cfg.train_cfg.epochs, "training epochs");
    build_cmd->add_option("--batch-size", zb.cfg.train_cfg.batch_size, "batch size");
    build_cmd->add_option("--lr", zb.cfg.train_cfg.learning_rate, "learning rate");
    build_cmd->add_option("--momentum", zb.cfg.train_cfg.momentum, "SGD momentum");
    build_cmd->add_option("--p-min", zb.cfg.p_min, "poisoning ratio lower bound");
    build_cmd->add_option("--p-max", zb.cfg.p_max, "poisoning ratio upper bound");
    build_cmd->add_option("--noise", zb.cfg.noise_amplitude, "background noise amplitude");
    build_cmd->add_option("--va-gap", zb.cfg.va_gap_max, "max VA gap vs clean reference");
    build_cmd->add_option("--fr-min", zb.cfg.fr_min, "fooling rate floor");
    build_cmd->add_option("--seed", zb.cfg.master_seed, "master seed");
    build_cmd->add_option("--workers", zb.cfg.workers, "parallel training jobs");
    build_cmd->add_option("--config", zb.config, "replay an echoed run_config");

    ZooArgs zs;
    auto* sweep_cmd = zoo_cmd->add_subcommand("sweep", "poisoning-ratio sweep");
    sweep_cmd->add_option("--dataset", zs.dataset, "dataset directory");
    sweep_cmd->add_option("--out", zs.out, "output directory")->required();
    sweep_cmd->add_option("--p", zs.p_list, "comma list of poisoning ratios");
    sweep_cmd->add_option("--mappings", zs.mappings, "mapping for the swept model");
    sweep_cmd->add_option("--arch", zs.archs, "architecture");
    sweep_cmd->add_option("--epochs", zs.cfg.train_cfg.epochs, "training epochs");
    sweep_cmd->add_option("--batch-size", zs.cfg.train_cfg.batch_size, "batch size");
    sweep_cmd->add_option("--lr", zs.cfg.train_cfg.learning_rate, "learning rate");
    sweep_cmd->add_option("--momentum", zs.cfg.train_cfg.momentum, "SGD momentum");
    sweep_cmd->add_option("--noise", zs.cfg.noise_amplitude, "background noise amplitude");
    sweep_cmd->add_option("--seed", zs.cfg.master_seed, "master seed");
    sweep_cmd->add_option("--workers", zs.cfg.workers, "parallel training jobs");
    sweep_cmd->add_option("--config", zs.config, "replay an echoed run_config");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "margin and spectrum analysis");
    analyze->require_subcommand(1);
    AnalyzeArgs am;
    auto* margin_cmd = analyze->add_subcommand("margin", "per-model margin estimates");
    margin_cmd->add_option("--zoo", am.zoo, "zoo directory");
    margin_cmd->add_option("--dataset", am.dataset, "dataset directory");
    margin_cmd->add_option("--out", am.out, "output directory")->required();
    margin_cmd->add_option("--samples", am.samples, "validation samples per model (0 = all)");
    margin_cmd->add_option("--max-iter", am.max_iter, "projection iteration cap");
    margin_cmd->add_option("--overshoot", am.overshoot, "crossing overshoot eta");
    margin_cmd->add_option("--workers", am.workers, "parallel jobs");
    margin_cmd->add_option("--config", am.config, "replay an echoed run_config");

    AnalyzeArgs as;
    auto* spectrum_cmd = analyze->add_subcommand("spectrum", "singular spectra of S");
    spectrum_cmd->add_option("--zoo", as.zoo, "zoo directory");
    spectrum_cmd->add_option("--dataset", as.dataset, "dataset directory");
    spectrum_cmd->add_option("--out", as.out, "output directory")->required();
    spectrum_cmd->add_option("--samples-per-class", as.samples_per_class,
                             "validation samples per class");
    spectrum_cmd->add_option("--k", as.k, "energy checkpoint index");
    spectrum_cmd->add_option("--seed", as.seed, "sampling seed");
    spectrum_cmd->add_option("--workers", as.workers, "parallel jobs");
    spectrum_cmd->add_option("--config", as.config, "replay an echoed run_config");

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "Trojan detection");
    detect_cmd->require_subcommand(1);
    DetectArgs d1;
    auto* single_cmd = detect_cmd->add_subcommand("single", "classify one model");
    single_cmd->add_option("--model", d1.model, "model directory");
    single_cmd->add_option("--dataset", d1.dataset, "dataset directory");
    single_cmd->add_option("--xi", d1.xi, "perturbation magnitude (default: 5 gray / 10 color)");
    single_cmd->add_option("--rho", d1.cfg.rho, "probe error threshold");
    single_cmd->add_option("--J", d1.cfg.J, "max outer iterations");
    single_cmd->add_option("--delta", d1.cfg.delta, "verdict threshold");
    single_cmd->add_option("--probe-per-class", d1.cfg.probe_per_class, "probe samples per class");
    single_cmd->add_option("--seed", d1.cfg.seed, "probe selection seed");
    single_cmd->add_flag("--err-vs-clean-predictions", d1.cfg.err_vs_clean_predictions,
                         "measure Err against clean predictions instead of labels");
    single_cmd->add_flag("--clamp", d1.cfg.clamp_perturbed, "clamp perturbed images to [0,1]");
    single_cmd->add_option("--out", d1.out, "directory for the run_config echo");
    single_cmd->add_option("--config", d1.config, "replay an echoed run_config");

    DetectArgs db;
    auto* bench_cmd = detect_cmd->add_subcommand("bench", "k-fold benchmark over a zoo");
    bench_cmd->add_option("--zoo", db.zoo, "zoo directory");
    bench_cmd->add_option("--dataset", db.dataset, "dataset directory");
    bench_cmd->add_option("--out", db.out, "output directory")->required();
    bench_cmd->add_option("--folds", db.folds, "cross-validation folds");
    bench_cmd->add_option("--min-accuracy", db.min_accuracy,
                          "exit nonzero when aggregate accuracy falls below this");
    bench_cmd->add_option("--xi", db.xi, "perturbation magnitude (default: 5 gray / 10 color)");
    bench_cmd->add_option("--rho", db.cfg.rho, "probe error threshold");
    bench_cmd->add_option("--J", db.cfg.J, "max outer iterations");
    bench_cmd->add_option("--delta", db.cfg.delta, "verdict threshold");
    bench_cmd->add_option("--probe-per-class", db.cfg.probe_per_class, "probe samples per class");
    bench_cmd->add_option("--seed", db.cfg.seed, "probe selection seed");
    bench_cmd->add_flag("--err-vs-clean-predictions", db.cfg.err_vs_clean_predictions,
                        "measure Err against clean predictions instead of labels");
    bench_cmd->add_flag("--clamp", db.cfg.clamp_perturbed, "clamp perturbed images to [0,1]");
    bench_cmd->add_option("--workers", db.workers, "parallel jobs");
    bench_cmd->add_option("--config", db.config, "replay an echoed run_config");

    try {
        app.parse(argc, argv);
        if (*synth_cmd) return run_synth(synth);
        if (*prep_cmd) return run_prepare(prep);
        if (*build_cmd) return run_zoo_build(zb);
        if (*sweep_cmd) return run_zoo_sweep(zs);
        if (*margin_cmd) return run_analyze_margin(am);
        if (*spectrum_cmd) return run_analyze_spectrum(as);
        if (*single_cmd) return run_detect_single(d1);
        if (*bench_cmd) return run_detect_bench(db);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
