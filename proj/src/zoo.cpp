#include "trojanscope/zoo.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "trojanscope/serialize.hpp"
#include "trojanscope/textio.hpp"

namespace trojanscope::zoo {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

double fooling_rate(const nn::Model& m, const poison::TriggerEval& eval) {
    const int n = eval.size();
    if (n == 0) throw SpecError("fooling_rate on empty trigger_eval set");
    std::vector<int> pred = nn::predict(m, eval.images);
    int hits = 0, considered = 0;
    const bool mixed = eval.mapping_kind == poison::MappingKind::Mixed;
    for (int i = 0; i < n; ++i) {
        if (mixed && !eval.label_changed[i]) continue;
        ++considered;
        if (pred[i] == eval.mapped_labels[i]) ++hits;
    }
    if (considered == 0) throw SpecError("fooling_rate: mapping changed no labels");
    return static_cast<double>(hits) / considered;
}

void run_jobs(int workers, int n_jobs, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, n_jobs));
    if (workers == 1) {
        for (int i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n_jobs) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---- config / manifest JSON -------------------------------------------------

namespace {

json trigger_to_json(const poison::TriggerSpec& t) {
    json j;
    j["family"] = poison::trigger_family_name(t.family);
    if (t.family == poison::TriggerFamily::patch) {
        j["pattern"] = poison::patch_pattern_name(t.patch_pattern);
        j["area_fraction"] = t.area_fraction;
        j["color"] = t.color;
        j["location"] = t.random_location
                            ? json("random")
                            : json(std::vector<int>{t.fixed_x, t.fixed_y});
    } else {
        j["pattern"] = poison::filter_pattern_name(t.filter_pattern);
        j["scale"] = t.filter_scale;
        j["shift"] = t.filter_shift;
    }
    j["pattern_seed"] = t.pattern_seed;
    return j;
}

poison::TriggerSpec trigger_from_json(const json& j) {
    poison::TriggerSpec t;
    t.family = poison::trigger_family_from_name(j.at("family").get<std::string>());
    if (t.family == poison::TriggerFamily::patch) {
        t.patch_pattern = poison::patch_pattern_from_name(j.at("pattern").get<std::string>());
        t.area_fraction = j.at("area_fraction").get<double>();
        t.color = j.at("color").get<std::vector<float>>();
        if (j.at("location").is_string()) {
            t.random_location = true;
        } else {
            t.random_location = false;
            auto loc = j.at("location").get<std::vector<int>>();
            t.fixed_x = loc.at(0);
            t.fixed_y = loc.at(1);
        }
    } else {
        t.filter_pattern = poison::filter_pattern_from_name(j.at("pattern").get<std::string>());
        t.filter_scale = j.at("scale").get<std::vector<float>>();
        t.filter_shift = j.at("shift").get<std::vector<float>>();
    }
    t.pattern_seed = j.at("pattern_seed").get<uint64_t>();
    return t;
}

json mapping_to_json(const poison::LabelMapping& m) {
    json j;
    j["kind"] = poison::mapping_kind_name(m.kind);
    j["class_count"] = m.class_count;
    switch (m.kind) {
        case poison::MappingKind::M2O: j["target"] = m.target; break;
        case poison::MappingKind::M2M: j["permutation"] = m.permutation; break;
        case poison::MappingKind::Mixed: {
            j["target"] = m.target;
            j["permutation"] = m.permutation;
            std::vector<std::string> actions;
            for (auto a : m.partition)
                actions.push_back(a == poison::MixedAction::to_target  ? "to_target"
                                  : a == poison::MixedAction::permuted ? "permuted"
                                                                       : "unchanged");
            j["partition"] = actions;
            break;
        }
    }
    return j;
}

poison::LabelMapping mapping_from_json(const json& j) {
    poison::LabelMapping m;
    m.kind = poison::mapping_kind_from_name(j.at("kind").get<std::string>());
    m.class_count = j.at("class_count").get<int>();
    if (j.contains("target")) m.target = j.at("target").get<int>();
    if (j.contains("permutation")) m.permutation = j.at("permutation").get<std::vector<int>>();
    if (j.contains("partition")) {
        for (const auto& a : j.at("partition")) {
            const std::string s = a.get<std::string>();
            m.partition.push_back(s == "to_target"  ? poison::MixedAction::to_target
                                  : s == "permuted" ? poison::MixedAction::permuted
                                                    : poison::MixedAction::unchanged);
        }
    }
    poison::validate_mapping(m);
    return m;
}

json poison_to_json(const poison::PoisonConfig& p) {
    json j;
    j["trigger"] = trigger_to_json(p.trigger);
    j["mapping"] = mapping_to_json(p.mapping);
    j["ratio_P"] = p.ratio_P;
    j["noise_amplitude"] = p.noise_amplitude;
    j["seed"] = p.seed;
    return j;
}

poison::PoisonConfig poison_from_json(const json& j) {
    poison::PoisonConfig p;
    p.trigger = trigger_from_json(j.at("trigger"));
    p.mapping = mapping_from_json(j.at("mapping"));
    p.ratio_P = j.at("ratio_P").get<double>();
    p.noise_amplitude = j.at("noise_amplitude").get<double>();
    p.seed = j.at("seed").get<uint64_t>();
    return p;
}

json record_to_json(const ZooRecord& r) {
    json j;
    j["record_id"] = r.record_id;
    j["model_path"] = r.model_path;
    j["arch_id"] = r.arch_id;
    j["is_trojan"] = r.is_trojan;
    j["mapping"] = r.is_trojan ? json(poison::mapping_kind_name(r.mapping)) : json(nullptr);
    j["poison"] = r.poison_cfg ? poison_to_json(*r.poison_cfg) : json(nullptr);
    j["va"] = r.va;
    j["fooling_rate"] = r.fooling_rate ? json(*r.fooling_rate) : json(nullptr);
    j["seed"] = r.seed;
    j["retrains"] = r.retrains;
    return j;
}

ZooRecord record_from_json(const json& j) {
    ZooRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.model_path = j.at("model_path").get<std::string>();
    r.arch_id = j.at("arch_id").get<std::string>();
    r.is_trojan = j.at("is_trojan").get<bool>();
    if (!j.at("mapping").is_null())
        r.mapping = poison::mapping_kind_from_name(j.at("mapping").get<std::string>());
    if (!j.at("poison").is_null()) r.poison_cfg = poison_from_json(j.at("poison"));
    r.va = j.at("va").get<double>();
    if (!j.at("fooling_rate").is_null()) r.fooling_rate = j.at("fooling_rate").get<double>();
    r.seed = j.at("seed").get<uint64_t>();
    r.retrains = j.at("retrains").get<int>();
    return r;
}

std::string mapping_kind_list(const std::vector<poison::MappingKind>& kinds) {
    std::string s;
    for (size_t i = 0; i < kinds.size(); ++i) {
        if (i) s += ',';
        s += poison::mapping_kind_name(kinds[i]);
    }
    return s;
}

}  // namespace

std::string manifest_to_json(const Manifest& m) {
    json j;
    j["format_version"] = 1;
    j["toolkit_version"] = m.toolkit_version;
    j["config_hash"] = m.config_hash;
    j["dataset_id"] = m.dataset_id;
    j["record_count"] = m.records.size();
    j["records"] = json::array();
    for (const auto& r : m.records) j["records"].push_back(record_to_json(r));
    j["dropped_slots"] = m.dropped_slots;
    return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("zoo_manifest is not valid JSON: ") + e.what(),
                          static_cast<long long>(e.byte));
    }
    try {
        Manifest m;
        m.toolkit_version = j.at("toolkit_version").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.dataset_id = j.at("dataset_id").get<std::string>();
        for (const auto& rj : j.at("records")) m.records.push_back(record_from_json(rj));
        if (j.contains("dropped_slots"))
            m.dropped_slots = j.at("dropped_slots").get<std::vector<std::string>>();
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("zoo_manifest missing fields: ") + e.what());
    }
}

void save_manifest(const Manifest& m, const std::string& path) {
    textio::write_text_file(path, manifest_to_json(m));
}

Manifest load_manifest(const std::string& path) {
    return manifest_from_json(textio::read_text_file(path));
}

std::string zoo_config_json(const ZooConfig& cfg, const std::string& dataset_dir) {
    json j;
    j["dataset_dir"] = dataset_dir;
    j["arch_ids"] = cfg.arch_ids;
    j["n_clean"] = cfg.n_clean;
    j["n_trojan_per_mapping"] = cfg.n_trojan_per_mapping;
    j["mappings"] = mapping_kind_list(cfg.mappings);
    j["p_min"] = cfg.p_min;
    j["p_max"] = cfg.p_max;
    j["trigger_menu"] = cfg.trigger_menu;
    j["noise_amplitude"] = cfg.noise_amplitude;
    j["train"] = {{"epochs", cfg.train_cfg.epochs},
                  {"batch_size", cfg.train_cfg.batch_size},
                  {"learning_rate", cfg.train_cfg.learning_rate},
                  {"momentum", cfg.train_cfg.momentum}};
    j["va_gap_max"] = cfg.va_gap_max;
    j["fr_min"] = cfg.fr_min;
    j["master_seed"] = cfg.master_seed;
    j["workers"] = cfg.workers;
    return j.dump(2) + "\n";
}

ZooConfig zoo_config_from_json(const std::string& text, std::string* dataset_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("zoo config is not valid JSON: ") + e.what(),
                          static_cast<long long>(e.byte));
    }
    ZooConfig cfg;
    if (dataset_dir) *dataset_dir = j.at("dataset_dir").get<std::string>();
    cfg.arch_ids = j.at("arch_ids").get<std::vector<std::string>>();
    cfg.n_clean = j.at("n_clean").get<int>();
    cfg.n_trojan_per_mapping = j.at("n_trojan_per_mapping").get<int>();
    cfg.mappings.clear();
    for (const std::string& part : textio::split(j.at("mappings").get<std::string>(), ','))
        if (!part.empty()) cfg.mappings.push_back(poison::mapping_kind_from_name(part));
    cfg.p_min = j.at("p_min").get<double>();
    cfg.p_max = j.at("p_max").get<double>();
    cfg.trigger_menu = j.at("trigger_menu").get<std::vector<std::string>>();
    cfg.noise_amplitude = j.at("noise_amplitude").get<double>();
    cfg.train_cfg.epochs = j.at("train").at("epochs").get<int>();
    cfg.train_cfg.batch_size = j.at("train").at("batch_size").get<int>();
    cfg.train_cfg.learning_rate = j.at("train").at("learning_rate").get<double>();
    cfg.train_cfg.momentum = j.at("train").at("momentum").get<double>();
    cfg.va_gap_max = j.at("va_gap_max").get<double>();
    cfg.fr_min = j.at("fr_min").get<double>();
    cfg.master_seed = j.at("master_seed").get<uint64_t>();
    cfg.workers = j.at("workers").get<int>();
    return cfg;
}

// ---- zoo building -----------------------------------------------------------

namespace {

// Deterministic per-slot trigger drawn from the menu.
poison::TriggerSpec make_trigger(const ZooConfig& cfg, int channels, int slot, Rng& rng) {
    const std::string& entry = cfg.trigger_menu[slot % cfg.trigger_menu.size()];
    const auto parts = textio::split(entry, ':');
    if (parts.size() != 2) throw SpecError("trigger menu entry must be family:pattern, got '" +
                                           entry + "'");
    poison::TriggerSpec t;
    t.family = poison::trigger_family_from_name(parts[0]);
    t.pattern_seed = rng.next_u64();
    if (t.family == poison::TriggerFamily::patch) {
        t.patch_pattern = poison::patch_pattern_from_name(parts[1]);
        t.area_fraction = rng.uniform(0.01, 0.03);  // 1% to 3% of image area
        t.random_location = true;
        t.color.clear();
        for (int c = 0; c < channels; ++c)
            t.color.push_back(channels == 1 ? 1.0f
                                            : static_cast<float>(rng.uniform(0.55, 1.0)));
    } else {
        t.filter_pattern = poison::filter_pattern_from_name(parts[1]);
        t.filter_scale.clear();
        t.filter_shift.clear();
        for (int c = 0; c < channels; ++c) {
            if (t.filter_pattern == poison::FilterPattern::channel_scale) {
                t.filter_scale.push_back(static_cast<float>(rng.uniform(0.45, 0.65)));
                t.filter_shift.push_back(static_cast<float>(rng.uniform(0.25, 0.40)));
            } else {
                t.filter_scale.push_back(1.0f);
                t.filter_shift.push_back(static_cast<float>(rng.uniform(0.30, 0.45)));
            }
        }
    }
    return t;
}

poison::LabelMapping make_mapping(poison::MappingKind kind, int class_count, Rng& rng) {
    switch (kind) {
        case poison::MappingKind::M2O:
            return poison::make_m2o(class_count, rng.uniform_int(class_count));
        case poison::MappingKind::M2M:
            return poison::make_m2m(class_count, 1 + rng.uniform_int(class_count - 1));
        case poison::MappingKind::Mixed:
            return poison::make_mixed(class_count, rng.uniform_int(class_count));
    }
    throw SpecError("bad mapping kind");
}

struct TrojanOutcome {
    bool valid = false;
    nn::Model model;
    poison::PoisonConfig poison_cfg;
    double va = 0.0;
    double fr = 0.0;
    uint64_t seed = 0;
};

}  // namespace

Manifest build_zoo(const ZooConfig& cfg, const data::Dataset& ds, const std::string& out_dir,
                   const LogFn& log) {
    if (cfg.n_clean < 1) throw SpecError("n_clean must be >= 1");
    if (cfg.va_gap_max <= 0) throw SpecError("va_gap_max must be > 0");
    if (cfg.arch_ids.empty()) throw SpecError("arch_ids must not be empty");
    if (ds.train.size() == 0 || ds.validation.size() == 0)
        throw SpecError("zoo needs nonempty train and validation splits");

    auto say = [&](const std::string& s) {
        if (log) log(s);
    };

    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "models", ec);
    if (ec) throw IoError("cannot create zoo directory " + out_dir + ": " + ec.message());

    const int channels = ds.input_shape[0];
    auto slot_id = [](const std::string& kind, int i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%03d", i);
        return kind + "-" + buf;
    };

    // phase 1: clean models
    std::vector<nn::Model> clean_models(cfg.n_clean);
    std::vector<double> clean_va(cfg.n_clean);
    std::vector<std::string> clean_arch(cfg.n_clean);
    std::vector<uint64_t> clean_seed(cfg.n_clean);
    run_jobs(cfg.workers, cfg.n_clean, [&](int i) {
        const uint64_t seed = Rng::derive(cfg.master_seed, streams::kZooClean, i);
        const std::string arch = cfg.arch_ids[i % cfg.arch_ids.size()];
        nn::Model model = nn::make_model(arch, ds.input_shape, ds.class_count);
        nn::TrainConfig tc = cfg.train_cfg;
        tc.seed = seed;
        model = nn::train(std::move(model), ds.train, tc);
        clean_models[i] = std::move(model);
        clean_va[i] = nn::accuracy(clean_models[i], ds.validation);
        clean_arch[i] = arch;
        clean_seed[i] = seed;
        say("clean " + std::to_string(i) + " (" + arch + "): va=" +
            textio::format_double(clean_va[i]));
    });

    // per-arch clean reference VA = mean over clean models of that arch
    auto clean_ref_va = [&](const std::string& arch) {
        double total = 0.0;
        int n = 0;
        for (int i = 0; i < cfg.n_clean; ++i)
            if (clean_arch[i] == arch) {
                total += clean_va[i];
                ++n;
            }
        if (n == 0) throw SpecError("no clean reference for arch " + arch);
        return total / n;
    };

    // phase 2: Trojan slots, one retrain attempt on validation failure
    const int n_mappings = static_cast<int>(cfg.mappings.size());
    const int n_trojan_slots = n_mappings * cfg.n_trojan_per_mapping;
    std::vector<TrojanOutcome> outcomes(n_trojan_slots);
    std::vector<std::string> trojan_arch(n_trojan_slots);
    std::vector<int> trojan_retrains(n_trojan_slots, 0);
    run_jobs(cfg.workers, n_trojan_slots, [&](int s) {
        const poison::MappingKind kind = cfg.mappings[s / cfg.n_trojan_per_mapping];
        const std::string arch = cfg.arch_ids[s % cfg.arch_ids.size()];
        trojan_arch[s] = arch;
        const double ref_va = clean_ref_va(arch);
        for (int attempt = 0; attempt < 2; ++attempt) {
            const uint64_t seed =
                Rng::derive(cfg.master_seed, streams::kZooTrojan, s, attempt);
            Rng rng(seed);
            poison::PoisonConfig pc;
            pc.trigger = make_trigger(cfg, channels, s, rng);
            pc.mapping = make_mapping(kind, ds.class_count, rng);
            pc.ratio_P = rng.uniform(cfg.p_min, cfg.p_max);
            pc.noise_amplitude = cfg.noise_amplitude;
            pc.seed = rng.next_u64();

            poison::PoisonedData pd = poison::poison_dataset(ds.train, ds.validation, pc);
            nn::Model model = nn::make_model(arch, ds.input_shape, ds.class_count);
            nn::TrainConfig tc = cfg.train_cfg;
            tc.seed = seed;
            model = nn::train(std::move(model), pd.train, tc);
            const double va = nn::accuracy(model, ds.validation);
            const double fr = fooling_rate(model, pd.trigger_eval);
            const bool valid = std::abs(va - ref_va) <= cfg.va_gap_max && fr >= cfg.fr_min;
            say(std::string(poison::mapping_kind_name(kind)) + " slot " + std::to_string(s) +
                " attempt " + std::to_string(attempt) + ": va=" + textio::format_double(va) +
                " fr=" + textio::format_double(fr) + (valid ? "" : " (invalid)"));
            trojan_retrains[s] = attempt;
            if (valid) {
                outcomes[s] = {true, std::move(model), pc, va, fr, seed};
                return;
            }
            outcomes[s] = {false, nn::Model{}, pc, va, fr, seed};
        }
    });

    // single-writer assembly; the hash covers semantic config only (worker
    // count and paths do not affect results)
    Manifest manifest;
    manifest.toolkit_version = kToolkitVersion;
    manifest.dataset_id = ds.id;
    json hash_cfg = json::parse(zoo_config_json(cfg, ""));
    hash_cfg.erase("workers");
    manifest.config_hash = textio::hex_u64(textio::fnv1a(hash_cfg.dump()));

    for (int i = 0; i < cfg.n_clean; ++i) {
        ZooRecord r;
        r.record_id = slot_id("clean", i);
        r.model_path = "models/" + r.record_id;
        r.arch_id = clean_arch[i];
        r.is_trojan = false;
        r.va = clean_va[i];
        r.seed = clean_seed[i];
        nn::save_model(clean_models[i], (fs::path(out_dir) / r.model_path).string());
        manifest.records.push_back(std::move(r));
    }
    std::vector<int> per_mapping_count(n_mappings, 0);
    for (int s = 0; s < n_trojan_slots; ++s) {
        const int mapping_idx = s / cfg.n_trojan_per_mapping;
        const poison::MappingKind kind = cfg.mappings[mapping_idx];
        const std::string id =
            slot_id(poison::mapping_kind_name(kind), per_mapping_count[mapping_idx]++);
        if (!outcomes[s].valid) {
            manifest.dropped_slots.push_back(id + ": invalid after retrain (va=" +
                                             textio::format_double(outcomes[s].va) + ", fr=" +
                                             textio::format_double(outcomes[s].fr) + ")");
            say("dropped slot " + id);
            continue;
        }
        ZooRecord r;
        r.record_id = id;
        r.model_path = "models/" + id;
        r.arch_id = trojan_arch[s];
        r.is_trojan = true;
        r.mapping = kind;
        r.poison_cfg = outcomes[s].poison_cfg;
        r.va = outcomes[s].va;
        r.fooling_rate = outcomes[s].fr;
        r.seed = outcomes[s].seed;
        r.retrains = trojan_retrains[s];
        nn::save_model(outcomes[s].model, (fs::path(out_dir) / r.model_path).string());
        manifest.records.push_back(std::move(r));
    }

    save_manifest(manifest, (fs::path(out_dir) / "zoo_manifest").string());
    return manifest;
}

std::vector<SweepRow> sweep_poison_ratio(const ZooConfig& cfg, const data::Dataset& ds,
                                         const std::vector<double>& p_values, const LogFn& log) {
    if (p_values.empty()) throw SpecError("sweep needs at least one P value");
    for (double p : p_values)
        if (p <= 0.0 || p > 0.5) throw SpecError("sweep P values must be in (0, 0.5]");

    const int channels = ds.input_shape[0];
    std::vector<SweepRow> rows(p_values.size());
    run_jobs(cfg.workers, static_cast<int>(p_values.size()), [&](int i) {
        // identical seed and trigger across the sweep; only P varies
        const uint64_t seed = Rng::derive(cfg.master_seed, streams::kZooTrojan, 0, 0);
        Rng rng(seed);
        poison::PoisonConfig pc;
        pc.trigger = make_trigger(cfg, channels, 0, rng);
        pc.mapping = make_mapping(cfg.mappings.empty() ? poison::MappingKind::M2O
                                                       : cfg.mappings.front(),
                                  ds.class_count, rng);
        pc.noise_amplitude = cfg.noise_amplitude;
        pc.seed = rng.next_u64();
        pc.ratio_P = p_values[i];

        poison::PoisonedData pd = poison::poison_dataset(ds.train, ds.validation, pc);
        nn::Model model = nn::make_model(cfg.arch_ids.front(), ds.input_shape, ds.class_count);
        nn::TrainConfig tc = cfg.train_cfg;
        tc.seed = seed;
        model = nn::train(std::move(model), pd.train, tc);
        rows[i] = {p_values[i], nn::accuracy(model, ds.validation),
                   fooling_rate(model, pd.trigger_eval)};
        if (log)
            log("sweep P=" + textio::format_double(p_values[i]) +
                ": va=" + textio::format_double(rows[i].va) +
                " fr=" + textio::format_double(rows[i].fooling_rate));
    });
    return rows;
}

}  // namespace trojanscope::zoo
