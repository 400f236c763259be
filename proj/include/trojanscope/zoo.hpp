#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trojanscope/dataset.hpp"
#include "trojanscope/poison.hpp"
#include "trojanscope/train.hpp"

namespace trojanscope::zoo {

struct ZooConfig {
    std::vector<std::string> arch_ids = {"cnn-s"};
    int n_clean = 20;
    int n_trojan_per_mapping = 7;
    std::vector<poison::MappingKind> mappings = {
        poison::MappingKind::M2O, poison::MappingKind::M2M, poison::MappingKind::Mixed};
    double p_min = 0.15, p_max = 0.20;  // poisoning ratio range
    // trigger menu rotated across Trojan slots: "patch:<pattern>" or
    // "filter:<pattern>"
    std::vector<std::string> trigger_menu = {"patch:square", "patch:cross", "patch:checkerboard",
                                             "patch:random_bits", "filter:channel_scale",
                                             "filter:channel_shift"};
    double noise_amplitude = 0.05;
    nn::TrainConfig train_cfg;
    double va_gap_max = 0.02;  // Trojan VA must sit within 2% of the clean reference
    double fr_min = 0.90;
    uint64_t master_seed = 1;
    int workers = 1;
};

struct ZooRecord {
    std::string record_id;
    std::string model_path;  // relative to the zoo directory
    std::string arch_id;
    bool is_trojan = false;
    poison::MappingKind mapping = poison::MappingKind::M2O;
    std::optional<poison::PoisonConfig> poison_cfg;
    double va = 0.0;
    std::optional<double> fooling_rate;
    uint64_t seed = 0;
    int retrains = 0;
};

struct Manifest {
    std::string toolkit_version;
    std::string config_hash;
    std::string dataset_id;
    std::vector<ZooRecord> records;
    std::vector<std::string> dropped_slots;  // slot ids that failed validation twice

    int count(bool trojan) const {
        int n = 0;
        for (const auto& r : records)
            if (r.is_trojan == trojan) ++n;
        return n;
    }
};

// Fraction of trigger_eval samples classified as their mapped target. For
// Mixed mappings, samples whose label the mapping left unchanged are
// excluded from the denominator.
double fooling_rate(const nn::Model& m, const poison::TriggerEval& eval);

using LogFn = std::function<void(const std::string&)>;

// Trains n_clean clean models plus n_trojan_per_mapping Trojans per mapping
// kind, validates Trojans against the clean reference VA (per arch) and the
// fooling-rate floor, retrains invalid slots once, and persists everything
// under out_dir (models/<record_id>/ plus a zoo_manifest file).
Manifest build_zoo(const ZooConfig& cfg, const data::Dataset& ds, const std::string& out_dir,
                   const LogFn& log = nullptr);

struct SweepRow {
    double p;
    double va;
    double fooling_rate;
};

// One Trojan per poisoning ratio, identical seed/trigger/mapping otherwise.
std::vector<SweepRow> sweep_poison_ratio(const ZooConfig& cfg, const data::Dataset& ds,
                                         const std::vector<double>& p_values,
                                         const LogFn& log = nullptr);

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);
void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

// Canonical JSON echo of a ZooConfig; hashed into Manifest::config_hash.
std::string zoo_config_json(const ZooConfig& cfg, const std::string& dataset_dir);
ZooConfig zoo_config_from_json(const std::string& text, std::string* dataset_dir = nullptr);

// Shared worker pool: runs fn(0..n_jobs-1) over `workers` threads. Results
// must be written to per-job slots; the first exception is rethrown.
void run_jobs(int workers, int n_jobs, const std::function<void(int)>& fn);

}  // namespace trojanscope::zoo
