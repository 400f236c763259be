#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trojanscope/dataset.hpp"
#include "trojanscope/model.hpp"
#include "trojanscope/zoo.hpp"

namespace trojanscope::detect {

struct DetectorConfig {
    double xi = 5.0;    // perturbation magnitude; 5 for 1-channel, 10 for 3-channel inputs
    double rho = 0.5;   // probe-batch error threshold inside the loop
    int J = 10;         // maximum outer iterations
    double delta = 0.5; // verdict threshold on the perturbed error rate
    int probe_per_class = 40;
    uint64_t seed = 0;
    // Err against clean predictions instead of ground-truth labels
    // (ablation switch, default off).
    bool err_vs_clean_predictions = false;
    // Clamp perturbed images back to [0,1] (ablation switch, default off:
    // clamping would silently shrink xi).
    bool clamp_perturbed = false;
};

inline double default_xi(int channels) { return channels == 1 ? 5.0 : 10.0; }

// Fraction of samples where predict() disagrees with the ground truth.
double error_rate(const nn::Model& m, const data::LabeledSet& set);

struct PerturbationResult {
    Tensor r;        // |r| = xi unless the loop never ran
    int iters = 0;   // outer iterations executed, <= J + 1
    int skipped = 0; // probe samples whose projection step failed (across all iterations)
};

// Step 1 of the detector: accumulate unit-normalized single-step boundary
// perturbations of the probe batch into a shared direction, rescaled to
// magnitude xi each pass, while the probe error stays below rho.
PerturbationResult detector_perturbation(const nn::Model& m, const data::LabeledSet& probe,
                                         const DetectorConfig& cfg);

struct DetectorVerdict {
    bool is_trojan = false;
    double perturbed_error = 0.0;
    double clean_error = 0.0;
    Tensor r_X;
    int outer_iters_used = 0;
};

// Step 2: draws a stratified probe batch X from the validation split
// (seeded), computes r_X, adds it to every remaining validation image and
// compares the resulting error rate against delta.
DetectorVerdict classify_model(const nn::Model& m, const data::LabeledSet& validation,
                               const DetectorConfig& cfg);

struct VerdictRow {
    std::string model_id;
    bool truth_trojan = false;
    bool verdict_trojan = false;
    double perturbed_error = 0.0;
    double clean_error = 0.0;
    int iters = 0;
    int fold = 0;
};

struct FoldMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double accuracy = 0.0;
    int n = 0;
};

struct MetricsReport {
    std::vector<VerdictRow> rows;
    std::vector<FoldMetrics> folds;
    double precision_mean = 0.0, precision_std = 0.0;
    double recall_mean = 0.0, recall_std = 0.0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double overall_accuracy = 0.0;
    double mean_perturbed_error_trojan = 0.0;
    double mean_perturbed_error_clean = 0.0;
};

// Runs the detector over every manifest record (models under zoo_dir),
// partitioning models into `folds` stratified folds for mean/std reporting.
// Trojan is the positive class. Hyperparameters are fixed by cfg, so folds
// serve variance estimation only.
MetricsReport evaluate_detector(const zoo::Manifest& manifest, const std::string& zoo_dir,
                                const data::LabeledSet& validation, const DetectorConfig& cfg,
                                int folds, int workers = 1);

std::string metrics_report_json(const MetricsReport& report, const DetectorConfig& cfg);
std::string metrics_report_csv(const MetricsReport& report);

std::string detector_config_json(const DetectorConfig& cfg);
DetectorConfig detector_config_from_json(const std::string& text);

}  // namespace trojanscope::detect
