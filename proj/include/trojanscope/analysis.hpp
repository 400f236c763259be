#pragma once

#include <string>
#include <vector>

#include "trojanscope/spectrum.hpp"
#include "trojanscope/zoo.hpp"

namespace trojanscope::analysis {

// Margin and spectrum batch runs over a zoo manifest, plus the CSV
// plot-data emitters (margins.csv, spectrum_<model_id>.csv,
// spectrum_compare.csv).

struct MarginRow {
    std::string model_id;
    bool is_trojan = false;
    std::string mapping;  // "clean" for clean models
    double margin = 0.0;
    int n_used = 0;
    int n_excluded = 0;
};

std::vector<MarginRow> margin_table(const zoo::Manifest& manifest, const std::string& zoo_dir,
                                    const data::LabeledSet& samples, int max_samples,
                                    int max_iter = geom::kDefaultMaxIter,
                                    double overshoot = geom::kDefaultOvershoot, int workers = 1);

std::string margins_csv(const std::vector<MarginRow>& rows);

struct SpectrumRun {
    std::string model_id;
    std::string label;  // "clean" or the mapping kind
    geom::SpectrumReport report;
};

// Stratified, seeded draw of samples_per_class validation samples per class
// feeds every model's normal matrix.
std::vector<SpectrumRun> spectrum_table(const zoo::Manifest& manifest,
                                        const std::string& zoo_dir,
                                        const data::LabeledSet& validation, int class_count,
                                        int samples_per_class, uint64_t seed, int workers = 1);

std::string spectrum_csv(const geom::SpectrumReport& report);
std::string spectrum_compare_csv(const geom::SpectrumComparison& cmp);

// Mean energy_at(k) for one label group of runs; k clamped per report.
double mean_energy_at(const std::vector<SpectrumRun>& runs, const std::string& label, int k);

// Stratified seeded subset used by spectrum_table, exposed for reuse.
data::LabeledSet stratified_subset(const data::LabeledSet& set, int class_count, int per_class,
                                   uint64_t seed);

}  // namespace trojanscope::analysis
