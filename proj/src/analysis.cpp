#include "trojanscope/analysis.hpp"

#include <algorithm>
#include <filesystem>

#include "trojanscope/rng.hpp"
#include "trojanscope/serialize.hpp"
#include "trojanscope/textio.hpp"

namespace trojanscope::analysis {

namespace fs = std::filesystem;

data::LabeledSet stratified_subset(const data::LabeledSet& set, int class_count, int per_class,
                                   uint64_t seed) {
    const int n = set.size();
    std::vector<std::vector<int>> by_class(class_count);
    for (int i = 0; i < n; ++i) by_class.at(set.labels[i]).push_back(i);
    Rng rng(Rng::derive(seed, streams::kDetectorProbe, 7));
    std::vector<int> idx;
    for (int c = 0; c < class_count; ++c) {
        if (static_cast<int>(by_class[c].size()) < per_class)
            throw SpecError("class " + std::to_string(c) + " has only " +
                            std::to_string(by_class[c].size()) + " samples, need " +
                            std::to_string(per_class));
        rng.shuffle(by_class[c]);
        idx.insert(idx.end(), by_class[c].begin(), by_class[c].begin() + per_class);
    }
    std::sort(idx.begin(), idx.end());

    data::LabeledSet out;
    out.split_tag = set.split_tag;
    std::vector<int> shape = set.images.shape;
    shape[0] = static_cast<int>(idx.size());
    out.images = Tensor(shape);
    out.labels.resize(idx.size());
    const size_t per = set.images.numel() / static_cast<size_t>(n);
    for (size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(&set.images.data[per * idx[i]], per, &out.images.data[per * i]);
        out.labels[i] = set.labels[idx[i]];
    }
    return out;
}

std::vector<MarginRow> margin_table(const zoo::Manifest& manifest, const std::string& zoo_dir,
                                    const data::LabeledSet& samples, int max_samples,
                                    int max_iter, double overshoot, int workers) {
    if (manifest.records.empty()) throw SpecError("empty manifest");
    data::LabeledSet subset = samples;
    if (max_samples > 0 && max_samples < samples.size()) {
        subset.images = Tensor(std::vector<int>{});
        std::vector<int> shape = samples.images.shape;
        shape[0] = max_samples;
        subset.images = Tensor(shape);
        const size_t per = samples.images.numel() / static_cast<size_t>(samples.size());
        std::copy_n(samples.images.data.begin(), per * max_samples,
                    subset.images.data.begin());
        subset.labels.assign(samples.labels.begin(), samples.labels.begin() + max_samples);
    }

    std::vector<MarginRow> rows(manifest.records.size());
    zoo::run_jobs(workers, static_cast<int>(manifest.records.size()), [&](int i) {
        const zoo::ZooRecord& rec = manifest.records[i];
        nn::Model model = nn::load_model((fs::path(zoo_dir) / rec.model_path).string());
        geom::MarginEstimate est = geom::estimate_margin(model, subset, max_iter, overshoot);
        rows[i] = {rec.record_id,
                   rec.is_trojan,
                   rec.is_trojan ? poison::mapping_kind_name(rec.mapping) : "clean",
                   est.margin,
                   est.used,
                   est.excluded};
    });
    return rows;
}

std::string margins_csv(const std::vector<MarginRow>& rows) {
    std::string csv = "model_id,is_trojan,mapping,margin,n_used,n_excluded\n";
    for (const auto& r : rows) {
        csv += r.model_id;
        csv += r.is_trojan ? ",1," : ",0,";
        csv += r.mapping + "," + textio::format_double(r.margin) + "," +
               std::to_string(r.n_used) + "," + std::to_string(r.n_excluded) + "\n";
    }
    return csv;
}

std::vector<SpectrumRun> spectrum_table(const zoo::Manifest& manifest,
                                        const std::string& zoo_dir,
                                        const data::LabeledSet& validation, int class_count,
                                        int samples_per_class, uint64_t seed, int workers) {
    if (manifest.records.empty()) throw SpecError("empty manifest");
    data::LabeledSet subset = stratified_subset(validation, class_count, samples_per_class, seed);

    std::vector<SpectrumRun> runs(manifest.records.size());
    zoo::run_jobs(workers, static_cast<int>(manifest.records.size()), [&](int i) {
        const zoo::ZooRecord& rec = manifest.records[i];
        nn::Model model = nn::load_model((fs::path(zoo_dir) / rec.model_path).string());
        geom::NormalMatrix S = geom::normal_matrix(model, subset);
        runs[i] = {rec.record_id,
                   rec.is_trojan ? poison::mapping_kind_name(rec.mapping) : "clean",
                   geom::singular_spectrum(S)};
    });
    return runs;
}

std::string spectrum_csv(const geom::SpectrumReport& report) {
    std::string csv = "index,sigma,sigma_scaled,energy_cum\n";
    for (size_t i = 0; i < report.singular_values.size(); ++i)
        csv += std::to_string(i + 1) + "," + textio::format_double(report.singular_values[i]) +
               "," + textio::format_double(report.scaled[i]) + "," +
               textio::format_double(report.energy_cum[i]) + "\n";
    return csv;
}

std::string spectrum_compare_csv(const geom::SpectrumComparison& cmp) {
    std::string csv = "index,label,mean_scaled,std_scaled\n";
    for (size_t g = 0; g < cmp.labels.size(); ++g)
        for (int i = 0; i < cmp.curve_len; ++i)
            csv += std::to_string(i + 1) + "," + cmp.labels[g] + "," +
                   textio::format_double(cmp.mean_scaled[g][i]) + "," +
                   textio::format_double(cmp.std_scaled[g][i]) + "\n";
    return csv;
}

double mean_energy_at(const std::vector<SpectrumRun>& runs, const std::string& label, int k) {
    double total = 0.0;
    int n = 0;
    for (const auto& run : runs) {
        if (run.label != label) continue;
        total += run.report.energy_at(k);
        ++n;
    }
    if (n == 0) throw SpecError("no spectrum runs labeled '" + label + "'");
    return total / n;
}

}  // namespace trojanscope::analysis
