#include "trojanscope/detector.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "trojanscope/geometry.hpp"
#include "trojanscope/rng.hpp"
#include "trojanscope/serialize.hpp"
#include "trojanscope/textio.hpp"

namespace trojanscope::detect {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

double error_rate(const nn::Model& m, const data::LabeledSet& set) {
    if (set.size() == 0) throw SpecError("error_rate on empty set");
    std::vector<int> pred = nn::predict(m, set.images);
    int wrong = 0;
    for (int i = 0; i < set.size(); ++i)
        if (pred[i] != set.labels[i]) ++wrong;
    return static_cast<double>(wrong) / set.size();
}

namespace {

// error of the perturbed batch against either ground truth or the clean
// predictions, depending on the config switch
double batch_error(const nn::Model& m, const Tensor& images, const std::vector<int>& reference) {
    std::vector<int> pred = nn::predict(m, images);
    int wrong = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] != reference[i]) ++wrong;
    return static_cast<double>(wrong) / pred.size();
}

Tensor add_scalar_field(const Tensor& images, const Tensor& r, bool clamp) {
    Tensor out = images;
    const size_t per = r.numel();
    const int n = images.shape[0];
    for (int i = 0; i < n; ++i) {
        float* p = &out.data[per * i];
        for (size_t k = 0; k < per; ++k) {
            p[k] += r.data[k];
            if (clamp) p[k] = std::clamp(p[k], 0.0f, 1.0f);
        }
    }
    return out;
}

}  // namespace

PerturbationResult detector_perturbation(const nn::Model& m, const data::LabeledSet& probe,
                                         const DetectorConfig& cfg) {
    const int n = probe.size();
    if (n == 0) throw SpecError("detector probe batch is empty");
    if (cfg.xi <= 0) throw SpecError("xi must be positive");
    if (cfg.rho <= 0 || cfg.rho > 1) throw SpecError("rho must be in (0,1]");
    if (cfg.J < 0) throw SpecError("J must be >= 0");

    std::vector<int> reference = probe.labels;
    if (cfg.err_vs_clean_predictions) reference = nn::predict(m, probe.images);

    PerturbationResult res;
    res.r = Tensor(m.input_shape);
    const size_t per = res.r.numel();

    int j = 0;
    while (j <= cfg.J &&
           batch_error(m, add_scalar_field(probe.images, res.r, cfg.clamp_perturbed),
                       reference) <= cfg.rho) {
        Tensor sum_dir(m.input_shape);
        int failed = 0;
        for (int i = 0; i < n; ++i) {
            Tensor xi_r = slice_sample(probe.images, i);
            for (size_t k = 0; k < per; ++k) xi_r.data[k] += res.r.data[k];
            Tensor step;
            try {
                const int k_at_point = nn::predict_one(m, xi_r);
                step = geom::deepfool_step(m, xi_r, k_at_point);
            } catch (const NumericError&) {
                ++failed;
                continue;
            }
            const double norm = step.l2_norm();
            if (norm <= 0.0 || !step.all_finite()) {
                ++failed;
                continue;
            }
            for (size_t k = 0; k < per; ++k)
                sum_dir.data[k] += static_cast<float>(step.data[k] / norm);
        }
        res.skipped += failed;
        if (failed > n / 2)
            throw NumericError("detector aborted: projection step failed for " +
                               std::to_string(failed) + "/" + std::to_string(n) +
                               " probe samples in iteration " + std::to_string(j));
        if (sum_dir.l2_norm() <= 0.0)
            throw NumericError("degenerate detector direction: per-sample normals cancelled");

        for (size_t k = 0; k < per; ++k) res.r.data[k] += sum_dir.data[k];
        const double rnorm = res.r.l2_norm();
        if (rnorm <= 0.0)
            throw NumericError("degenerate detector direction: accumulated r_X vanished");
        const double scale = cfg.xi / rnorm;
        for (float& v : res.r.data) v = static_cast<float>(v * scale);
        ++j;
    }
    res.iters = j;
    check_finite(res.r, "detector perturbation");
    return res;
}

DetectorVerdict classify_model(const nn::Model& m, const data::LabeledSet& validation,
                               const DetectorConfig& cfg) {
    const int n = validation.size();
    if (n == 0) throw SpecError("validation set is empty");
    if (cfg.delta < 0 || cfg.delta > 1) throw SpecError("delta must be in [0,1]");
    if (cfg.probe_per_class < 1) throw SpecError("probe_per_class must be >= 1");

    // stratified probe selection, seeded
    int class_count = m.class_count;
    std::vector<std::vector<int>> by_class(class_count);
    for (int i = 0; i < n; ++i) {
        const int y = validation.labels[i];
        if (y < 0 || y >= class_count)
            throw SpecError("validation label " + std::to_string(y) + " out of range");
        by_class[y].push_back(i);
    }
    Rng rng(Rng::derive(cfg.seed, streams::kDetectorProbe));
    std::vector<char> in_probe(n, 0);
    std::vector<int> probe_idx;
    for (int c = 0; c < class_count; ++c) {
        if (static_cast<int>(by_class[c].size()) < cfg.probe_per_class)
            throw SpecError("class " + std::to_string(c) + " has only " +
                            std::to_string(by_class[c].size()) +
                            " validation samples, probe needs " +
                            std::to_string(cfg.probe_per_class));
        rng.shuffle(by_class[c]);
        for (int i = 0; i < cfg.probe_per_class; ++i) {
            probe_idx.push_back(by_class[c][i]);
            in_probe[by_class[c][i]] = 1;
        }
    }
    std::sort(probe_idx.begin(), probe_idx.end());
    std::vector<int> rest_idx;
    for (int i = 0; i < n; ++i)
        if (!in_probe[i]) rest_idx.push_back(i);
    if (rest_idx.empty())
        throw SpecError("validation remainder is empty after removing the probe batch");

    const size_t per = validation.images.numel() / static_cast<size_t>(n);
    auto gather = [&](const std::vector<int>& idx) {
        data::LabeledSet s;
        s.split_tag = validation.split_tag;
        std::vector<int> shape = validation.images.shape;
        shape[0] = static_cast<int>(idx.size());
        s.images = Tensor(shape);
        s.labels.resize(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            std::copy_n(&validation.images.data[per * idx[i]], per, &s.images.data[per * i]);
            s.labels[i] = validation.labels[idx[i]];
        }
        return s;
    };
    data::LabeledSet probe = gather(probe_idx);
    data::LabeledSet rest = gather(rest_idx);

    PerturbationResult pr = detector_perturbation(m, probe, cfg);

    DetectorVerdict v;
    v.r_X = pr.r;
    v.outer_iters_used = pr.iters;
    v.clean_error = error_rate(m, rest);

    std::vector<int> reference = rest.labels;
    if (cfg.err_vs_clean_predictions) reference = nn::predict(m, rest.images);
    v.perturbed_error =
        batch_error(m, add_scalar_field(rest.images, pr.r, cfg.clamp_perturbed), reference);
    v.is_trojan = v.perturbed_error >= cfg.delta;
    return v;
}

MetricsReport evaluate_detector(const zoo::Manifest& manifest, const std::string& zoo_dir,
                                const data::LabeledSet& validation, const DetectorConfig& cfg,
                                int folds, int workers) {
    const int n_models = static_cast<int>(manifest.records.size());
    if (folds < 1) throw SpecError("folds must be >= 1");
    const int n_trojan = manifest.count(true), n_clean = manifest.count(false);
    if (n_trojan < folds || n_clean < folds)
        throw SpecError("manifest needs >= folds models per class: " + std::to_string(n_clean) +
                        " clean / " + std::to_string(n_trojan) + " trojan vs " +
                        std::to_string(folds) + " folds");

    MetricsReport report;
    report.rows.resize(n_models);

    // stratified round-robin fold assignment, stable in record order
    int clean_seen = 0, trojan_seen = 0;
    std::vector<int> fold_of(n_models);
    for (int i = 0; i < n_models; ++i) {
        int& seen = manifest.records[i].is_trojan ? trojan_seen : clean_seen;
        fold_of[i] = seen % folds;
        ++seen;
    }

    zoo::run_jobs(workers, n_models, [&](int i) {
        const zoo::ZooRecord& rec = manifest.records[i];
        nn::Model model = nn::load_model((fs::path(zoo_dir) / rec.model_path).string());
        DetectorVerdict v = classify_model(model, validation, cfg);
        report.rows[i] = {rec.record_id,      rec.is_trojan, v.is_trojan,
                          v.perturbed_error,  v.clean_error, v.outer_iters_used,
                          fold_of[i]};
    });

    // per-fold metrics; Trojan is the positive class
    auto fold_metrics = [&](int fold) {
        FoldMetrics fm;
        int tp = 0, fp = 0, tn = 0, fn = 0;
        for (const auto& row : report.rows) {
            if (fold >= 0 && row.fold != fold) continue;
            if (row.truth_trojan && row.verdict_trojan) ++tp;
            else if (!row.truth_trojan && row.verdict_trojan) ++fp;
            else if (!row.truth_trojan && !row.verdict_trojan) ++tn;
            else ++fn;
        }
        fm.n = tp + fp + tn + fn;
        fm.precision = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
        fm.recall = (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn);
        fm.accuracy = fm.n == 0 ? 0.0 : static_cast<double>(tp + tn) / fm.n;
        return fm;
    };
    for (int f = 0; f < folds; ++f) report.folds.push_back(fold_metrics(f));
    report.overall_accuracy = fold_metrics(-1).accuracy;

    auto mean_std = [&](auto pick, double& mean, double& sd) {
        mean = 0.0;
        for (const auto& fm : report.folds) mean += pick(fm);
        mean /= report.folds.size();
        sd = 0.0;
        for (const auto& fm : report.folds) sd += (pick(fm) - mean) * (pick(fm) - mean);
        sd = std::sqrt(sd / report.folds.size());
    };
    mean_std([](const FoldMetrics& f) { return f.precision; }, report.precision_mean,
             report.precision_std);
    mean_std([](const FoldMetrics& f) { return f.recall; }, report.recall_mean,
             report.recall_std);
    mean_std([](const FoldMetrics& f) { return f.accuracy; }, report.accuracy_mean,
             report.accuracy_std);

    double sum_t = 0.0, sum_c = 0.0;
    int cnt_t = 0, cnt_c = 0;
    for (const auto& row : report.rows) {
        if (row.truth_trojan) {
            sum_t += row.perturbed_error;
            ++cnt_t;
        } else {
            sum_c += row.perturbed_error;
            ++cnt_c;
        }
    }
    report.mean_perturbed_error_trojan = cnt_t ? sum_t / cnt_t : 0.0;
    report.mean_perturbed_error_clean = cnt_c ? sum_c / cnt_c : 0.0;
    return report;
}

std::string metrics_report_json(const MetricsReport& report, const DetectorConfig& cfg) {
    json j;
    j["format_version"] = 1;
    j["toolkit_version"] = kToolkitVersion;
    j["detector"] = json::parse(detector_config_json(cfg));
    j["models"] = json::array();
    for (const auto& row : report.rows) {
        json rj;
        rj["model_id"] = row.model_id;
        rj["truth"] = row.truth_trojan ? "trojan" : "clean";
        rj["verdict"] = row.verdict_trojan ? "trojan" : "clean";
        rj["perturbed_error"] = row.perturbed_error;
        rj["clean_error"] = row.clean_error;
        rj["iters"] = row.iters;
        rj["fold"] = row.fold;
        j["models"].push_back(rj);
    }
    json agg;
    agg["folds"] = json::array();
    for (const auto& fm : report.folds)
        agg["folds"].push_back({{"precision", fm.precision},
                                {"recall", fm.recall},
                                {"accuracy", fm.accuracy},
                                {"n", fm.n}});
    agg["precision_mean"] = report.precision_mean;
    agg["precision_std"] = report.precision_std;
    agg["recall_mean"] = report.recall_mean;
    agg["recall_std"] = report.recall_std;
    agg["accuracy_mean"] = report.accuracy_mean;
    agg["accuracy_std"] = report.accuracy_std;
    agg["overall_accuracy"] = report.overall_accuracy;
    agg["mean_perturbed_error_trojan"] = report.mean_perturbed_error_trojan;
    agg["mean_perturbed_error_clean"] = report.mean_perturbed_error_clean;
    j["aggregate"] = agg;
    return j.dump(2) + "\n";
}

std::string metrics_report_csv(const MetricsReport& report) {
    std::string csv = "model_id,truth,verdict,perturbed_error,clean_error,iters,fold\n";
    for (const auto& row : report.rows) {
        csv += row.model_id;
        csv += row.truth_trojan ? ",trojan," : ",clean,";
        csv += row.verdict_trojan ? "trojan," : "clean,";
        csv += textio::format_double(row.perturbed_error) + "," +
               textio::format_double(row.clean_error) + "," + std::to_string(row.iters) + "," +
               std::to_string(row.fold) + "\n";
    }
    return csv;
}

std::string detector_config_json(const DetectorConfig& cfg) {
    json j;
    j["xi"] = cfg.xi;
    j["rho"] = cfg.rho;
    j["J"] = cfg.J;
    j["delta"] = cfg.delta;
    j["probe_per_class"] = cfg.probe_per_class;
    j["seed"] = cfg.seed;
    j["err_vs_clean_predictions"] = cfg.err_vs_clean_predictions;
    j["clamp_perturbed"] = cfg.clamp_perturbed;
    return j.dump(2) + "\n";
}

DetectorConfig detector_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("detector config is not valid JSON: ") + e.what(),
                          static_cast<long long>(e.byte));
    }
    DetectorConfig cfg;
    cfg.xi = j.at("xi").get<double>();
    cfg.rho = j.at("rho").get<double>();
    cfg.J = j.at("J").get<int>();
    cfg.delta = j.at("delta").get<double>();
    cfg.probe_per_class = j.at("probe_per_class").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.err_vs_clean_predictions = j.at("err_vs_clean_predictions").get<bool>();
    cfg.clamp_perturbed = j.at("clamp_perturbed").get<bool>();
    return cfg;
}

}  // namespace trojanscope::detect
