#include "trojanscope/geometry.hpp"

#include <cmath>
#include <limits>

namespace trojanscope::geom {

Tensor project_linear_binary(const Tensor& w, double b, const Tensor& x) {
    if (!w.same_shape(x)) throw ShapeError("w and x must share a shape");
    const double wnorm2 = dot(w, w);
    if (wnorm2 <= 0.0) throw SpecError("zero weight vector has no decision boundary");
    const double score = dot(w, x) + b;
    const double scale = -score / wnorm2;  // -(w.x+b)/|w|^2
    Tensor t(w.shape);
    for (size_t i = 0; i < t.data.size(); ++i)
        t.data[i] = static_cast<float>(scale * w.data[i]);
    return t;
}

Tensor deepfool_step(const nn::Model& m, const Tensor& x, int k) {
    std::vector<double> logits;
    std::vector<Tensor> grads = nn::logit_gradients(m, x, logits);
    const int c = m.class_count;

    int best = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_m = 0.0, best_n2 = 0.0;
    for (int j = 0; j < c; ++j) {
        if (j == k) continue;
        double n2 = 0.0;
        const Tensor& gj = grads[j];
        const Tensor& gk = grads[k];
        for (size_t i = 0; i < gj.data.size(); ++i) {
            const double d = static_cast<double>(gj.data[i]) - gk.data[i];
            n2 += d * d;
        }
        if (n2 <= 0.0) continue;  // parallel logits give no usable direction
        const double mj = logits[j] - logits[k];
        const double ratio = std::abs(mj) / std::sqrt(n2);
        if (ratio < best_ratio) {
            best_ratio = ratio;
            best = j;
            best_m = mj;
            best_n2 = n2;
        }
    }
    if (best < 0)
        throw NumericError("all candidate boundary directions are degenerate at this point");

    const double scale = std::abs(best_m) / best_n2;
    Tensor t(x.shape);
    for (size_t i = 0; i < t.data.size(); ++i)
        t.data[i] = static_cast<float>(
            scale * (static_cast<double>(grads[best].data[i]) - grads[k].data[i]));
    if (!t.all_finite())
        throw NumericError("non-finite projection step");
    return t;
}

ProjectionResult project_to_boundary(const nn::Model& m, const Tensor& x, int max_iter,
                                     double overshoot) {
    if (max_iter < 1) throw SpecError("max_iter must be >= 1");
    ProjectionResult res;
    res.T_x = Tensor(x.shape);

    const int k0 = nn::predict_one(m, x);
    res.final_label = k0;
    Tensor xi = x;
    for (int iter = 0; iter < max_iter; ++iter) {
        Tensor step;
        try {
            step = deepfool_step(m, xi, k0);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " (iteration " + std::to_string(iter) +
                               ")");
        }
        res.per_step_norms.push_back(static_cast<float>(step.l2_norm()));
        res.T_x = axpy(res.T_x, 1.0, step);
        xi = axpy(x, 1.0, res.T_x);
        res.iterations = iter + 1;
        // the crossing test uses the overshoot point; the raw accumulated
        // perturbation would sit exactly on the linearized boundary
        res.final_label = nn::predict_one(m, axpy(x, 1.0 + overshoot, res.T_x));
        if (res.final_label != k0) {
            res.crossed = true;
            break;
        }
    }
    return res;
}

MarginEstimate estimate_margin(const nn::Model& m, const data::LabeledSet& samples, int max_iter,
                               double overshoot) {
    const int n = samples.size();
    if (n == 0) throw SpecError("estimate_margin on empty sample set");
    MarginEstimate est;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        ProjectionResult pr;
        try {
            pr = project_to_boundary(m, slice_sample(samples.images, i), max_iter, overshoot);
        } catch (const NumericError&) {
            ++est.excluded;  // dead-gradient region, no usable direction
            continue;
        }
        if (pr.crossed) {
            total += pr.T_x.l2_norm();
            ++est.used;
        } else {
            ++est.excluded;
        }
    }
    if (est.used == 0) throw NumericError("every projection failed to cross the boundary");
    est.margin = total / est.used;
    return est;
}

NormalMatrix normal_matrix(const nn::Model& m, const data::LabeledSet& samples, int max_iter,
                           double overshoot) {
    const int n = samples.size();
    NormalMatrix S;
    S.d = 1;
    for (int d : m.input_shape) S.d *= d;
    S.columns.reserve(static_cast<size_t>(S.d) * n);
    for (int i = 0; i < n; ++i) {
        ProjectionResult pr;
        try {
            pr = project_to_boundary(m, slice_sample(samples.images, i), max_iter, overshoot);
        } catch (const NumericError&) {
            ++S.skipped;
            continue;
        }
        const double norm = pr.T_x.l2_norm();
        if (!pr.crossed || norm <= 0.0) {
            ++S.skipped;
            continue;
        }
        for (float v : pr.T_x.data) S.columns.push_back(v / norm);
        S.sample_ids.push_back(i);
        ++S.n;
    }
    if (S.n < 2)
        throw NumericError("normal matrix needs >= 2 crossed projections, got " +
                           std::to_string(S.n));
    return S;
}

}  // namespace trojanscope::geom
