#pragma once

#include <string>
#include <vector>

#include "trojanscope/dataset.hpp"
#include "trojanscope/model.hpp"

namespace trojanscope::geom {

// Minimal boundary-crossing perturbation of one sample, found by iterated
// linearization (DeepFool-style). T_x is the accumulated step; `crossed`
// is judged at the overshoot point x + (1+eta)*T_x.
struct ProjectionResult {
    Tensor T_x;
    int iterations = 0;
    bool crossed = false;
    int final_label = -1;  // label at the overshoot point
    std::vector<float> per_step_norms;
};

inline constexpr int kDefaultMaxIter = 50;
inline constexpr double kDefaultOvershoot = 0.02;

// Closed-form orthogonal projection onto the hyperplane w.x + b = 0.
// Returns T_x = -(w/|w|) * (w.x+b)/|w|, so w.(x+T_x)+b = 0.
Tensor project_linear_binary(const Tensor& w, double b, const Tensor& x);

// One DeepFool linearization step at point x: picks the nearest one-vs-rest
// hyperplane l != k by |m_j|/|n_j| and returns t = (|m_l|/|n_l|^2) * n_l.
// `k` is the anchor class the differences are taken against.
// Throws NumericError if every candidate direction is degenerate.
Tensor deepfool_step(const nn::Model& m, const Tensor& x, int k);

ProjectionResult project_to_boundary(const nn::Model& m, const Tensor& x,
                                     int max_iter = kDefaultMaxIter,
                                     double overshoot = kDefaultOvershoot);

struct MarginEstimate {
    double margin = 0.0;  // mean |T_x| over crossed samples
    int used = 0;
    int excluded = 0;  // projections that failed to cross within max_iter
};

MarginEstimate estimate_margin(const nn::Model& m, const data::LabeledSet& samples,
                               int max_iter = kDefaultMaxIter,
                               double overshoot = kDefaultOvershoot);

// d x n matrix with unit-normalized perturbations T_x/|T_x| as columns
// (column-major storage). Samples whose projection failed to cross are
// skipped and counted.
struct NormalMatrix {
    int d = 0;
    int n = 0;
    std::vector<double> columns;  // column-major, d*n
    std::vector<int> sample_ids;
    int skipped = 0;
};

NormalMatrix normal_matrix(const nn::Model& m, const data::LabeledSet& samples,
                           int max_iter = kDefaultMaxIter,
                           double overshoot = kDefaultOvershoot);

}  // namespace trojanscope::geom
