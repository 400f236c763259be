#pragma once

#include <string>
#include <utility>
#include <vector>

#include "trojanscope/geometry.hpp"

namespace trojanscope::geom {

// Singular spectrum of the normal matrix S, plus the scaled and cumulative
// energy views used to compare boundary shapes across models.
struct SpectrumReport {
    int d = 0;  // input dimension (rows of S)
    int n = 0;  // number of columns
    std::vector<double> singular_values;  // descending, length min(d, n)
    std::vector<double> scaled;           // sigma_i / sigma_1
    std::vector<double> energy_cum;       // sum_{i<=k} sigma_i^2 / sum sigma_i^2

    int rank_bound() const { return static_cast<int>(singular_values.size()); }
    // Cumulative energy of the first k singular values, k in [1, rank_bound].
    double energy_at(int k) const;
};

// Full singular-value set of a d x n column-major matrix, descending.
// Computed on the thin side: an n x n Gram eigenproblem when n < d, and
// one-sided Jacobi orthogonalization otherwise. Throws NumericError when
// the sweep budget (100 * min(d,n)) is exhausted.
std::vector<double> singular_values(const std::vector<double>& colmajor, int d, int n);

SpectrumReport singular_spectrum(const NormalMatrix& S);

// Per-label mean/std of the scaled spectra and of the cumulative energy at
// k (clamped per report to its rank bound). Curves are truncated to the
// shortest report in the comparison.
struct SpectrumComparison {
    int k = 0;
    std::vector<std::string> labels;
    std::vector<int> group_sizes;
    std::vector<double> mean_energy_at_k;
    std::vector<double> std_energy_at_k;
    int curve_len = 0;
    std::vector<std::vector<double>> mean_scaled;  // [label][index]
    std::vector<std::vector<double>> std_scaled;
};

SpectrumComparison compare_spectra(
    const std::vector<std::pair<std::string, SpectrumReport>>& reports, int k);

}  // namespace trojanscope::geom
