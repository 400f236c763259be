#include "trojanscope/spectrum.hpp"

#include <algorithm>
#include <cmath>

namespace trojanscope::geom {

double SpectrumReport::energy_at(int k) const {
    if (energy_cum.empty()) throw SpecError("empty spectrum");
    k = std::clamp(k, 1, static_cast<int>(energy_cum.size()));
    return energy_cum[static_cast<size_t>(k) - 1];
}

namespace {

// Cyclic Jacobi eigenvalues of a symmetric n x n matrix (values only).
std::vector<double> jacobi_eigenvalues(std::vector<double> a, int n, int max_sweeps) {
    auto at = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (int i = 0; i < n; ++i) {
            diag += std::abs(at(i, i));
            for (int j = i + 1; j < n; ++j) off += 2.0 * at(i, j) * at(i, j);
        }
        if (std::sqrt(off) <= 1e-13 * std::max(diag, 1e-300)) {
            std::vector<double> eig(n);
            for (int i = 0; i < n; ++i) eig[i] = at(i, i);
            return eig;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (apq == 0.0) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = at(i, p), aiq = at(i, q);
                    at(i, p) = c * aip - s * aiq;
                    at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = at(p, i), aqi = at(q, i);
                    at(p, i) = c * api - s * aqi;
                    at(q, i) = s * api + c * aqi;
                }
            }
        }
    }
    throw NumericError("Jacobi eigenvalue iteration did not converge within " +
                       std::to_string(max_sweeps) + " sweeps");
}

// One-sided Jacobi (Hestenes): orthogonalizes the k columns of an m x k
// column-major matrix in place; singular values are the column norms.
std::vector<double> one_sided_jacobi(std::vector<double>& a, int m, int k, int max_sweeps) {
    auto col = [&](int j) { return a.data() + static_cast<size_t>(j) * m; };
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < k - 1; ++p) {
            for (int q = p + 1; q < k; ++q) {
                double* ap = col(p);
                double* aq = col(q);
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < m; ++i) {
                    alpha += ap[i] * ap[i];
                    beta += aq[i] * aq[i];
                    gamma += ap[i] * aq[i];
                }
                if (std::abs(gamma) <= 1e-14 * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < m; ++i) {
                    const double vp = ap[i], vq = aq[i];
                    ap[i] = c * vp - s * vq;
                    aq[i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) {
            std::vector<double> sv(k);
            for (int j = 0; j < k; ++j) {
                double norm2 = 0.0;
                const double* aj = col(j);
                for (int i = 0; i < m; ++i) norm2 += aj[i] * aj[i];
                sv[j] = std::sqrt(norm2);
            }
            return sv;
        }
    }
    throw NumericError("one-sided Jacobi did not converge within " + std::to_string(max_sweeps) +
                       " sweeps");
}

}  // namespace

std::vector<double> singular_values(const std::vector<double>& colmajor, int d, int n) {
    if (d <= 0 || n <= 0) throw SpecError("singular_values needs a nonempty matrix");
    if (colmajor.size() != static_cast<size_t>(d) * n)
        throw ShapeError("matrix storage does not match d*n");
    const int r = std::min(d, n);
    const int max_sweeps = 100 * r;
    std::vector<double> sv;
    if (n < d) {
        // Gram route: eigenvalues of the n x n matrix S^T S
        std::vector<double> gram(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) {
            const double* ci = &colmajor[static_cast<size_t>(i) * d];
            for (int j = i; j < n; ++j) {
                const double* cj = &colmajor[static_cast<size_t>(j) * d];
                double s = 0.0;
                for (int k = 0; k < d; ++k) s += ci[k] * cj[k];
                gram[static_cast<size_t>(i) * n + j] = s;
                gram[static_cast<size_t>(j) * n + i] = s;
            }
        }
        std::vector<double> eig = jacobi_eigenvalues(std::move(gram), n, max_sweeps);
        sv.resize(n);
        for (int i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(0.0, eig[i]));
    } else {
        // orthogonalize the d rows: one-sided Jacobi on S^T (n x d)
        std::vector<double> at(static_cast<size_t>(n) * d);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < d; ++i)
                at[static_cast<size_t>(i) * n + j] = colmajor[static_cast<size_t>(j) * d + i];
        sv = one_sided_jacobi(at, n, d, max_sweeps);
    }
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

SpectrumReport singular_spectrum(const NormalMatrix& S) {
    if (S.n <= 0) throw SpecError("empty normal matrix");
    SpectrumReport rep;
    rep.d = S.d;
    rep.n = S.n;
    rep.singular_values = singular_values(S.columns, S.d, S.n);
    const double s1 = rep.singular_values.front();
    if (s1 <= 0.0) throw NumericError("leading singular value is zero");
    double total = 0.0;
    for (double s : rep.singular_values) total += s * s;
    rep.scaled.reserve(rep.singular_values.size());
    rep.energy_cum.reserve(rep.singular_values.size());
    double cum = 0.0;
    for (double s : rep.singular_values) {
        rep.scaled.push_back(s / s1);
        cum += s * s;
        rep.energy_cum.push_back(cum / total);
    }
    return rep;
}

SpectrumComparison compare_spectra(
    const std::vector<std::pair<std::string, SpectrumReport>>& reports, int k) {
    if (reports.empty()) throw SpecError("compare_spectra needs at least one report");
    const int d = reports.front().second.d;
    int min_len = reports.front().second.rank_bound();
    for (const auto& [label, rep] : reports) {
        if (rep.d != d)
            throw ShapeError("spectrum reports mix input dimensions " + std::to_string(d) +
                             " and " + std::to_string(rep.d));
        min_len = std::min(min_len, rep.rank_bound());
    }

    SpectrumComparison out;
    out.k = k;
    out.curve_len = min_len;
    for (const auto& [label, rep] : reports)
        if (std::find(out.labels.begin(), out.labels.end(), label) == out.labels.end())
            out.labels.push_back(label);

    for (const std::string& label : out.labels) {
        std::vector<double> energies;
        std::vector<std::vector<double>> curves;
        for (const auto& [l, rep] : reports) {
            if (l != label) continue;
            energies.push_back(rep.energy_at(k));
            curves.emplace_back(rep.scaled.begin(), rep.scaled.begin() + min_len);
        }
        const double g = static_cast<double>(energies.size());
        double mean_e = 0.0;
        for (double e : energies) mean_e += e;
        mean_e /= g;
        double var_e = 0.0;
        for (double e : energies) var_e += (e - mean_e) * (e - mean_e);
        out.group_sizes.push_back(static_cast<int>(energies.size()));
        out.mean_energy_at_k.push_back(mean_e);
        out.std_energy_at_k.push_back(std::sqrt(var_e / g));

        std::vector<double> mean_c(min_len, 0.0), std_c(min_len, 0.0);
        for (const auto& c : curves)
            for (int i = 0; i < min_len; ++i) mean_c[i] += c[i];
        for (int i = 0; i < min_len; ++i) mean_c[i] /= g;
        for (const auto& c : curves)
            for (int i = 0; i < min_len; ++i)
                std_c[i] += (c[i] - mean_c[i]) * (c[i] - mean_c[i]);
        for (int i = 0; i < min_len; ++i) std_c[i] = std::sqrt(std_c[i] / g);
        out.mean_scaled.push_back(std::move(mean_c));
        out.std_scaled.push_back(std::move(std_c));
    }
    return out;
}

}  // namespace trojanscope::geom
