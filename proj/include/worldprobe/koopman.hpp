#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "worldprobe/dataset.hpp"
#include "worldprobe/rng.hpp"

namespace worldprobe {

// EDMD estimation of the Koopman operator on scalar systems with analytically
// known dynamics, plus the numerical realization of the three-term error
// decomposition (estimation on the finite span, finite-basis error, projection
// truncation).

// --- observable bases ---------------------------------------------------------

enum class BasisKind { FourierTorus, FourierCosine, Monomial, Custom };

inline std::string to_string(BasisKind kind) {
    switch (kind) {
        case BasisKind::FourierTorus: return "fourier_torus";
        case BasisKind::FourierCosine: return "fourier_cosine";
        case BasisKind::Monomial: return "monomial";
        case BasisKind::Custom: return "custom";
    }
    return "?";
}

// Evaluation map Psi(x) in R^N for scalar states.
//
// fourier_torus (size 2m+1): {1, √2 cos 2πkx, √2 sin 2πkx : k <= m} —
// orthonormal under the uniform measure on [0,1). fourier_cosine is the
// truncated variant {1, √2 cos 2πkx} (size m+1); the rotation's Koopman action
// leaves its span, which makes the finite-sample estimation error nonzero.
// monomial (size N): {x, x^2, ..., x^N}.
struct ObservableBasis {
    BasisKind kind = BasisKind::FourierTorus;
    int size = 0;
    int max_frequency = 0;  // m, fourier kinds
    std::function<Eigen::VectorXd(double)> eval_fn;  // Custom only

    static ObservableBasis fourier_torus(int m) {
        if (m < 1) throw std::invalid_argument("fourier_torus: m >= 1");
        return {BasisKind::FourierTorus, 2 * m + 1, m, {}};
    }
    static ObservableBasis fourier_cosine(int m) {
        if (m < 1) throw std::invalid_argument("fourier_cosine: m >= 1");
        return {BasisKind::FourierCosine, m + 1, m, {}};
    }
    static ObservableBasis monomial(int degree) {
        if (degree < 1) throw std::invalid_argument("monomial: degree >= 1");
        return {BasisKind::Monomial, degree, degree, {}};
    }
    static ObservableBasis custom(int size, std::function<Eigen::VectorXd(double)> fn) {
        if (size < 1) throw std::invalid_argument("custom basis: size >= 1");
        return {BasisKind::Custom, size, 0, std::move(fn)};
    }

    Eigen::VectorXd evaluate(double x) const {
        Eigen::VectorXd psi(size);
        switch (kind) {
            case BasisKind::FourierTorus: {
                psi(0) = 1.0;
                for (int k = 1; k <= max_frequency; ++k) {
                    psi(2 * k - 1) = std::sqrt(2.0) * std::cos(2.0 * M_PI * k * x);
                    psi(2 * k) = std::sqrt(2.0) * std::sin(2.0 * M_PI * k * x);
                }
                break;
            }
            case BasisKind::FourierCosine: {
                psi(0) = 1.0;
                for (int k = 1; k <= max_frequency; ++k)
                    psi(k) = std::sqrt(2.0) * std::cos(2.0 * M_PI * k * x);
                break;
            }
            case BasisKind::Monomial: {
                double p = 1.0;
                for (int j = 0; j < size; ++j) {
                    p *= x;
                    psi(j) = p;
                }
                break;
            }
            case BasisKind::Custom:
                psi = eval_fn(x);
                break;
        }
        return psi;
    }

    // [N, M] matrix of Psi over a sample range
    Eigen::MatrixXd evaluate_all(const double* xs, Eigen::Index count) const {
        Eigen::MatrixXd out(size, count);
        for (Eigen::Index i = 0; i < count; ++i) out.col(i) = evaluate(xs[i]);
        return out;
    }
    Eigen::MatrixXd evaluate_all(const std::vector<double>& xs) const {
        return evaluate_all(xs.data(), static_cast<Eigen::Index>(xs.size()));
    }
};

// --- analytic systems ----------------------------------------------------------

struct TorusRotation {
    double alpha = 0.25;
    double step(double x) const {
        x += alpha;
        return x - std::floor(x);
    }
    double flow(double x, int k) const {
        x += alpha * k;
        return x - std::floor(x);
    }
    // ||K|| on L^2 of the invariant (uniform) measure: rotation is unitary
    double koopman_norm() const { return 1.0; }
};

struct LinearContraction1D {
    double rho = 0.9;
    double step(double x) const { return rho * x; }
    double flow(double x, int k) const { return std::pow(rho, k) * x; }
    double koopman_norm() const { return 1.0; }
};

using AnalyticSystem = std::variant<TorusRotation, LinearContraction1D>;

inline double system_step(const AnalyticSystem& sys, double x) {
    return std::visit([&](const auto& s) { return s.step(x); }, sys);
}
inline double system_flow(const AnalyticSystem& sys, double x, int k) {
    return std::visit([&](const auto& s) { return s.flow(x, k); }, sys);
}
inline double system_koopman_norm(const AnalyticSystem& sys) {
    return std::visit([](const auto& s) { return s.koopman_norm(); }, sys);
}

inline std::vector<double> trajectory(const AnalyticSystem& sys, double x0, Eigen::Index count) {
    std::vector<double> xs(static_cast<std::size_t>(count));
    double x = x0;
    for (Eigen::Index i = 0; i < count; ++i) {
        xs[static_cast<std::size_t>(i)] = x;
        x = system_step(sys, x);
    }
    return xs;
}

// Matrix of the projected Koopman operator on the basis (rows express the
// pushforward of each basis element). Exact under the invariant measure.
inline Eigen::MatrixXd analytic_koopman_matrix(const AnalyticSystem& sys,
                                               const ObservableBasis& basis) {
    if (const auto* torus = std::get_if<TorusRotation>(&sys)) {
        const double theta = 2.0 * M_PI * torus->alpha;
        if (basis.kind == BasisKind::FourierTorus) {
            Eigen::MatrixXd a = Eigen::MatrixXd::Zero(basis.size, basis.size);
            a(0, 0) = 1.0;
            for (int k = 1; k <= basis.max_frequency; ++k) {
                const double c = std::cos(k * theta), s = std::sin(k * theta);
                a(2 * k - 1, 2 * k - 1) = c;
                a(2 * k - 1, 2 * k) = -s;
                a(2 * k, 2 * k - 1) = s;
                a(2 * k, 2 * k) = c;
            }
            return a;
        }
        if (basis.kind == BasisKind::FourierCosine) {
            // the sine partners are orthogonal to the span, so projection keeps
            // only the cos(k theta) part
            Eigen::VectorXd diag(basis.size);
            diag(0) = 1.0;
            for (int k = 1; k <= basis.max_frequency; ++k) diag(k) = std::cos(k * theta);
            return diag.asDiagonal();
        }
        throw std::invalid_argument("no analytic Koopman matrix for this torus basis");
    }
    const auto& contraction = std::get<LinearContraction1D>(sys);
    if (basis.kind != BasisKind::Monomial)
        throw std::invalid_argument("analytic contraction matrix needs the monomial basis");
    Eigen::VectorXd diag(basis.size);
    double p = 1.0;
    for (int j = 0; j < basis.size; ++j) {
        p *= contraction.rho;
        diag(j) = p;  // x^j maps to rho^j x^j
    }
    return diag.asDiagonal();
}

// --- EDMD core -----------------------------------------------------------------

struct KoopmanEstimate {
    ObservableBasis basis;
    Eigen::MatrixXd a;  // [N, N]
    Eigen::Index sample_count = 0;
    int horizon = 1;  // the step between each (x, y) pair
    bool rank_deficient = false;
};

// Moore-Penrose pseudoinverse with a relative singular-value cutoff.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double rel_cutoff = 1e-10,
                                      bool* rank_deficient = nullptr) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() ? sv(0) * rel_cutoff : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    bool deficient = false;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff && sv(i) > 0.0)
            inv(i) = 1.0 / sv(i);
        else
            deficient = true;
    }
    if (rank_deficient) *rank_deficient = deficient;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Least-squares Koopman matrix from precomputed observable evaluations:
//   A = Psi(Y) Psi(X)^T (Psi(X) Psi(X)^T)^+
// A rank-deficient Gram matrix falls back to the minimum-norm solution (the
// estimate is flagged, never a crash).
inline KoopmanEstimate edmd_fit_matrices(const Eigen::MatrixXd& psi_x,
                                         const Eigen::MatrixXd& psi_y,
                                         ObservableBasis basis, int horizon = 1) {
    if (psi_x.cols() < 1 || psi_x.cols() != psi_y.cols() || psi_x.rows() != psi_y.rows())
        throw std::invalid_argument("edmd_fit: bad observable matrices");
    const auto m = static_cast<double>(psi_x.cols());
    const Eigen::MatrixXd gram = psi_x * psi_x.transpose() / m;
    const Eigen::MatrixXd cross = psi_y * psi_x.transpose() / m;
    KoopmanEstimate est;
    est.basis = std::move(basis);
    est.sample_count = psi_x.cols();
    est.horizon = horizon;
    est.a = cross * pseudo_inverse(gram, 1e-10, &est.rank_deficient);
    return est;
}

// Pairs (x_i, y_i) with y_i = F^horizon(x_i) supplied by the caller.
inline KoopmanEstimate edmd_fit(const std::vector<double>& xs, const std::vector<double>& ys,
                                const ObservableBasis& basis, int horizon = 1) {
    if (xs.size() != ys.size() || xs.empty())
        throw std::invalid_argument("edmd_fit: need matching, non-empty state arrays");
    return edmd_fit_matrices(basis.evaluate_all(xs), basis.evaluate_all(ys), basis, horizon);
}

// Coefficients of the K-step-propagated observable. A row of the fitted matrix
// expresses the pushforward of one basis element, so coefficient vectors
// propagate through the transpose: g = c^T Psi evolves to (A^K)^T c.
inline Eigen::VectorXd k_step(const KoopmanEstimate& est, const Eigen::VectorXd& coeffs, int k) {
    if (k < 0) throw std::invalid_argument("k_step: K must be >= 0");
    if (coeffs.size() != est.a.rows()) throw std::invalid_argument("k_step: coefficient size");
    Eigen::VectorXd c = coeffs;
    for (int i = 0; i < k; ++i) c = est.a.transpose() * c;
    return c;
}

// Empirical L^2 projection of samples of g onto the basis span:
//   coefficients = Gram^+ . <Psi, g>   (sample averages)
inline Eigen::VectorXd project(const Eigen::VectorXd& g_values, const Eigen::MatrixXd& psi_x,
                               bool* rank_deficient = nullptr) {
    if (g_values.size() != psi_x.cols())
        throw std::invalid_argument("project: sample count mismatch");
    const auto m = static_cast<double>(psi_x.cols());
    const Eigen::MatrixXd gram = psi_x * psi_x.transpose() / m;
    const Eigen::VectorXd rhs = psi_x * g_values / m;
    return pseudo_inverse(gram, 1e-10, rank_deficient) * rhs;
}

inline Eigen::VectorXd project(const std::function<double(double)>& g,
                               const std::vector<double>& samples,
                               const ObservableBasis& basis) {
    Eigen::VectorXd values(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i)
        values(static_cast<Eigen::Index>(i)) = g(samples[i]);
    return project(values, basis.evaluate_all(samples));
}

// --- error decomposition ---------------------------------------------------------

struct ErrorDecompositionRow {
    int basis_size = 0;   // N
    Eigen::Index samples = 0;  // M
    int horizon = 0;      // K
    double term1 = 0.0;   // estimation on the finite span
    double term2 = 0.0;   // finite-basis error
    double term3 = 0.0;   // projection truncation, ||K||^K * ||(I - Pi) g||
    double total = 0.0;   // ||(Khat^K Pi - K^K) g||
};

struct ErrorDecompositionConfig {
    int horizon = 1;          // K
    int heldout_factor = 10;  // held-out trajectory length = factor * M
    std::uint64_t seed = 0;   // start points derive from this
};

// One sweep cell. Norms are empirical averages over a held-out trajectory; the
// truncation residual is averaged over the K-step-advanced window so that
// total <= term1 + term2 + term3 holds exactly (Minkowski on shared samples).
inline ErrorDecompositionRow error_decomposition_cell(const AnalyticSystem& sys,
                                                      const ObservableBasis& basis,
                                                      const std::function<double(double)>& g,
                                                      Eigen::Index m_samples,
                                                      const ErrorDecompositionConfig& cfg) {
    if (m_samples < 2) throw std::invalid_argument("error_decomposition: M >= 2");
    const int k = cfg.horizon;
    if (k < 1) throw std::invalid_argument("error_decomposition: K >= 1");

    // start points are shared across the M sweep so the estimation-error trend
    // is not confounded by varying trajectory offsets
    Rng rng(derive_seed(cfg.seed, "koopman-sweep", static_cast<std::uint64_t>(basis.size)));
    double x0_fit, x0_eval;
    if (std::holds_alternative<TorusRotation>(sys)) {
        x0_fit = rng.uniform();
        x0_eval = rng.uniform();
    } else {
        x0_fit = rng.uniform(0.5, 1.0);
        x0_eval = rng.uniform(0.5, 1.0);
    }

    // fit a 1-step estimator, propagate by matrix power
    const auto fit_traj = trajectory(sys, x0_fit, m_samples + 1);
    const Eigen::MatrixXd psi_fit = basis.evaluate_all(fit_traj);
    const auto est = edmd_fit_matrices(psi_fit.leftCols(m_samples), psi_fit.rightCols(m_samples),
                                       basis, 1);

    const Eigen::Index h = cfg.heldout_factor * m_samples;
    const auto eval_traj = trajectory(sys, x0_eval, h + k);
    const Eigen::MatrixXd psi_all = basis.evaluate_all(eval_traj);
    const Eigen::MatrixXd psi_window = psi_all.leftCols(h);
    Eigen::VectorXd g_window(h), g_shift(h);
    for (Eigen::Index i = 0; i < h; ++i) {
        g_window(i) = g(eval_traj[static_cast<std::size_t>(i)]);
        g_shift(i) = g(eval_traj[static_cast<std::size_t>(i + k)]);
    }

    const Eigen::VectorXd c = project(g_window, psi_window);
    const Eigen::MatrixXd a_true = analytic_koopman_matrix(sys, basis);

    Eigen::MatrixXd a_hat_k = Eigen::MatrixXd::Identity(basis.size, basis.size);
    Eigen::MatrixXd a_true_k = a_hat_k;
    for (int i = 0; i < k; ++i) {
        a_hat_k = est.a * a_hat_k;
        a_true_k = a_true * a_true_k;
    }

    const auto rms = [h](const Eigen::VectorXd& v) {
        return std::sqrt(v.squaredNorm() / static_cast<double>(h));
    };

    const Eigen::VectorXd est_vals = psi_window.transpose() * (a_hat_k.transpose() * c);
    const Eigen::VectorXd proj_vals = psi_window.transpose() * (a_true_k.transpose() * c);
    const Eigen::VectorXd true_proj_vals = psi_all.rightCols(h).transpose() * c;  // (Pi g)(F^K x)
    const Eigen::VectorXd resid_shift = g_shift - true_proj_vals;  // (I - Pi) g at F^K x

    ErrorDecompositionRow row;
    row.basis_size = basis.size;
    row.samples = m_samples;
    row.horizon = k;
    row.term1 = rms(est_vals - proj_vals);
    row.term2 = rms(proj_vals - true_proj_vals);
    row.term3 = std::pow(system_koopman_norm(sys), k) * rms(resid_shift);
    row.total = rms(est_vals - g_shift);
    return row;
}

// Full (N, M) sweep. Basis sizes are given as the fourier frequency cap m or
// the monomial degree, matching the system's analytic matrices.
inline std::vector<ErrorDecompositionRow> error_decomposition_sweep(
    const AnalyticSystem& sys, BasisKind basis_kind, const std::vector<int>& size_params,
    const std::vector<Eigen::Index>& m_list, const std::function<double(double)>& g,
    const ErrorDecompositionConfig& cfg) {
    std::vector<ErrorDecompositionRow> rows;
    for (int param : size_params) {
        ObservableBasis basis;
        switch (basis_kind) {
            case BasisKind::FourierTorus: basis = ObservableBasis::fourier_torus(param); break;
            case BasisKind::FourierCosine: basis = ObservableBasis::fourier_cosine(param); break;
            case BasisKind::Monomial: basis = ObservableBasis::monomial(param); break;
            case BasisKind::Custom:
                throw std::invalid_argument("sweep: custom bases have no analytic truth terms");
        }
        for (Eigen::Index m_samples : m_list)
            rows.push_back(error_decomposition_cell(sys, basis, g, m_samples, cfg));
    }
    return rows;
}

// --- activation-feature demo -------------------------------------------------------

struct ActivationEdmdResult {
    Eigen::MatrixXd a;
    double residual_rms = 0.0;  // empirical ||A psi(x) - psi(y)|| per sample
    double r2 = 0.0;            // variance-weighted fit quality of the evolution map
    bool rank_deficient = false;
};

// Linear evolution fitted on a dataset's activation stream (psi_i = z_i). No
// analytic truth terms exist here; only the empirical residual is reported.
inline ActivationEdmdResult activation_edmd(const TrajectoryDataset& ds, int layer, int k) {
    if (!ds.has_layer(layer))
        throw std::invalid_argument("activation_edmd: dataset has no layer " +
                                    std::to_string(layer));
    if (k < 1) throw std::invalid_argument("activation_edmd: K >= 1");
    Eigen::Index total = 0;
    for (const auto& ep : ds.episodes)
        if (ep.steps > k) total += ep.steps - k;
    if (total < 2) throw std::invalid_argument("activation_edmd: not enough samples");

    const auto dim = ds.activation_dims.at(layer);
    Eigen::MatrixXd psi_x(dim, total), psi_y(dim, total);
    Eigen::Index at = 0;
    for (const auto& ep : ds.episodes) {
        if (ep.steps <= k) continue;
        const auto& act = ep.activations.at(layer);
        for (Eigen::Index t = 0; t + k < ep.steps; ++t, ++at) {
            psi_x.col(at) = act.row(t).cast<double>().transpose();
            psi_y.col(at) = act.row(t + k).cast<double>().transpose();
        }
    }

    auto est = edmd_fit_matrices(psi_x, psi_y, ObservableBasis::custom(static_cast<int>(dim), {}),
                                 k);
    ActivationEdmdResult out;
    out.a = est.a;
    out.rank_deficient = est.rank_deficient;
    const Eigen::MatrixXd resid = est.a * psi_x - psi_y;
    out.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(total));
    const Eigen::VectorXd row_means = psi_y.rowwise().mean();
    const double sst = (psi_y.colwise() - row_means).squaredNorm();
    out.r2 = sst > 0 ? 1.0 - resid.squaredNorm() / sst : std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace worldprobe
