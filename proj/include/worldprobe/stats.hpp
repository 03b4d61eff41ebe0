#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "worldprobe/rng.hpp"

namespace worldprobe {

// Point estimate plus uncertainty for one probe evaluation.
struct StatReport {
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double se = 0.0;
    std::map<int, std::pair<double, double>> ci;  // confidence level (%) -> interval
    int n_reps = 0;
    Eigen::Index block_length = 0;
    Eigen::Index n = 0;
    double p_value = std::numeric_limits<double>::quiet_NaN();  // optional, permutation
    int n_permutations = 0;

    bool has_p_value() const { return n_permutations > 0; }
};

// largest integer b with b^3 <= n
inline Eigen::Index integer_cbrt(Eigen::Index n) {
    auto b = static_cast<Eigen::Index>(std::cbrt(static_cast<double>(n)));
    while (b > 0 && b * b * b > n) --b;
    while ((b + 1) * (b + 1) * (b + 1) <= n) ++b;
    return b;
}

inline Eigen::Index bootstrap_block_length(Eigen::Index n) {
    return std::max<Eigen::Index>(2, integer_cbrt(n));
}

// Inverse standard normal CDF (Acklam's rational approximation, |eps| < 1.2e-8).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double q, r, x;
    if (p < plow) {
        q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= phigh) {
        q = p - 0.5;
        r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    return x;
}

// z for a central two-sided interval at `level` percent (e.g. 95 -> 1.95996...)
inline double z_for_level(int level) {
    return normal_quantile(0.5 + level / 200.0);
}

// standard normal upper tail
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Variance-weighted multi-output R^2: 1 - (total squared error over all cells)
// / (total squared deviation from per-dimension means). Zero total variance is
// undefined and returns NaN.
inline double r2_score(const Eigen::Ref<const Eigen::MatrixXd>& y,
                       const Eigen::Ref<const Eigen::MatrixXd>& yhat) {
    if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
        throw std::invalid_argument("r2_score: shape mismatch");
    if (y.rows() < 2) throw std::invalid_argument("r2_score: need n >= 2");
    const double sse = (y - yhat).squaredNorm();
    const Eigen::RowVectorXd means = y.colwise().mean();
    const double sst = (y.rowwise() - means).squaredNorm();
    if (sst == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - sse / sst;
}

// Per-dimension R^2 averaged across outputs (exposed as an alternative
// aggregation; dimensions with zero variance are skipped).
inline double r2_score_per_dim_mean(const Eigen::Ref<const Eigen::MatrixXd>& y,
                                    const Eigen::Ref<const Eigen::MatrixXd>& yhat) {
    if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
        throw std::invalid_argument("r2_score: shape mismatch");
    double sum = 0.0;
    Eigen::Index used = 0;
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const double mean = y.col(j).mean();
        const double sst = (y.col(j).array() - mean).square().sum();
        if (sst == 0.0) continue;
        const double sse = (y.col(j) - yhat.col(j)).squaredNorm();
        sum += 1.0 - sse / sst;
        ++used;
    }
    if (used == 0) return std::numeric_limits<double>::quiet_NaN();
    return sum / static_cast<double>(used);
}

// Moving-block bootstrap of the R^2 of chronologically ordered (y, yhat) pairs.
// Resamples ceil(n/b) blocks of length b = max(2, floor(n^(1/3))) with
// replacement from the n-b+1 overlapping blocks, truncated to n. SE is the
// sample standard deviation of the replicate R^2s (Bessel's correction); the
// CI at each level is point +- z * SE.
inline StatReport block_bootstrap(const Eigen::Ref<const Eigen::MatrixXd>& y,
                                  const Eigen::Ref<const Eigen::MatrixXd>& yhat,
                                  int n_reps = 400, std::vector<int> levels = {90, 95, 99},
                                  std::uint64_t seed = 0) {
    const Eigen::Index n = y.rows();
    if (n < 4) throw std::invalid_argument("block_bootstrap: need n >= 4");
    const Eigen::Index b = bootstrap_block_length(n);
    if (n < b) throw std::invalid_argument("block_bootstrap: n < block length");
    if (n_reps < 2) throw std::invalid_argument("block_bootstrap: need n_reps >= 2");

    StatReport report;
    report.n = n;
    report.block_length = b;
    report.n_reps = n_reps;
    report.r2 = r2_score(y, yhat);

    const Eigen::Index n_blocks = (n + b - 1) / b;
    Eigen::MatrixXd ry(n, y.cols()), rp(n, y.cols());
    std::vector<double> reps(static_cast<std::size_t>(n_reps));
    for (int r = 0; r < n_reps; ++r) {
        Rng rng(derive_seed(seed, "bootstrap", static_cast<std::uint64_t>(r)));
        Eigen::Index filled = 0;
        for (Eigen::Index blk = 0; blk < n_blocks; ++blk) {
            const auto start =
                static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n - b + 1)));
            const Eigen::Index len = std::min(b, n - filled);
            ry.middleRows(filled, len) = y.middleRows(start, len);
            rp.middleRows(filled, len) = yhat.middleRows(start, len);
            filled += len;
            if (filled == n) break;
        }
        reps[static_cast<std::size_t>(r)] = r2_score(ry, rp);
    }
    double mean = 0.0;
    for (double v : reps) mean += v;
    mean /= n_reps;
    double var = 0.0;
    for (double v : reps) var += (v - mean) * (v - mean);
    report.se = std::sqrt(var / (n_reps - 1));

    for (int level : levels) {
        const double z = z_for_level(level);
        report.ci[level] = {report.r2 - z * report.se, report.r2 + z * report.se};
    }
    return report;
}

// --- comparisons ------------------------------------------------------------

struct OneWayComparison {
    double z = 0.0;
    double p_one_sided = 1.0;
    bool significant = false;   // at alpha = 0.01
    bool ci_overlap = true;     // at the level below
    int overlap_level = 95;
};

// One-sided test of advanced R^2 > baseline R^2 using bootstrap SEs, plus the
// CI-overlap flag at `overlap_level`.
inline OneWayComparison compare_one_way(const StatReport& advanced, const StatReport& baseline,
                                        int overlap_level = 95, double alpha = 0.01) {
    const double denom = std::hypot(advanced.se, baseline.se);
    if (denom == 0.0) throw std::invalid_argument("compare_one_way: both SEs are zero");
    OneWayComparison out;
    out.z = (advanced.r2 - baseline.r2) / denom;
    out.p_one_sided = normal_sf(out.z);
    out.significant = out.p_one_sided < alpha;
    out.overlap_level = overlap_level;
    const auto a = advanced.ci.at(overlap_level);
    const auto b = baseline.ci.at(overlap_level);
    out.ci_overlap = a.first <= b.second && b.first <= a.second;
    return out;
}

enum class Verdict { MlpWins, Tie, LinearWins };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::MlpWins: return "mlp_wins";
        case Verdict::Tie: return "tie";
        case Verdict::LinearWins: return "linear_wins";
    }
    return "?";
}

struct TwoSidedComparison {
    std::map<int, Verdict> per_level;  // winner only when CIs are disjoint
    Verdict absolute = Verdict::Tie;   // by raw R^2
};

inline TwoSidedComparison compare_two_sided(const StatReport& linear, const StatReport& mlp,
                                            const std::vector<int>& levels = {90, 95, 99}) {
    TwoSidedComparison out;
    out.absolute = mlp.r2 > linear.r2 ? Verdict::MlpWins
                   : linear.r2 > mlp.r2 ? Verdict::LinearWins
                                        : Verdict::Tie;
    for (int level : levels) {
        const auto l = linear.ci.at(level);
        const auto m = mlp.ci.at(level);
        const bool disjoint = l.second < m.first || m.second < l.first;
        if (!disjoint)
            out.per_level[level] = Verdict::Tie;
        else
            out.per_level[level] = mlp.r2 > linear.r2 ? Verdict::MlpWins : Verdict::LinearWins;
    }
    return out;
}

// --- aggregation ------------------------------------------------------------

// Upper tail of a chi-square distribution with even dof = 2k, evaluated in log
// space:  Q(x; 2k) = exp(-x/2) * sum_{i<k} (x/2)^i / i!
inline double chi2_sf_even_dof(double x, int k) {
    if (k < 1) throw std::invalid_argument("chi2_sf_even_dof: k >= 1");
    const double h = x / 2.0;
    if (h <= 0.0) return 1.0;
    double log_terms_max = -std::numeric_limits<double>::infinity();
    std::vector<double> log_terms(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        log_terms[static_cast<std::size_t>(i)] = -h + i * std::log(h) - std::lgamma(i + 1.0);
        log_terms_max = std::max(log_terms_max, log_terms[static_cast<std::size_t>(i)]);
    }
    double acc = 0.0;
    for (double lt : log_terms) acc += std::exp(lt - log_terms_max);
    const double log_q = log_terms_max + std::log(acc);
    return log_q > 0.0 ? 1.0 : std::exp(log_q);
}

struct CombinedP {
    double p = 1.0;              // Fisher's method
    double statistic = 0.0;      // -2 sum(ln p_i)
    int dof = 0;                 // 2k
    double bonferroni = 1.0;     // min(1, k * min p), sanity cross-check
};

// Fisher's combination of independent p-values; the simple Bonferroni bound is
// reported alongside as a cross-check.
inline CombinedP aggregate_overall_p(const std::vector<double>& p_values) {
    if (p_values.empty()) throw std::invalid_argument("aggregate_overall_p: empty list");
    CombinedP out;
    double min_p = 1.0;
    for (double p : p_values) {
        if (!(p > 0.0 && p <= 1.0))
            throw std::invalid_argument("aggregate_overall_p: p must be in (0, 1]");
        out.statistic += -2.0 * std::log(p);
        min_p = std::min(min_p, p);
    }
    const int k = static_cast<int>(p_values.size());
    out.dof = 2 * k;
    out.p = chi2_sf_even_dof(out.statistic, k);
    out.bonferroni = std::min(1.0, k * min_p);
    return out;
}

}  // namespace worldprobe
