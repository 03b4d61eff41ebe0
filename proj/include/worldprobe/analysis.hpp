#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "worldprobe/dataset.hpp"
#include "worldprobe/probes.hpp"

namespace worldprobe {

// Descriptive analyses: temporal-coherence curves, Allan deviation of
// transition components, the RMS signal/noise decomposition per horizon, the
// layer x K location grid, and the patch-linearity identity check.

// --- temporal coherence -----------------------------------------------------

struct CoherencePoint {
    int horizon = 0;    // K
    double mean = 0.0;  // cosine(e_t, e_{t+K}), within-episode mean first
    double stddev = 0.0;  // across episode means
    Eigen::Index pairs = 0;
    Eigen::Index skipped = 0;  // zero-norm embedding pairs
};

struct CoherenceCurve {
    std::string dataset;
    std::vector<CoherencePoint> points;
};

inline CoherenceCurve temporal_coherence(const TrajectoryDataset& ds,
                                         const std::vector<int>& k_list = {1, 3, 10, 30}) {
    CoherenceCurve curve;
    curve.dataset = ds.name;
    for (int k : k_list) {
        if (k < 1) throw std::invalid_argument("temporal_coherence: K >= 1");
        CoherencePoint pt;
        pt.horizon = k;
        std::vector<double> episode_means;
        for (const auto& ep : ds.episodes) {
            if (ep.steps <= k) continue;
            Matrix pooled(ep.steps, ds.embed_dim);
            for (Eigen::Index t = 0; t < ep.steps; ++t)
                pooled.row(t) = ep.pooled(t).transpose();
            double sum = 0.0;
            Eigen::Index used = 0;
            for (Eigen::Index t = 0; t + k < ep.steps; ++t) {
                const double na = pooled.row(t).norm();
                const double nb = pooled.row(t + k).norm();
                if (na == 0.0 || nb == 0.0) {
                    ++pt.skipped;
                    continue;
                }
                sum += pooled.row(t).dot(pooled.row(t + k)) / (na * nb);
                ++used;
            }
            pt.pairs += used;
            if (used > 0) episode_means.push_back(sum / static_cast<double>(used));
        }
        if (!episode_means.empty()) {
            double mean = 0.0;
            for (double v : episode_means) mean += v;
            mean /= static_cast<double>(episode_means.size());
            double var = 0.0;
            for (double v : episode_means) var += (v - mean) * (v - mean);
            pt.mean = mean;
            pt.stddev = episode_means.size() > 1
                            ? std::sqrt(var / static_cast<double>(episode_means.size() - 1))
                            : 0.0;
        }
        curve.points.push_back(pt);
    }
    return curve;
}

// --- Allan variance -----------------------------------------------------------

// Overlapping Allan deviation of a scalar series at cluster size tau:
//   sigma^2(tau) = mean over i of (mean(y[i+tau .. i+2tau)) - mean(y[i .. i+tau)))^2 / 2
inline double allan_deviation(const Eigen::Ref<const Eigen::VectorXd>& series,
                              Eigen::Index tau) {
    const Eigen::Index n = series.size();
    if (tau < 1) throw std::invalid_argument("allan_deviation: tau >= 1");
    if (tau > n / 2) throw std::invalid_argument("allan_deviation: tau exceeds n/2");
    // cluster means via a cumulative sum
    Eigen::VectorXd cum(n + 1);
    cum(0) = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) cum(i + 1) = cum(i) + series(i);
    const Eigen::Index count = n - 2 * tau + 1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < count; ++i) {
        const double m1 = (cum(i + tau) - cum(i)) / static_cast<double>(tau);
        const double m2 = (cum(i + 2 * tau) - cum(i + tau)) / static_cast<double>(tau);
        acc += 0.5 * (m2 - m1) * (m2 - m1);
    }
    return std::sqrt(acc / static_cast<double>(count));
}

// power-of-two cluster sizes up to n/4
inline std::vector<Eigen::Index> default_allan_taus(Eigen::Index n) {
    std::vector<Eigen::Index> taus;
    for (Eigen::Index tau = 1; tau <= n / 4; tau *= 2) taus.push_back(tau);
    return taus;
}

struct AllanCurve {
    std::vector<Eigen::Index> taus;
    std::vector<double> deviation;  // aggregated by RMS across dimensions
};

inline AllanCurve allan_variance(const Eigen::Ref<const Eigen::MatrixXd>& series,
                                 std::vector<Eigen::Index> taus = {}) {
    const Eigen::Index n = series.rows();
    if (taus.empty()) taus = default_allan_taus(n);
    if (taus.empty()) throw std::invalid_argument("allan_variance: series too short");
    if (n < 4 * taus.front())
        throw std::invalid_argument("allan_variance: need n >= 4 * min(tau)");
    AllanCurve out;
    out.taus = taus;
    for (Eigen::Index tau : taus) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < series.cols(); ++j) {
            const double dev = allan_deviation(series.col(j), tau);
            acc += dev * dev;
        }
        out.deviation.push_back(std::sqrt(acc / static_cast<double>(series.cols())));
    }
    return out;
}

// log-log slope over the leading `points` cluster sizes
inline double allan_slope(const AllanCurve& curve, std::size_t points = 5) {
    const std::size_t n = std::min(points, curve.taus.size());
    if (n < 2) throw std::invalid_argument("allan_slope: need >= 2 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(static_cast<double>(curve.taus[i]));
        const double y = std::log(curve.deviation[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double k = static_cast<double>(n);
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

// --- transition signal/noise profile --------------------------------------------

struct NoiseProfileEntry {
    int horizon = 0;  // K
    double rms_total = 0.0;
    double rms_noise = 0.0;
    double signal_fraction = 0.0;  // 1 - noise/total
};

// White-noise floor of a K-step transition stream, read off the smallest-tau
// Allan deviation of the transitions themselves. For white observation noise
// eta, delta_t = eta_{t+K} - eta_t has first-difference mean square 4 sigma^2
// for K >= 2 but 6 sigma^2 for K = 1 (the lag-1 terms overlap), while the
// noise power in delta is 2 sigma^2 in both cases; hence the K = 1 correction.
inline std::vector<NoiseProfileEntry> transition_noise_profile(
    const TrajectoryDataset& ds, const std::vector<int>& k_list = {1, 3, 10, 30}) {
    std::vector<NoiseProfileEntry> out;
    for (int k : k_list) {
        NoiseProfileEntry entry;
        entry.horizon = k;
        double total_sq = 0.0, noise_sq = 0.0;
        Eigen::Index total_count = 0, noise_count = 0;
        for (const auto& ep : ds.episodes) {
            if (ep.steps <= k) continue;
            Matrix pooled(ep.steps, ds.embed_dim);
            for (Eigen::Index t = 0; t < ep.steps; ++t)
                pooled.row(t) = ep.pooled(t).transpose();
            const Eigen::Index rows = ep.steps - k;
            Matrix delta = pooled.bottomRows(rows) - pooled.topRows(rows);
            total_sq += delta.squaredNorm();
            total_count += delta.size();
            if (rows >= 4) {
                for (Eigen::Index j = 0; j < delta.cols(); ++j) {
                    const double dev = allan_deviation(delta.col(j), 1);
                    noise_sq += dev * dev;
                    ++noise_count;
                }
            }
        }
        if (total_count == 0 || total_sq == 0.0)
            throw std::invalid_argument("transition_noise_profile: degenerate transitions at K=" +
                                        std::to_string(k));
        entry.rms_total = std::sqrt(total_sq / static_cast<double>(total_count));
        const double correction = (k == 1) ? 2.0 / 3.0 : 1.0;
        entry.rms_noise = noise_count
                              ? std::sqrt(correction * noise_sq / static_cast<double>(noise_count))
                              : 0.0;
        entry.signal_fraction = 1.0 - entry.rms_noise / entry.rms_total;
        out.push_back(entry);
    }
    return out;
}

// --- layer x K grid ----------------------------------------------------------------

struct LayerKGrid {
    std::vector<int> layers;    // sorted
    std::vector<int> horizons;  // sorted
    Matrix best_test_r2;        // [layers, horizons], NaN where no result

    double cell(int layer, int k) const {
        const auto li = std::find(layers.begin(), layers.end(), layer);
        const auto ki = std::find(horizons.begin(), horizons.end(), k);
        if (li == layers.end() || ki == horizons.end())
            throw std::invalid_argument("layer_k_grid: no such cell");
        return best_test_r2(li - layers.begin(), ki - horizons.begin());
    }
};

// Best test R^2 per (layer, K) across probe kinds and the input modes that
// contain activations.
inline LayerKGrid layer_k_grid(const std::vector<ProbeResult>& results) {
    LayerKGrid grid;
    for (const auto& r : results) {
        if (!r.uses_activations() || r.layer < 0) continue;
        if (std::find(grid.layers.begin(), grid.layers.end(), r.layer) == grid.layers.end())
            grid.layers.push_back(r.layer);
        if (std::find(grid.horizons.begin(), grid.horizons.end(), r.horizon) ==
            grid.horizons.end())
            grid.horizons.push_back(r.horizon);
    }
    if (grid.layers.empty()) throw std::invalid_argument("layer_k_grid: no activation results");
    std::sort(grid.layers.begin(), grid.layers.end());
    std::sort(grid.horizons.begin(), grid.horizons.end());
    grid.best_test_r2 =
        Matrix::Constant(static_cast<Eigen::Index>(grid.layers.size()),
                         static_cast<Eigen::Index>(grid.horizons.size()),
                         -std::numeric_limits<double>::infinity());
    for (const auto& r : results) {
        if (!r.uses_activations() || r.layer < 0) continue;
        const auto li = std::find(grid.layers.begin(), grid.layers.end(), r.layer) -
                        grid.layers.begin();
        const auto ki = std::find(grid.horizons.begin(), grid.horizons.end(), r.horizon) -
                        grid.horizons.begin();
        grid.best_test_r2(li, ki) = std::max(grid.best_test_r2(li, ki), r.test_r2);
    }
    return grid;
}

// --- patch linearity -----------------------------------------------------------------

struct LinearityCheck {
    bool applicable = false;  // false for pre-pooled (N = 1) data
    double max_discrepancy = 0.0;
};

// Verifies that the pooled-embedding change equals the mean of per-patch
// differences for every valid (episode, t) pair at horizon K.
inline LinearityCheck patch_linearity_check(const TrajectoryDataset& ds, int k) {
    if (k < 1) throw std::invalid_argument("patch_linearity_check: K >= 1");
    LinearityCheck out;
    if (ds.patch_count < 2) return out;  // nothing to verify for pre-pooled data
    out.applicable = true;
    for (const auto& ep : ds.episodes) {
        for (Eigen::Index t = 0; t + k < ep.steps; ++t) {
            const Vector lhs = ep.pooled(t + k) - ep.pooled(t);
            Vector rhs = Vector::Zero(ds.embed_dim);
            for (Eigen::Index i = 0; i < ds.patch_count; ++i)
                rhs += (ep.patch(t + k, i).cast<double>() - ep.patch(t, i).cast<double>());
            rhs /= static_cast<double>(ds.patch_count);
            out.max_discrepancy =
                std::max(out.max_discrepancy, (lhs - rhs).cwiseAbs().maxCoeff());
        }
    }
    return out;
}

}  // namespace worldprobe
