#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "worldprobe/rng.hpp"
#include "worldprobe/stats.hpp"

namespace worldprobe {

// Probes minimize  0.5 * mean ||pred - target||^2 + lambda * ||weights||_1
// by mini-batch Adam. The L1 term enters as a sign subgradient away from zero;
// a weight sitting exactly at zero stays frozen while its data gradient is
// within [-lambda, lambda] (its momentum is cleared), and a weight whose
// update would cross zero is clamped onto it. Subgradient iterates do not
// converge pointwise, so fits return the best iterate seen: lowest full-train
// objective, or highest validation R^2 when a validation set is supplied.

struct HyperParams {
    double lr = 1e-4;
    double lambda = 1e-8;
    double dropout = 0.0;  // MLP only
};

struct FitControl {
    int batch_size = 512;
    int epochs = 300;
    std::uint64_t seed = 0;
    const Eigen::MatrixXd* x_val = nullptr;  // enables early stopping
    const Eigen::MatrixXd* y_val = nullptr;
    int patience = 50;
    double min_delta = 1e-5;
};

namespace detail {

struct AdamState {
    Eigen::MatrixXd m, v;
    long step = 0;

    explicit AdamState(Eigen::Index rows, Eigen::Index cols)
        : m(Eigen::MatrixXd::Zero(rows, cols)), v(Eigen::MatrixXd::Zero(rows, cols)) {}

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
};

// One Adam step without regularization (used for MLP biases and lambda = 0).
template <typename Weights, typename Grad>
inline void adam_step(Weights& w, const Grad& grad, AdamState& st, double lr) {
    ++st.step;
    st.m = AdamState::kBeta1 * st.m + (1.0 - AdamState::kBeta1) * grad;
    st.v = AdamState::kBeta2 * st.v + (1.0 - AdamState::kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(st.step));
    for (Eigen::Index j = 0; j < w.size(); ++j)
        w(j) -= lr * (st.m(j) / c1) / (std::sqrt(st.v(j) / c2) + AdamState::kEps);
}

// Adam step with the L1 subgradient, absorbing zeros and zero-crossing clamp.
inline void adam_l1_step(Eigen::MatrixXd& w, const Eigen::MatrixXd& grad_data, double lambda,
                         AdamState& st, double lr) {
    if (lambda <= 0.0) {
        adam_step(w, grad_data, st, lr);
        return;
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(st.step));
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        const double wj = w(j);
        const double gd = grad_data(j);
        double g;
        bool frozen = false;
        if (wj == 0.0) {
            if (std::abs(gd) <= lambda) {
                frozen = true;
                g = 0.0;
            } else {
                g = gd - lambda * (gd > 0 ? 1.0 : -1.0);
            }
        } else {
            g = gd + lambda * (wj > 0 ? 1.0 : -1.0);
        }
        double& m = st.m(j);
        double& v = st.v(j);
        m = AdamState::kBeta1 * m + (1.0 - AdamState::kBeta1) * g;
        v = AdamState::kBeta2 * v + (1.0 - AdamState::kBeta2) * g * g;
        if (frozen) {
            m = 0.0;  // stale momentum must not push a settled weight off zero
            continue;
        }
        const double step = lr * (m / c1) / (std::sqrt(v / c2) + AdamState::kEps);
        const double next = wj - step;
        w(j) = (wj != 0.0 && next * wj < 0.0) ? 0.0 : next;
    }
}

inline std::vector<Eigen::Index> batch_order(Eigen::Index n, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    return idx;
}

inline void gather_rows(const Eigen::MatrixXd& src, const std::vector<Eigen::Index>& order,
                        Eigen::Index lo, Eigen::Index len, Eigen::MatrixXd& dst) {
    dst.resize(len, src.cols());
    for (Eigen::Index r = 0; r < len; ++r)
        dst.row(r) = src.row(order[static_cast<std::size_t>(lo + r)]);
}

[[noreturn]] inline void throw_diverged(const char* kind, int epoch, const HyperParams& hp) {
    throw std::runtime_error(std::string(kind) + " training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch) + " [lr=" + std::to_string(hp.lr) +
                             ", lambda=" + std::to_string(hp.lambda) + "]");
}

}  // namespace detail

// --- linear probe -----------------------------------------------------------

// Weight-only linear map from features to transition vectors; no bias term.
struct LinearProbe {
    Eigen::MatrixXd weights;  // [feature_dim, d]
    HyperParams hyper;

    Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        if (x.cols() != weights.rows())
            throw std::invalid_argument("LinearProbe::predict: feature dim mismatch");
        return x * weights;
    }
    Eigen::VectorXd predict_one(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        if (x.size() != weights.rows())
            throw std::invalid_argument("LinearProbe::predict: feature dim mismatch");
        return weights.transpose() * x;
    }
};

inline double linear_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                               const Eigen::MatrixXd& w, double lambda) {
    const double mse = 0.5 * (x * w - y).squaredNorm() / static_cast<double>(x.rows());
    return mse + lambda * w.cwiseAbs().sum();
}

inline LinearProbe fit_linear(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                              const HyperParams& hp, const FitControl& ctl = {}) {
    const Eigen::Index n = x.rows();
    if (n < 1 || y.rows() != n) throw std::invalid_argument("fit_linear: bad shapes");
    const Eigen::Index p = x.cols(), d = y.cols();
    const bool use_val = ctl.x_val != nullptr && ctl.y_val != nullptr;

    Rng rng(derive_seed(ctl.seed, "fit-linear"));
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(p, d);
    for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = 0.01 * rng.normal();

    detail::AdamState adam(p, d);
    Eigen::MatrixXd best_w = w;
    double best_score = use_val ? -std::numeric_limits<double>::infinity()
                                : linear_objective(x, y, w, hp.lambda);
    if (use_val) {
        const double r2 = r2_score(*ctl.y_val, (*ctl.x_val) * w);
        if (std::isfinite(r2)) best_score = r2;
    }
    int stale = 0;

    Eigen::MatrixXd xb, yb;
    for (int epoch = 1; epoch <= ctl.epochs; ++epoch) {
        const auto order = detail::batch_order(n, rng);
        for (Eigen::Index lo = 0; lo < n; lo += ctl.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(ctl.batch_size, n - lo);
            detail::gather_rows(x, order, lo, len, xb);
            detail::gather_rows(y, order, lo, len, yb);
            Eigen::MatrixXd grad = xb.transpose() * (xb * w - yb) / static_cast<double>(len);
            detail::adam_l1_step(w, grad, hp.lambda, adam, hp.lr);
        }
        if (use_val) {
            const double r2 = r2_score(*ctl.y_val, (*ctl.x_val) * w);
            if (!std::isfinite(linear_objective(x, y, w, hp.lambda)))
                detail::throw_diverged("linear", epoch, hp);
            if (std::isfinite(r2) && r2 > best_score + ctl.min_delta) {
                best_score = r2;
                best_w = w;
                stale = 0;
            } else if (++stale >= ctl.patience) {
                break;
            }
        } else {
            const double obj = linear_objective(x, y, w, hp.lambda);
            if (!std::isfinite(obj)) detail::throw_diverged("linear", epoch, hp);
            if (obj < best_score) {
                best_score = obj;
                best_w = w;
            }
        }
    }
    LinearProbe probe;
    probe.weights = std::move(best_w);
    probe.hyper = hp;
    return probe;
}

// --- MLP probe ---------------------------------------------------------------

// Two-layer perceptron, hidden dim = 2 x input dim, rectified-linear units,
// dropout on the hidden layer during training.
struct MlpProbe {
    Eigen::MatrixXd w1;  // [p, h]
    Eigen::RowVectorXd b1;
    Eigen::MatrixXd w2;  // [h, d]
    Eigen::RowVectorXd b2;
    HyperParams hyper;

    Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        if (x.cols() != w1.rows())
            throw std::invalid_argument("MlpProbe::predict: feature dim mismatch");
        Eigen::MatrixXd h = ((x * w1).rowwise() + b1).cwiseMax(0.0);
        return (h * w2).rowwise() + b2;
    }
};

inline double mlp_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                            const MlpProbe& probe, double lambda) {
    const double mse = 0.5 * (probe.predict(x) - y).squaredNorm() / static_cast<double>(x.rows());
    return mse + lambda * (probe.w1.cwiseAbs().sum() + probe.w2.cwiseAbs().sum());
}

namespace detail {

struct MlpGradients {
    Eigen::MatrixXd w1, w2;
    Eigen::RowVectorXd b1, b2;
};

// Backprop through linear -> ReLU -> dropout -> linear with 0.5*mean-MSE loss.
// `mask` is empty (no dropout) or the inverted-dropout scaling per hidden unit.
inline MlpGradients mlp_backward(const Eigen::MatrixXd& xb, const Eigen::MatrixXd& yb,
                                 const MlpProbe& probe, const Eigen::MatrixXd& mask) {
    const auto bsz = static_cast<double>(xb.rows());
    Eigen::MatrixXd z1 = (xb * probe.w1).rowwise() + probe.b1;
    Eigen::MatrixXd h = z1.cwiseMax(0.0);
    Eigen::MatrixXd hd = mask.size() ? h.cwiseProduct(mask) : h;
    Eigen::MatrixXd err = (((hd * probe.w2).rowwise() + probe.b2) - yb) / bsz;

    MlpGradients g;
    g.w2 = hd.transpose() * err;
    g.b2 = err.colwise().sum();
    Eigen::MatrixXd dh = err * probe.w2.transpose();
    if (mask.size()) dh = dh.cwiseProduct(mask);
    Eigen::MatrixXd dz1 = (z1.array() > 0.0).select(dh, 0.0);
    g.w1 = xb.transpose() * dz1;
    g.b1 = dz1.colwise().sum();
    return g;
}

}  // namespace detail

inline MlpProbe fit_mlp(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        const HyperParams& hp, const FitControl& ctl = {}) {
    const Eigen::Index n = x.rows();
    if (n < 1 || y.rows() != n) throw std::invalid_argument("fit_mlp: bad shapes");
    if (hp.dropout < 0.0 || hp.dropout >= 1.0)
        throw std::invalid_argument("fit_mlp: dropout must be in [0, 1)");
    const Eigen::Index p = x.cols(), d = y.cols(), h = 2 * p;
    const bool use_val = ctl.x_val != nullptr && ctl.y_val != nullptr;

    Rng rng(derive_seed(ctl.seed, "fit-mlp"));
    MlpProbe probe;
    probe.hyper = hp;
    probe.w1.resize(p, h);
    probe.w2.resize(h, d);
    const double s1 = std::sqrt(2.0 / static_cast<double>(p));
    const double s2 = std::sqrt(2.0 / static_cast<double>(h));
    for (Eigen::Index j = 0; j < probe.w1.size(); ++j) probe.w1(j) = s1 * rng.normal();
    for (Eigen::Index j = 0; j < probe.w2.size(); ++j) probe.w2(j) = s2 * rng.normal();
    probe.b1 = Eigen::RowVectorXd::Zero(h);
    probe.b2 = Eigen::RowVectorXd::Zero(d);

    detail::AdamState a_w1(p, h), a_w2(h, d), a_b1(1, h), a_b2(1, d);
    MlpProbe best = probe;
    double best_score;
    if (use_val) {
        const double r2 = r2_score(*ctl.y_val, probe.predict(*ctl.x_val));
        best_score = std::isfinite(r2) ? r2 : -std::numeric_limits<double>::infinity();
    } else {
        best_score = mlp_objective(x, y, probe, hp.lambda);
    }
    int stale = 0;

    const double keep = 1.0 - hp.dropout;
    Eigen::MatrixXd xb, yb, mask;
    for (int epoch = 1; epoch <= ctl.epochs; ++epoch) {
        const auto order = detail::batch_order(n, rng);
        for (Eigen::Index lo = 0; lo < n; lo += ctl.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(ctl.batch_size, n - lo);
            detail::gather_rows(x, order, lo, len, xb);
            detail::gather_rows(y, order, lo, len, yb);
            if (hp.dropout > 0.0) {
                mask.resize(len, h);
                for (Eigen::Index j = 0; j < mask.size(); ++j)
                    mask(j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
            } else {
                mask.resize(0, 0);
            }
            auto g = detail::mlp_backward(xb, yb, probe, mask);
            detail::adam_l1_step(probe.w1, g.w1, hp.lambda, a_w1, hp.lr);
            detail::adam_l1_step(probe.w2, g.w2, hp.lambda, a_w2, hp.lr);
            detail::adam_step(probe.b1, g.b1, a_b1, hp.lr);
            detail::adam_step(probe.b2, g.b2, a_b2, hp.lr);
        }
        if (use_val) {
            if (!std::isfinite(mlp_objective(x, y, probe, hp.lambda)))
                detail::throw_diverged("mlp", epoch, hp);
            const double r2 = r2_score(*ctl.y_val, probe.predict(*ctl.x_val));
            if (std::isfinite(r2) && r2 > best_score + ctl.min_delta) {
                best_score = r2;
                best = probe;
                stale = 0;
            } else if (++stale >= ctl.patience) {
                break;
            }
        } else {
            const double obj = mlp_objective(x, y, probe, hp.lambda);
            if (!std::isfinite(obj)) detail::throw_diverged("mlp", epoch, hp);
            if (obj < best_score) {
                best_score = obj;
                best = probe;
            }
        }
    }
    return best;
}

// --- grid search -------------------------------------------------------------

enum class ProbeKind { Linear, Mlp };

inline std::string to_string(ProbeKind kind) {
    return kind == ProbeKind::Linear ? "Linear" : "MLP";
}

inline ProbeKind probe_kind_from_string(const std::string& s) {
    if (s == "Linear" || s == "linear") return ProbeKind::Linear;
    if (s == "MLP" || s == "mlp") return ProbeKind::Mlp;
    throw std::invalid_argument("unknown probe kind: " + s);
}

// Training defaults; grids are swept by grid_search.
struct TrainConfig {
    int batch_size = 512;
    int sweep_epochs = 50;
    int final_epochs = 300;
    int max_epochs = 1000;
    std::vector<double> lr_grid = {1e-3, 1e-4, 1e-5};
    std::vector<double> lambda_grid = {1e-7, 1e-8, 1e-9};
    std::vector<double> dropout_grid = {0.1};  // MLP only
    bool standardize_features = false;
    int early_stop_patience = 50;
    double early_stop_min_delta = 1e-5;
};

using Probe = std::variant<LinearProbe, MlpProbe>;

// One row of the probe performance schema: kind x input mode x layer x K.
struct ProbeResult {
    std::string dataset;
    ProbeKind kind = ProbeKind::Linear;
    std::string mode;     // "regular" (activations), "embedding", "joint"
    int layer = -1;       // < 0 for embedding-mode probes (no layer involved)
    int horizon = 1;      // K
    double train_r2 = 0.0;
    double train_std = 0.0;
    double test_r2 = 0.0;
    double test_std = 0.0;
    double lr = 0.0;
    double lambda = 0.0;
    double dropout = -1.0;  // < 0 for linear probes
    double val_r2 = 0.0;

    bool uses_activations() const { return mode != "embedding"; }
};

inline Eigen::MatrixXd probe_predict(const Probe& probe, const Eigen::MatrixXd& x) {
    return std::visit([&](const auto& p) { return p.predict(x); }, probe);
}

struct GridCellOutcome {
    HyperParams hyper;
    double val_r2 = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    std::string error;
};

struct GridSearchResult {
    HyperParams best;
    std::size_t best_cell = 0;
    double val_r2 = 0.0;    // of the winning sweep cell
    double train_r2 = 0.0;  // of the refit probe
    double test_r2 = 0.0;
    Probe probe;
    Eigen::MatrixXd train_pred, test_pred;
    std::vector<GridCellOutcome> cells;
};

namespace detail {

// Selection order: higher val R^2, then larger lambda, then smaller lr, then
// smaller dropout (reproducible tie-breaking).
inline bool cell_beats(const GridCellOutcome& a, const GridCellOutcome& b) {
    if (a.diverged || !std::isfinite(a.val_r2)) return false;
    if (b.diverged || !std::isfinite(b.val_r2)) return true;
    if (a.val_r2 != b.val_r2) return a.val_r2 > b.val_r2;
    if (a.hyper.lambda != b.hyper.lambda) return a.hyper.lambda > b.hyper.lambda;
    if (a.hyper.lr != b.hyper.lr) return a.hyper.lr < b.hyper.lr;
    return a.hyper.dropout < b.hyper.dropout;
}

struct Standardizer {
    Eigen::RowVectorXd mean, scale;

    static Standardizer fit(const Eigen::MatrixXd& x) {
        Standardizer s;
        s.mean = x.colwise().mean();
        Eigen::RowVectorXd var =
            (x.rowwise() - s.mean).array().square().colwise().mean();
        s.scale = var.array().sqrt().max(1e-12);
        return s;
    }
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.rowwise() - mean).array().rowwise() / scale.array();
    }
};

}  // namespace detail

// Trains every (lr, lambda[, dropout]) cell for sweep_epochs, selects by
// validation R^2, refits the winner for final_epochs with validation early
// stopping, and reports train/test R^2 plus test predictions.
inline GridSearchResult grid_search(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                                    const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                                    const Eigen::MatrixXd& x_test, const Eigen::MatrixXd& y_test,
                                    ProbeKind kind, const TrainConfig& config,
                                    std::uint64_t seed) {
    if (config.lr_grid.empty() || config.lambda_grid.empty())
        throw std::invalid_argument("grid_search: empty grid");
    if (kind == ProbeKind::Mlp && config.dropout_grid.empty())
        throw std::invalid_argument("grid_search: empty dropout grid");

    const Eigen::MatrixXd *xtr = &x_train, *xva = &x_val, *xte = &x_test;
    Eigen::MatrixXd xtr_s, xva_s, xte_s;
    if (config.standardize_features) {
        auto std = detail::Standardizer::fit(x_train);
        xtr_s = std.apply(x_train);
        xva_s = std.apply(x_val);
        xte_s = std.apply(x_test);
        xtr = &xtr_s;
        xva = &xva_s;
        xte = &xte_s;
    }

    std::vector<HyperParams> grid;
    for (double lr : config.lr_grid)
        for (double lambda : config.lambda_grid) {
            if (kind == ProbeKind::Mlp) {
                for (double dropout : config.dropout_grid) grid.push_back({lr, lambda, dropout});
            } else {
                grid.push_back({lr, lambda, 0.0});
            }
        }

    GridSearchResult result;
    result.cells.resize(grid.size());
    const int sweep_epochs = std::min(config.sweep_epochs, config.max_epochs);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        GridCellOutcome& cell = result.cells[i];
        cell.hyper = grid[i];
        FitControl ctl;
        ctl.batch_size = config.batch_size;
        ctl.epochs = sweep_epochs;
        ctl.seed = derive_seed(seed, "grid-cell", i);
        try {
            if (kind == ProbeKind::Linear) {
                const auto probe = fit_linear(*xtr, y_train, grid[i], ctl);
                cell.val_r2 = r2_score(y_val, probe.predict(*xva));
            } else {
                const auto probe = fit_mlp(*xtr, y_train, grid[i], ctl);
                cell.val_r2 = r2_score(y_val, probe.predict(*xva));
            }
        } catch (const std::exception& e) {
            cell.diverged = true;
            cell.error = e.what();
        }
    }

    std::size_t best = 0;
    bool any_ok = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& cell = result.cells[i];
        if (cell.diverged || !std::isfinite(cell.val_r2)) continue;
        if (!any_ok || detail::cell_beats(cell, result.cells[best])) best = i;
        any_ok = true;
    }
    if (!any_ok) {
        std::string msg = "grid_search: every cell diverged:";
        for (const auto& cell : result.cells)
            msg += "\n  lr=" + std::to_string(cell.hyper.lr) +
                   " lambda=" + std::to_string(cell.hyper.lambda) + ": " + cell.error;
        throw std::runtime_error(msg);
    }

    result.best = grid[best];
    result.best_cell = best;
    result.val_r2 = result.cells[best].val_r2;

    FitControl refit;
    refit.batch_size = config.batch_size;
    refit.epochs = std::min(config.final_epochs, config.max_epochs);
    refit.seed = derive_seed(seed, "grid-final", best);
    refit.x_val = xva;
    refit.y_val = &y_val;
    refit.patience = config.early_stop_patience;
    refit.min_delta = config.early_stop_min_delta;
    if (kind == ProbeKind::Linear)
        result.probe = fit_linear(*xtr, y_train, result.best, refit);
    else
        result.probe = fit_mlp(*xtr, y_train, result.best, refit);

    result.train_pred = probe_predict(result.probe, *xtr);
    result.test_pred = probe_predict(result.probe, *xte);
    result.train_r2 = r2_score(y_train, result.train_pred);
    result.test_r2 = r2_score(y_test, result.test_pred);
    return result;
}

}  // namespace worldprobe
