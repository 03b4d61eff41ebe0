#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "worldprobe/dataset.hpp"
#include "worldprobe/rng.hpp"
#include "worldprobe/stats.hpp"

namespace worldprobe {

// Synthetic closed-loop trajectory generators with known dynamics. Three
// systems:
//
//   noisy_drift        s' = s + drift * v(s) + process noise, with v a fixed
//                      smooth field (stable linear part plus a fixed
//                      sinusoidal part, parameters drawn once from the seed).
//                      Informative activations encode the state together with
//                      the system's own computed flow at horizons {1, 10, 30}
//                      (the agent "knows where it is going"), mixed through a
//                      fixed random readout and tanh.
//   torus_rotation     x' = (x + alpha) mod 1 on the circle, embeddings
//                      (cos 2 pi x, sin 2 pi x).
//   linear_contraction s' = rho * s with 0 < rho < 1; the fully linear
//                      benchmark system (activation map is linear here).
//
// `drift_scale` is the kind-specific dynamics parameter: the drift step for
// noisy_drift, the rotation increment alpha for torus_rotation, and the
// contraction factor rho for linear_contraction.

enum class SynthKind { NoisyDrift, TorusRotation, LinearContraction };

inline std::string to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::NoisyDrift: return "noisy_drift";
        case SynthKind::TorusRotation: return "torus_rotation";
        case SynthKind::LinearContraction: return "linear_contraction";
    }
    return "?";
}

inline SynthKind synth_kind_from_string(const std::string& s) {
    if (s == "noisy_drift") return SynthKind::NoisyDrift;
    if (s == "torus_rotation") return SynthKind::TorusRotation;
    if (s == "linear_contraction") return SynthKind::LinearContraction;
    throw std::invalid_argument("unknown synth kind: " + s);
}

struct SynthSystemSpec {
    SynthKind kind = SynthKind::NoisyDrift;
    std::string name = "synthetic";
    Eigen::Index state_dim = 16;       // d (torus_rotation requires 2)
    Eigen::Index activation_dim = 64;  // A
    Eigen::Index patch_count = 4;      // N
    double drift_scale = 0.06;
    double obs_noise = 0.1;   // sigma_e, per patch
    double act_noise = 0.02;  // sigma_a
    bool informative = true;  // false: activations are pure Gaussian noise
    bool linear_system = false;  // kill the sinusoidal drift and the tanh
    std::vector<int> layers = {15};
    std::uint64_t seed = 0;

    void validate() const {
        if (state_dim < 1 || activation_dim < 1 || patch_count < 1)
            throw std::invalid_argument("synth spec: dims must be positive");
        if (obs_noise < 0 || act_noise < 0)
            throw std::invalid_argument("synth spec: noise levels must be >= 0");
        if (layers.empty()) throw std::invalid_argument("synth spec: needs >= 1 layer id");
        if (kind == SynthKind::TorusRotation && state_dim != 2)
            throw std::invalid_argument("torus_rotation embeds on the circle: state_dim must be 2");
        if (kind == SynthKind::LinearContraction &&
            !(drift_scale > 0.0 && drift_scale < 1.0))
            throw std::invalid_argument("linear_contraction: drift_scale (rho) must be in (0,1)");
    }
};

inline SynthSystemSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSystemSpec spec;
    spec.kind = synth_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("name")) spec.name = j.at("name").get<std::string>();
    if (j.contains("state_dim")) spec.state_dim = j.at("state_dim").get<Eigen::Index>();
    if (j.contains("activation_dim"))
        spec.activation_dim = j.at("activation_dim").get<Eigen::Index>();
    if (j.contains("patch_count")) spec.patch_count = j.at("patch_count").get<Eigen::Index>();
    if (j.contains("drift_scale")) spec.drift_scale = j.at("drift_scale").get<double>();
    if (j.contains("obs_noise")) spec.obs_noise = j.at("obs_noise").get<double>();
    if (j.contains("act_noise")) spec.act_noise = j.at("act_noise").get<double>();
    if (j.contains("informative")) spec.informative = j.at("informative").get<bool>();
    if (j.contains("linear_system")) spec.linear_system = j.at("linear_system").get<bool>();
    if (j.contains("layers")) spec.layers = j.at("layers").get<std::vector<int>>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

inline nlohmann::ordered_json synth_spec_to_json(const SynthSystemSpec& spec) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(spec.kind);
    j["name"] = spec.name;
    j["state_dim"] = spec.state_dim;
    j["activation_dim"] = spec.activation_dim;
    j["patch_count"] = spec.patch_count;
    j["drift_scale"] = spec.drift_scale;
    j["obs_noise"] = spec.obs_noise;
    j["act_noise"] = spec.act_noise;
    j["informative"] = spec.informative;
    j["linear_system"] = spec.linear_system;
    j["layers"] = spec.layers;
    j["seed"] = spec.seed;
    return j;
}

namespace detail {

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

// Fixed system parameters, drawn once from the master seed.
struct NoisyDriftSystem {
    static constexpr int kPlanHorizons[3] = {1, 10, 30};
    static constexpr double kSinScale = 1.5;
    static constexpr double kOmegaScale = 2.0;

    Eigen::MatrixXd linear;  // stable linear part of v
    Eigen::MatrixXd sin_amp, sin_freq;
    Eigen::VectorXd sin_phase;
    std::vector<Eigen::MatrixXd> readout;      // per layer, [A, d*(1+3)]
    std::vector<Eigen::VectorXd> gain;         // per layer
    std::vector<double> plan_weight;           // per layer, peaked mid-list
    double drift = 0.0;
    bool linear_only = false;

    NoisyDriftSystem(const SynthSystemSpec& spec) {
        const auto d = spec.state_dim;
        drift = spec.drift_scale;
        linear_only = spec.linear_system;
        Rng rng(derive_seed(spec.seed, "system"));
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        Eigen::MatrixXd g = random_matrix(rng, d, d, inv_sqrt_d);
        Eigen::MatrixXd skew = 0.5 * (g - g.transpose());
        linear = 0.6 * skew - 0.1 * Eigen::MatrixXd::Identity(d, d);
        sin_amp = random_matrix(rng, d, d, (linear_only ? 0.0 : kSinScale) * inv_sqrt_d);
        sin_freq = random_matrix(rng, d, d, kOmegaScale * inv_sqrt_d);
        sin_phase.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) sin_phase(i) = rng.uniform(0.0, 2.0 * M_PI);

        const Eigen::Index u_dim = d * 4;
        const double inv_sqrt_u = 1.0 / std::sqrt(static_cast<double>(u_dim));
        const auto n_layers = spec.layers.size();
        for (std::size_t i = 0; i < n_layers; ++i) {
            Rng lr(derive_seed(spec.seed, "actmap", static_cast<std::uint64_t>(spec.layers[i])));
            readout.push_back(random_matrix(lr, spec.activation_dim, u_dim, inv_sqrt_u));
            Eigen::VectorXd gains(spec.activation_dim);
            for (Eigen::Index j = 0; j < spec.activation_dim; ++j)
                gains(j) = lr.uniform(0.3, 1.0);
            gain.push_back(std::move(gains));
            // informativeness profile across layers, peaked at the middle
            plan_weight.push_back(
                std::sin(M_PI * static_cast<double>(i + 1) / static_cast<double>(n_layers + 1)));
        }
    }

    // drift field v(s) for a batch of states, rows = states
    Eigen::MatrixXd field(const Eigen::MatrixXd& states) const {
        Eigen::MatrixXd out = states * linear.transpose();
        if (!linear_only) {
            Eigen::MatrixXd phase = states * sin_freq.transpose();
            phase.rowwise() += sin_phase.transpose();
            out.noalias() += phase.array().sin().matrix() * sin_amp.transpose();
        }
        return out;
    }

    // noiseless flow: `steps` iterations of s + drift * v(s)
    Eigen::MatrixXd flow(Eigen::MatrixXd states, int steps) const {
        for (int i = 0; i < steps; ++i) states += drift * field(states);
        return states;
    }

    // informative activation stream for layer index `li` (before noise)
    Eigen::MatrixXd activations(const Eigen::MatrixXd& states, std::size_t li) const {
        const auto t = states.rows();
        const auto d = states.cols();
        Eigen::MatrixXd u(t, 4 * d);
        u.leftCols(d) = states;
        Eigen::MatrixXd cur = states;
        int reached = 0;
        for (int hi = 0; hi < 3; ++hi) {
            const int target = kPlanHorizons[hi];
            cur = flow(std::move(cur), target - reached);
            reached = target;
            u.middleCols(d * (hi + 1), d) = plan_weight[li] * (cur - states);
        }
        Eigen::MatrixXd z = u * readout[li].transpose();
        z.array().rowwise() *= gain[li].transpose().array();
        if (linear_only) return z;
        return z.array().tanh().matrix();
    }
};

}  // namespace detail

// Generates a full dataset in memory. Same spec + seed produce identical data;
// episode streams are independent, so generation order is irrelevant.
inline TrajectoryDataset generate_dataset(const SynthSystemSpec& spec, int episodes, int steps) {
    spec.validate();
    if (episodes < 1) throw std::invalid_argument("generate: episodes must be >= 1");
    if (steps < 2) throw std::invalid_argument("generate: T must be >= 2");

    TrajectoryDataset ds;
    ds.name = spec.name;
    ds.embed_dim = spec.state_dim;
    ds.patch_count = spec.patch_count;
    ds.layers = spec.layers;
    for (int layer : spec.layers) ds.activation_dims[layer] = spec.activation_dim;

    std::optional<detail::NoisyDriftSystem> drift_sys;
    if (spec.kind == SynthKind::NoisyDrift) drift_sys.emplace(spec);

    // torus / contraction activation readouts, drawn once
    Eigen::MatrixXd simple_readout;
    Eigen::VectorXd simple_gain(spec.activation_dim);
    if (spec.kind != SynthKind::NoisyDrift) {
        Rng sys_rng(derive_seed(spec.seed, "system-simple"));
        simple_readout = detail::random_matrix(
            sys_rng, spec.activation_dim, spec.state_dim,
            1.0 / std::sqrt(static_cast<double>(spec.state_dim)));
        for (Eigen::Index j = 0; j < spec.activation_dim; ++j)
            simple_gain(j) = sys_rng.uniform(0.3, 1.0);
    }

    const auto d = spec.state_dim;
    const auto n_patch = spec.patch_count;
    for (int e = 0; e < episodes; ++e) {
        Rng rng(derive_seed(spec.seed, "episode", static_cast<std::uint64_t>(e)));
        Eigen::MatrixXd states(steps, d);

        switch (spec.kind) {
            case SynthKind::NoisyDrift: {
                const double process_noise = 0.1 * spec.drift_scale;
                Eigen::RowVectorXd s(d);
                for (Eigen::Index j = 0; j < d; ++j) s(j) = rng.normal();
                for (int t = 0; t < steps; ++t) {
                    states.row(t) = s;
                    Eigen::RowVectorXd vel = drift_sys->field(s);
                    for (Eigen::Index j = 0; j < d; ++j)
                        s(j) += spec.drift_scale * vel(j) + process_noise * rng.normal();
                }
                break;
            }
            case SynthKind::TorusRotation: {
                double x = rng.uniform();
                for (int t = 0; t < steps; ++t) {
                    states(t, 0) = std::cos(2.0 * M_PI * x);
                    states(t, 1) = std::sin(2.0 * M_PI * x);
                    x += spec.drift_scale;
                    x -= std::floor(x);
                }
                break;
            }
            case SynthKind::LinearContraction: {
                Eigen::RowVectorXd s(d);
                for (Eigen::Index j = 0; j < d; ++j) s(j) = rng.normal();
                for (int t = 0; t < steps; ++t) {
                    states.row(t) = s;
                    s *= spec.drift_scale;
                }
                break;
            }
        }

        Episode ep;
        ep.id = "ep" + std::to_string(e);
        ep.steps = steps;
        ep.patch_count = n_patch;
        ep.embed_dim = d;
        ep.patches.resize(steps, n_patch * d);
        for (int t = 0; t < steps; ++t)
            for (Eigen::Index i = 0; i < n_patch; ++i)
                for (Eigen::Index j = 0; j < d; ++j)
                    ep.patches(t, i * d + j) =
                        static_cast<float>(states(t, j) + spec.obs_noise * rng.normal());

        for (std::size_t li = 0; li < spec.layers.size(); ++li) {
            MatrixF act(steps, spec.activation_dim);
            if (!spec.informative) {
                for (Eigen::Index j = 0; j < act.size(); ++j)
                    act(j) = static_cast<float>(rng.normal());
            } else {
                Eigen::MatrixXd clean;
                if (spec.kind == SynthKind::NoisyDrift) {
                    clean = drift_sys->activations(states, li);
                } else {
                    clean = states * simple_readout.transpose();
                    clean.array().rowwise() *= simple_gain.transpose().array();
                    if (spec.kind == SynthKind::TorusRotation && !spec.linear_system)
                        clean = clean.array().tanh().matrix();
                    // linear_contraction stays linear: the fully linear benchmark
                }
                for (Eigen::Index t = 0; t < steps; ++t)
                    for (Eigen::Index j = 0; j < spec.activation_dim; ++j)
                        act(t, j) = static_cast<float>(clean(t, j) + spec.act_noise * rng.normal());
            }
            ep.activations[spec.layers[li]] = std::move(act);
        }
        ds.episodes.push_back(std::move(ep));
    }
    return ds;
}

// Generates and writes the on-disk dataset directory (see dataset module).
inline TrajectoryDataset generate(const SynthSystemSpec& spec, int episodes, int steps,
                                  const std::filesystem::path& out_dir) {
    TrajectoryDataset ds = generate_dataset(spec, episodes, steps);
    save_dataset(ds, out_dir);
    write_text_file(out_dir / "synth_spec.json", synth_spec_to_json(spec).dump(2) + "\n");
    return ds;
}

// Exact ridge-free least squares by normal equations on the generated data; an
// upper-bound reference for probe quality, independent of the gradient-descent
// training path.
inline double oracle_r2(const SynthSystemSpec& spec, int episodes, int steps, int k,
                        FeatureMode mode, int layer = -1) {
    if (mode == FeatureMode::Joint)
        throw std::invalid_argument("oracle_r2: mode must be activations or embeddings");
    TrajectoryDataset ds = generate_dataset(spec, episodes, steps);
    if (layer < 0) layer = spec.layers[(spec.layers.size() - 1) / 2];
    const auto samples = compute_transitions(ds, k, layer, mode);
    if (samples.size() < 3) throw std::invalid_argument("oracle_r2: too few samples");
    const auto splits = split_to_matrices(samples);

    const Eigen::MatrixXd& x = splits.x_train;
    const Eigen::MatrixXd& y = splits.y_train;
    Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::MatrixXd rhs = x.transpose() * y;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::MatrixXd w;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        w = ldlt.solve(rhs);
    } else {
        w = x.completeOrthogonalDecomposition().solve(y);
    }
    return r2_score(splits.y_test, splits.x_test * w);
}

}  // namespace worldprobe
