#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "worldprobe/io.hpp"

namespace worldprobe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Storage mirrors the on-disk row-major float32 layout.
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One recorded episode: T steps of [N x d] patch embeddings plus one
// [T x A_layer] activation stream per probed layer.
struct Episode {
    std::string id;
    Eigen::Index steps = 0;        // T
    Eigen::Index patch_count = 0;  // N
    Eigen::Index embed_dim = 0;    // d
    MatrixF patches;               // [T, N*d], row t holds N patches of dim d
    std::map<int, MatrixF> activations;  // layer -> [T, A_layer]

    // patch i at step t
    Eigen::Map<const Eigen::VectorXf> patch(Eigen::Index t, Eigen::Index i) const {
        return Eigen::Map<const Eigen::VectorXf>(
            patches.data() + t * patches.cols() + i * embed_dim, embed_dim);
    }

    // mean-pooled embedding at step t, accumulated in double
    Vector pooled(Eigen::Index t) const {
        Vector e = Vector::Zero(embed_dim);
        for (Eigen::Index i = 0; i < patch_count; ++i)
            e += patch(t, i).cast<double>();
        return e / static_cast<double>(patch_count);
    }
};

struct TrajectoryDataset {
    std::string name;
    Eigen::Index embed_dim = 0;
    Eigen::Index patch_count = 0;
    std::vector<int> layers;
    std::map<int, Eigen::Index> activation_dims;
    std::vector<Episode> episodes;  // recorded chronological order, never permuted

    Eigen::Index total_steps() const {
        Eigen::Index n = 0;
        for (const auto& ep : episodes) n += ep.steps;
        return n;
    }
    bool has_layer(int layer) const {
        return activation_dims.count(layer) != 0;
    }
};

enum class FeatureMode { Activations, Embeddings, Joint };

inline std::string to_string(FeatureMode mode) {
    switch (mode) {
        case FeatureMode::Activations: return "activations";
        case FeatureMode::Embeddings: return "embeddings";
        case FeatureMode::Joint: return "joint";
    }
    return "?";
}

inline FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "activations" || s == "regular") return FeatureMode::Activations;
    if (s == "embeddings") return FeatureMode::Embeddings;
    if (s == "joint") return FeatureMode::Joint;
    throw std::invalid_argument("unknown feature mode: " + s);
}

// One supervised pair: features at time t, pooled-embedding change at t+K.
struct TransitionSample {
    std::string episode_id;
    Eigen::Index t = 0;
    int horizon = 0;  // K
    Vector features;
    Vector target;  // delta e, dim d
};

struct SplitSpec {
    double train_fraction = 0.70;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
};

struct TransitionSplits {
    Matrix x_train, y_train;
    Matrix x_val, y_val;
    Matrix x_test, y_test;
};

// --- operations -------------------------------------------------------------

// Component-wise arithmetic mean over N patch vectors. `patches` is [N, d].
inline Vector mean_pool(const Matrix& patches) {
    if (patches.rows() < 1) throw std::invalid_argument("mean_pool: no patches");
    return patches.colwise().mean().transpose();
}

namespace detail {

inline void check_finite(const float* data, std::size_t count, const std::string& episode_id,
                          Eigen::Index cols, const std::string& stream) {
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(data[i])) {
            const auto row = static_cast<Eigen::Index>(i) / cols;
            const auto col = static_cast<Eigen::Index>(i) % cols;
            throw std::runtime_error("non-finite value in episode '" + episode_id +
                                     "', stream '" + stream + "', step " + std::to_string(row) +
                                     ", index " + std::to_string(col));
        }
    }
}

}  // namespace detail

// Loads and fully validates a dataset directory (see README for the layout):
//   manifest.json + per-episode <id>/patches.f32 and <id>/act_<layer>.f32
inline TrajectoryDataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path))
        throw std::runtime_error("missing manifest: " + manifest_path.string());

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("invalid manifest JSON: " + std::string(e.what()));
    }

    TrajectoryDataset ds;
    try {
        ds.name = manifest.at("name").get<std::string>();
        ds.embed_dim = manifest.at("embed_dim").get<Eigen::Index>();
        ds.patch_count = manifest.at("patch_count").get<Eigen::Index>();
        ds.layers = manifest.at("layers").get<std::vector<int>>();
        for (const auto& [key, value] : manifest.at("activation_dims").items())
            ds.activation_dims[std::stoi(key)] = value.get<Eigen::Index>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest field error: " + std::string(e.what()));
    }
    if (ds.embed_dim < 1 || ds.patch_count < 1)
        throw std::runtime_error("manifest declares non-positive dims");
    for (int layer : ds.layers)
        if (!ds.activation_dims.count(layer))
            throw std::runtime_error("manifest lists layer " + std::to_string(layer) +
                                     " without an activation dim");

    for (const auto& entry : manifest.at("episodes")) {
        Episode ep;
        ep.id = entry.at("id").get<std::string>();
        ep.steps = entry.at("length").get<Eigen::Index>();
        ep.patch_count = ds.patch_count;
        ep.embed_dim = ds.embed_dim;
        if (ep.steps < 1)
            throw std::runtime_error("episode '" + ep.id + "' has non-positive length");

        const fs::path ep_dir = dir / ep.id;
        const auto patch_cols = ds.patch_count * ds.embed_dim;
        const auto patch_count = static_cast<std::size_t>(ep.steps * patch_cols);
        auto raw = read_f32(ep_dir / "patches.f32", patch_count);
        detail::check_finite(raw.data(), raw.size(), ep.id, patch_cols, "patches");
        ep.patches = Eigen::Map<const MatrixF>(raw.data(), ep.steps, patch_cols);

        for (int layer : ds.layers) {
            const auto act_dim = ds.activation_dims.at(layer);
            const std::string stream = "act_" + std::to_string(layer);
            auto act_raw = read_f32(ep_dir / (stream + ".f32"),
                                    static_cast<std::size_t>(ep.steps * act_dim));
            detail::check_finite(act_raw.data(), act_raw.size(), ep.id, act_dim, stream);
            ep.activations[layer] =
                Eigen::Map<const MatrixF>(act_raw.data(), ep.steps, act_dim);
        }
        ds.episodes.push_back(std::move(ep));
    }
    return ds;
}

// Writes a dataset in the exact on-disk layout load_dataset reads.
inline void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["name"] = ds.name;
    manifest["embed_dim"] = ds.embed_dim;
    manifest["patch_count"] = ds.patch_count;
    manifest["layers"] = ds.layers;
    nlohmann::ordered_json act;
    for (const auto& [layer, dim] : ds.activation_dims) act[std::to_string(layer)] = dim;
    manifest["activation_dims"] = act;
    nlohmann::ordered_json eps = nlohmann::ordered_json::array();
    for (const auto& ep : ds.episodes)
        eps.push_back({{"id", ep.id}, {"length", ep.steps}});
    manifest["episodes"] = eps;
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

    for (const auto& ep : ds.episodes) {
        const fs::path ep_dir = dir / ep.id;
        fs::create_directories(ep_dir);
        std::vector<float> buf(ep.patches.data(), ep.patches.data() + ep.patches.size());
        write_f32(ep_dir / "patches.f32", buf);
        for (const auto& [layer, act] : ep.activations) {
            std::vector<float> abuf(act.data(), act.data() + act.size());
            write_f32(ep_dir / ("act_" + std::to_string(layer) + ".f32"), abuf);
        }
    }
}

// One sample per (episode, t) with t + K < T; pairs never cross an episode
// boundary. `layer` is ignored for the embeddings mode.
inline std::vector<TransitionSample> compute_transitions(const TrajectoryDataset& ds, int k,
                                                         int layer, FeatureMode mode) {
    if (k < 1) throw std::invalid_argument("compute_transitions: K must be >= 1");
    const bool needs_acts = mode != FeatureMode::Embeddings;
    if (needs_acts && !ds.has_layer(layer))
        throw std::invalid_argument("dataset has no layer " + std::to_string(layer));

    std::vector<TransitionSample> samples;
    for (const auto& ep : ds.episodes) {
        if (ep.steps <= k) continue;
        // pool once per episode
        Matrix pooled(ep.steps, ds.embed_dim);
        for (Eigen::Index t = 0; t < ep.steps; ++t) pooled.row(t) = ep.pooled(t).transpose();
        const MatrixF* acts = needs_acts ? &ep.activations.at(layer) : nullptr;
        for (Eigen::Index t = 0; t + k < ep.steps; ++t) {
            TransitionSample s;
            s.episode_id = ep.id;
            s.t = t;
            s.horizon = k;
            s.target = (pooled.row(t + k) - pooled.row(t)).transpose();
            switch (mode) {
                case FeatureMode::Activations:
                    s.features = acts->row(t).cast<double>().transpose();
                    break;
                case FeatureMode::Embeddings:
                    s.features = pooled.row(t).transpose();
                    break;
                case FeatureMode::Joint: {
                    s.features.resize(acts->cols() + ds.embed_dim);
                    s.features.head(acts->cols()) = acts->row(t).cast<double>().transpose();
                    s.features.tail(ds.embed_dim) = pooled.row(t).transpose();
                    break;
                }
            }
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

// Contiguous prefix/middle/suffix partition by sample index. Rounding rule:
// floor for train and val, remainder to test.
inline std::array<std::pair<std::size_t, std::size_t>, 3>
chronological_split_bounds(std::size_t n, const SplitSpec& spec = {}) {
    if (n < 3) throw std::invalid_argument("chronological split needs at least 3 samples");
    const double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * n));
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * n));
    return {{{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, n}}};
}

inline std::array<std::vector<TransitionSample>, 3>
chronological_split(const std::vector<TransitionSample>& samples, const SplitSpec& spec = {}) {
    const auto bounds = chronological_split_bounds(samples.size(), spec);
    std::array<std::vector<TransitionSample>, 3> out;
    for (int part = 0; part < 3; ++part)
        out[part].assign(samples.begin() + bounds[part].first,
                         samples.begin() + bounds[part].second);
    return out;
}

// Stacks samples into design matrices (rows = samples).
inline std::pair<Matrix, Matrix> stack_samples(const std::vector<TransitionSample>& samples) {
    if (samples.empty()) return {Matrix(0, 0), Matrix(0, 0)};
    Matrix x(samples.size(), samples.front().features.size());
    Matrix y(samples.size(), samples.front().target.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        x.row(i) = samples[i].features.transpose();
        y.row(i) = samples[i].target.transpose();
    }
    return {std::move(x), std::move(y)};
}

inline TransitionSplits split_to_matrices(const std::vector<TransitionSample>& samples,
                                          const SplitSpec& spec = {}) {
    const auto parts = chronological_split(samples, spec);
    TransitionSplits out;
    std::tie(out.x_train, out.y_train) = stack_samples(parts[0]);
    std::tie(out.x_val, out.y_val) = stack_samples(parts[1]);
    std::tie(out.x_test, out.y_test) = stack_samples(parts[2]);
    return out;
}

}  // namespace worldprobe
