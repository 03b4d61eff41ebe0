#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "worldprobe/analysis.hpp"
#include "worldprobe/dataset.hpp"
#include "worldprobe/parallel.hpp"
#include "worldprobe/permutation.hpp"
#include "worldprobe/probes.hpp"
#include "worldprobe/report.hpp"
#include "worldprobe/stats.hpp"

namespace worldprobe {

// The run configuration mirrors the CLI flags; a run is reproducible from the
// config plus the dataset(s) alone.
struct RunConfig {
    std::vector<std::string> dataset_paths;
    std::vector<int> k_list = {1, 3, 10, 30};
    std::vector<int> layers;  // empty: all dataset layers
    std::vector<ProbeKind> kinds = {ProbeKind::Linear, ProbeKind::Mlp};
    std::vector<FeatureMode> modes = {FeatureMode::Activations, FeatureMode::Embeddings,
                                      FeatureMode::Joint};
    TrainConfig train;
    int n_reps = 400;
    int n_perm = 100;
    std::vector<int> levels = {90, 95, 99};
    std::string out_dir = "run";
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0 = hardware concurrency
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("dataset")) cfg.dataset_paths = {j.at("dataset").get<std::string>()};
    if (j.contains("datasets"))
        cfg.dataset_paths = j.at("datasets").get<std::vector<std::string>>();
    if (j.contains("k_list")) cfg.k_list = j.at("k_list").get<std::vector<int>>();
    if (j.contains("layers")) cfg.layers = j.at("layers").get<std::vector<int>>();
    if (j.contains("kinds")) {
        cfg.kinds.clear();
        for (const auto& s : j.at("kinds")) cfg.kinds.push_back(probe_kind_from_string(s));
    }
    if (j.contains("modes")) {
        cfg.modes.clear();
        for (const auto& s : j.at("modes"))
            cfg.modes.push_back(feature_mode_from_string(s.get<std::string>()));
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<int>();
        if (t.contains("sweep_epochs")) cfg.train.sweep_epochs = t.at("sweep_epochs").get<int>();
        if (t.contains("final_epochs")) cfg.train.final_epochs = t.at("final_epochs").get<int>();
        if (t.contains("max_epochs")) cfg.train.max_epochs = t.at("max_epochs").get<int>();
        if (t.contains("lr_grid")) cfg.train.lr_grid = t.at("lr_grid").get<std::vector<double>>();
        if (t.contains("lambda_grid"))
            cfg.train.lambda_grid = t.at("lambda_grid").get<std::vector<double>>();
        if (t.contains("dropout_grid"))
            cfg.train.dropout_grid = t.at("dropout_grid").get<std::vector<double>>();
        if (t.contains("standardize_features"))
            cfg.train.standardize_features = t.at("standardize_features").get<bool>();
    }
    if (j.contains("stats")) {
        const auto& s = j.at("stats");
        if (s.contains("n_reps")) cfg.n_reps = s.at("n_reps").get<int>();
        if (s.contains("n_perm")) cfg.n_perm = s.at("n_perm").get<int>();
        if (s.contains("levels")) cfg.levels = s.at("levels").get<std::vector<int>>();
    }
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<unsigned>();
    return cfg;
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["datasets"] = cfg.dataset_paths;
    j["k_list"] = cfg.k_list;
    j["layers"] = cfg.layers;
    nlohmann::ordered_json kinds = nlohmann::ordered_json::array();
    for (auto k : cfg.kinds) kinds.push_back(to_string(k));
    j["kinds"] = kinds;
    nlohmann::ordered_json modes = nlohmann::ordered_json::array();
    for (auto m : cfg.modes) modes.push_back(to_string(m));
    j["modes"] = modes;
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"sweep_epochs", cfg.train.sweep_epochs},
                  {"final_epochs", cfg.train.final_epochs},
                  {"max_epochs", cfg.train.max_epochs},
                  {"lr_grid", cfg.train.lr_grid},
                  {"lambda_grid", cfg.train.lambda_grid},
                  {"dropout_grid", cfg.train.dropout_grid},
                  {"standardize_features", cfg.train.standardize_features}};
    j["stats"] = {{"n_reps", cfg.n_reps}, {"n_perm", cfg.n_perm}, {"levels", cfg.levels}};
    j["out_dir"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    return j;
}

// One probing cell of the run lattice. Embedding-mode probes read no layer
// stream, so they appear once per (K, kind) with layer = -1.
struct ProbeCell {
    int k = 1;
    int layer = -1;
    ProbeKind kind = ProbeKind::Linear;
    FeatureMode mode = FeatureMode::Embeddings;
};

inline std::vector<ProbeCell> enumerate_cells(const RunConfig& cfg,
                                              const TrajectoryDataset& ds) {
    std::vector<int> layers = cfg.layers.empty() ? ds.layers : cfg.layers;
    for (int layer : layers)
        if (!ds.has_layer(layer))
            throw std::invalid_argument("config layer " + std::to_string(layer) +
                                        " not present in dataset");
    std::vector<ProbeCell> cells;
    for (int k : cfg.k_list)
        for (ProbeKind kind : cfg.kinds)
            for (FeatureMode mode : cfg.modes) {
                if (mode == FeatureMode::Embeddings) {
                    cells.push_back({k, -1, kind, mode});
                } else {
                    for (int layer : layers) cells.push_back({k, layer, kind, mode});
                }
            }
    return cells;
}

struct CellOutcome {
    ProbeCell cell;
    ProbeResult result;
    StatReport train_report, test_report;
    Eigen::MatrixXd test_pred, y_test;
    Probe probe;
    bool failed = false;
    std::string error;
};

// Runs grid search + refit + bootstrap for every cell. Feature matrices are
// shared across probe kinds; all seeds derive from the master seed and the
// cell's position in the enumeration, so results do not depend on thread
// scheduling.
inline std::vector<CellOutcome> run_probe_cells(const TrajectoryDataset& ds,
                                                const RunConfig& cfg) {
    const auto cells = enumerate_cells(cfg, ds);

    // one feature build per distinct (k, layer, mode); a horizon that leaves
    // too few samples fails its cells but never the whole run
    std::map<std::tuple<int, int, int>, TransitionSplits> features;
    std::map<std::tuple<int, int, int>, std::string> feature_errors;
    for (const auto& cell : cells) {
        const auto key = std::make_tuple(cell.k, cell.layer, static_cast<int>(cell.mode));
        if (features.count(key) || feature_errors.count(key)) continue;
        try {
            auto samples = compute_transitions(ds, cell.k, cell.layer, cell.mode);
            if (samples.size() < 3)
                throw std::runtime_error("horizon K=" + std::to_string(cell.k) +
                                         " leaves fewer than 3 transition samples");
            features.emplace(key, split_to_matrices(samples));
        } catch (const std::exception& e) {
            feature_errors.emplace(key, e.what());
        }
    }

    std::vector<CellOutcome> outcomes(cells.size());
    parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
        const ProbeCell& cell = cells[i];
        CellOutcome& out = outcomes[i];
        out.cell = cell;
        out.result.dataset = ds.name;
        out.result.kind = cell.kind;
        out.result.mode = cell.mode == FeatureMode::Activations ? "regular"
                          : cell.mode == FeatureMode::Embeddings ? "embedding"
                                                                 : "joint";
        out.result.layer = cell.layer;
        out.result.horizon = cell.k;
        const auto key = std::make_tuple(cell.k, cell.layer, static_cast<int>(cell.mode));
        if (const auto it = feature_errors.find(key); it != feature_errors.end()) {
            out.failed = true;
            out.error = it->second;
            return;
        }
        const auto& split = features.at(key);
        try {
            const auto gs =
                grid_search(split.x_train, split.y_train, split.x_val, split.y_val,
                            split.x_test, split.y_test, cell.kind, cfg.train,
                            derive_seed(cfg.seed, "probe-cell", i));
            out.train_report = block_bootstrap(split.y_train, gs.train_pred, cfg.n_reps,
                                               cfg.levels, derive_seed(cfg.seed, "boot-train", i));
            out.test_report = block_bootstrap(split.y_test, gs.test_pred, cfg.n_reps, cfg.levels,
                                              derive_seed(cfg.seed, "boot-test", i));
            out.result.train_r2 = gs.train_r2;
            out.result.train_std = out.train_report.se;
            out.result.test_r2 = gs.test_r2;
            out.result.test_std = out.test_report.se;
            out.result.val_r2 = gs.val_r2;
            out.result.lr = gs.best.lr;
            out.result.lambda = gs.best.lambda;
            out.result.dropout = cell.kind == ProbeKind::Mlp ? gs.best.dropout : -1.0;
            out.test_pred = gs.test_pred;
            out.y_test = split.y_test;
            out.probe = gs.probe;
        } catch (const std::exception& e) {
            out.failed = true;
            out.error = e.what();
        }
    });
    return outcomes;
}

// --- run-level summaries ------------------------------------------------------------

struct OneWayRow {
    std::string dataset;
    int k = 0;
    std::string advanced_type, baseline_type;
    double advanced_r2 = 0.0, baseline_r2 = 0.0;
    OneWayComparison comparison;
};

// Per (dataset, horizon): best probe reading activations (regular or joint)
// against the best embeddings-only baseline.
inline std::vector<OneWayRow> one_way_table(const std::vector<CellOutcome>& outcomes,
                                            int overlap_level = 95) {
    std::vector<std::pair<std::string, int>> groups;
    for (const auto& o : outcomes) {
        if (o.failed) continue;
        const auto key = std::make_pair(o.result.dataset, o.cell.k);
        if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
    }
    std::sort(groups.begin(), groups.end());

    std::vector<OneWayRow> rows;
    for (const auto& [dataset, k] : groups) {
        const CellOutcome* best_adv = nullptr;
        const CellOutcome* best_base = nullptr;
        for (const auto& o : outcomes) {
            if (o.failed || o.cell.k != k || o.result.dataset != dataset) continue;
            if (o.result.uses_activations()) {
                if (!best_adv || o.result.test_r2 > best_adv->result.test_r2) best_adv = &o;
            } else {
                if (!best_base || o.result.test_r2 > best_base->result.test_r2) best_base = &o;
            }
        }
        if (!best_adv || !best_base) continue;
        OneWayRow row;
        row.dataset = dataset;
        row.k = k;
        row.advanced_type = probe_type_string(best_adv->result);
        row.baseline_type = probe_type_string(best_base->result);
        row.advanced_r2 = best_adv->result.test_r2;
        row.baseline_r2 = best_base->result.test_r2;
        row.comparison =
            compare_one_way(best_adv->test_report, best_base->test_report, overlap_level);
        rows.push_back(row);
    }
    return rows;
}

struct TwoSidedCount {
    int mlp_wins = 0, ties = 0, linear_wins = 0;
};

struct TwoSidedTable {
    std::map<int, TwoSidedCount> per_level;  // confidence level -> counts
    TwoSidedCount absolute;
    int cells = 0;
};

// Linear-vs-MLP outcome counts over all lattice cells where both kinds ran.
inline TwoSidedTable two_sided_table(const std::vector<CellOutcome>& outcomes,
                                     const std::vector<int>& levels = {90, 95, 99}) {
    TwoSidedTable table;
    for (const auto& lin : outcomes) {
        if (lin.failed || lin.cell.kind != ProbeKind::Linear) continue;
        for (const auto& mlp : outcomes) {
            if (mlp.failed || mlp.cell.kind != ProbeKind::Mlp) continue;
            if (mlp.cell.k != lin.cell.k || mlp.cell.layer != lin.cell.layer ||
                mlp.cell.mode != lin.cell.mode || mlp.result.dataset != lin.result.dataset)
                continue;
            const auto cmp = compare_two_sided(lin.test_report, mlp.test_report, levels);
            ++table.cells;
            switch (cmp.absolute) {
                case Verdict::MlpWins: ++table.absolute.mlp_wins; break;
                case Verdict::Tie: ++table.absolute.ties; break;
                case Verdict::LinearWins: ++table.absolute.linear_wins; break;
            }
            for (const auto& [level, verdict] : cmp.per_level) {
                auto& count = table.per_level[level];
                switch (verdict) {
                    case Verdict::MlpWins: ++count.mlp_wins; break;
                    case Verdict::Tie: ++count.ties; break;
                    case Verdict::LinearWins: ++count.linear_wins; break;
                }
            }
        }
    }
    return table;
}

}  // namespace worldprobe
