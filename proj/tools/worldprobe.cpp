// worldprobe: synthetic world-model probing toolkit.
//
// Subcommands: synth, ingest-check, probe, permtest, bootstrap, coherence,
// allan, koopman, report. Exit codes: 0 success, 1 partial (some cells
// failed), 2 invalid input.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "worldprobe/analysis.hpp"
#include "worldprobe/dataset.hpp"
#include "worldprobe/koopman.hpp"
#include "worldprobe/permutation.hpp"
#include "worldprobe/pipeline.hpp"
#include "worldprobe/report.hpp"
#include "worldprobe/stats.hpp"
#include "worldprobe/svg.hpp"
#include "worldprobe/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitInvalid = 2;

json load_json_file(const fs::path& path) {
    return json::parse(worldprobe::read_text_file(path));
}

std::optional<std::uint64_t> env_seed() {
    const char* env = std::getenv("WORLDPROBE_SEED");
    if (!env || !*env) return std::nullopt;
    return std::stoull(env);
}

std::string sanitize(std::string s) {
    for (auto& c : s)
        if (c == '/' || c == ' ' || c == '(' || c == ')') c = '_';
    return s;
}

std::string cell_file_stem(const worldprobe::ProbeResult& r) {
    return sanitize(r.dataset) + "_" + sanitize(worldprobe::probe_type_string(r)) + "_k" +
           std::to_string(r.horizon);
}

// --- probe run outputs -------------------------------------------------------

void write_probe_outputs(const fs::path& out_dir, const worldprobe::RunConfig& cfg,
                         const std::vector<worldprobe::CellOutcome>& outcomes) {
    using namespace worldprobe;
    fs::create_directories(out_dir / "preds");
    write_text_file(out_dir / "run.json", run_config_to_json(cfg).dump(2) + "\n");

    std::vector<ProbeResult> results;
    ordered_json results_json = ordered_json::array();
    ordered_json stats_json = ordered_json::array();
    std::map<std::pair<std::string, int>, std::pair<Eigen::Index, Eigen::Index>> pred_shapes;

    for (const auto& o : outcomes) {
        if (o.failed) continue;
        results.push_back(o.result);
        results_json.push_back(probe_result_to_json(o.result));
        ordered_json cell;
        cell["dataset"] = o.result.dataset;
        cell["probe_type"] = probe_type_string(o.result);
        cell["k"] = o.result.horizon;
        cell["train"] = stat_report_to_json(o.train_report);
        cell["test"] = stat_report_to_json(o.test_report);
        stats_json.push_back(cell);

        const auto stem = cell_file_stem(o.result);
        std::vector<float> pred(o.test_pred.size());
        for (Eigen::Index i = 0; i < o.test_pred.rows(); ++i)
            for (Eigen::Index j = 0; j < o.test_pred.cols(); ++j)
                pred[static_cast<std::size_t>(i * o.test_pred.cols() + j)] =
                    static_cast<float>(o.test_pred(i, j));
        write_f32(out_dir / "preds" / ("pred_" + stem + ".f32"), pred);
        const auto target_key = std::make_pair(o.result.dataset, o.result.horizon);
        if (!pred_shapes.count(target_key)) {
            pred_shapes[target_key] = {o.y_test.rows(), o.y_test.cols()};
            std::vector<float> targets(o.y_test.size());
            for (Eigen::Index i = 0; i < o.y_test.rows(); ++i)
                for (Eigen::Index j = 0; j < o.y_test.cols(); ++j)
                    targets[static_cast<std::size_t>(i * o.y_test.cols() + j)] =
                        static_cast<float>(o.y_test(i, j));
            write_f32(out_dir / "preds" /
                          ("targets_" + sanitize(o.result.dataset) + "_k" +
                           std::to_string(o.result.horizon) + ".f32"),
                      targets);
        }
    }

    write_text_file(out_dir / "probe_results.csv", probe_results_csv(results));
    write_text_file(out_dir / "probe_results.json", results_json.dump(2) + "\n");
    write_text_file(out_dir / "stats.json", stats_json.dump(2) + "\n");

    ordered_json meta;
    for (const auto& [key, shape] : pred_shapes)
        meta["targets"][sanitize(key.first)][std::to_string(key.second)] = {
            {"n", shape.first}, {"d", shape.second}};
    write_text_file(out_dir / "preds" / "meta.json", meta.dump(2) + "\n");
}

worldprobe::StatReport stat_report_from_json(const json& j) {
    worldprobe::StatReport r;
    r.r2 = j.at("r2").get<double>();
    r.se = j.at("se").get<double>();
    for (const auto& [level, interval] : j.at("ci").items())
        r.ci[std::stoi(level)] = {interval.at(0).get<double>(), interval.at(1).get<double>()};
    r.n_reps = j.at("n_reps").get<int>();
    r.block_length = j.at("block_length").get<Eigen::Index>();
    r.n = j.at("n").get<Eigen::Index>();
    if (j.contains("p_value")) {
        r.p_value = j.at("p_value").get<double>();
        r.n_permutations = j.at("n_permutations").get<int>();
    }
    return r;
}

// --- subcommands ---------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& out,
              std::optional<int> episodes_flag, std::optional<int> steps_flag) {
    using namespace worldprobe;
    json spec_json;
    try {
        spec_json = load_json_file(spec_path);
    } catch (const std::exception& e) {
        std::cerr << "error: cannot parse spec: " << e.what() << "\n";
        return kExitInvalid;
    }
    try {
        SynthSystemSpec spec = synth_spec_from_json(spec_json);
        if (auto seed = env_seed()) spec.seed = *seed;
        int episodes = spec_json.value("episodes", 20);
        int steps = spec_json.value("steps", 300);
        if (episodes_flag) episodes = *episodes_flag;
        if (steps_flag) steps = *steps_flag;
        const auto ds = generate(spec, episodes, steps, out);
        std::cout << "wrote " << ds.episodes.size() << " episodes x " << steps << " steps to "
                  << out << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
}

int cmd_ingest_check(const std::string& data, int k) {
    using namespace worldprobe;
    try {
        const auto ds = load_dataset(data);
        std::cout << "dataset '" << ds.name << "': " << ds.episodes.size() << " episodes, "
                  << ds.total_steps() << " steps, d=" << ds.embed_dim << ", N=" << ds.patch_count
                  << ", layers=[";
        for (std::size_t i = 0; i < ds.layers.size(); ++i)
            std::cout << (i ? "," : "") << ds.layers[i];
        std::cout << "]\n";
        const auto check = patch_linearity_check(ds, k);
        if (!check.applicable) {
            std::cout << "patch linearity: not applicable (pre-pooled data, N=1)\n";
        } else {
            std::cout << "patch linearity (K=" << k << "): max discrepancy "
                      << check.max_discrepancy << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
}

worldprobe::RunConfig resolve_config(const std::string& config_path,
                                     const std::vector<std::string>& data,
                                     const std::string& out, std::optional<std::uint64_t> seed,
                                     std::optional<unsigned> threads,
                                     const std::vector<int>& k_list) {
    worldprobe::RunConfig cfg;
    if (!config_path.empty()) cfg = worldprobe::run_config_from_json(load_json_file(config_path));
    if (auto env = env_seed()) cfg.seed = *env;
    if (!data.empty()) cfg.dataset_paths = data;
    if (!out.empty()) cfg.out_dir = out;
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (!k_list.empty()) cfg.k_list = k_list;
    if (cfg.dataset_paths.empty())
        throw std::invalid_argument("no dataset given (flag --data or config key 'dataset(s)')");
    return cfg;
}

int cmd_probe(const worldprobe::RunConfig& cfg) {
    using namespace worldprobe;
    std::vector<CellOutcome> outcomes;
    for (std::size_t di = 0; di < cfg.dataset_paths.size(); ++di) {
        const auto ds = load_dataset(cfg.dataset_paths[di]);
        RunConfig per = cfg;
        per.seed = cfg.dataset_paths.size() > 1 ? derive_seed(cfg.seed, "dataset-run", di)
                                                : cfg.seed;
        auto part = run_probe_cells(ds, per);
        outcomes.insert(outcomes.end(), std::make_move_iterator(part.begin()),
                        std::make_move_iterator(part.end()));
    }
    int failed = 0;
    for (const auto& o : outcomes) {
        if (o.failed) {
            ++failed;
            std::cerr << "[cell failed] " << o.result.dataset << " k=" << o.cell.k
                      << " layer=" << o.cell.layer << " " << to_string(o.cell.kind) << "/"
                      << to_string(o.cell.mode) << ": " << o.error << "\n";
        }
    }
    write_probe_outputs(cfg.out_dir, cfg, outcomes);

    const auto oneway = one_way_table(outcomes);
    for (const auto& row : oneway)
        std::cout << row.dataset << " K=" << row.k << " best-activation " << row.advanced_type
                  << " R2=" << format_fixed(row.advanced_r2, 4) << " vs baseline "
                  << row.baseline_type << " R2=" << format_fixed(row.baseline_r2, 4)
                  << " (z=" << format_fixed(row.comparison.z, 2)
                  << ", p=" << format_sci(row.comparison.p_one_sided) << ")\n";
    std::cout << (outcomes.size() - failed) << "/" << outcomes.size() << " cells ok, outputs in "
              << cfg.out_dir << "\n";
    return failed == 0 ? kExitOk : kExitPartial;
}

int cmd_permtest(const std::string& run_dir, std::optional<int> n_perm_flag,
                 std::optional<unsigned> threads_flag) {
    using namespace worldprobe;
    const fs::path run(run_dir);
    if (!fs::exists(run / "run.json") || !fs::exists(run / "probe_results.csv"))
        throw std::invalid_argument("run directory misses probe outputs: " + run_dir);
    RunConfig cfg = run_config_from_json(load_json_file(run / "run.json"));
    if (auto seed = env_seed()) cfg.seed = *seed;
    if (n_perm_flag) cfg.n_perm = *n_perm_flag;
    if (threads_flag) cfg.threads = *threads_flag;
    std::map<std::string, TrajectoryDataset> datasets;  // by dataset name
    for (const auto& path : cfg.dataset_paths) {
        auto ds = load_dataset(path);
        if (datasets.count(ds.name))
            throw std::invalid_argument("duplicate dataset name: " + ds.name);
        datasets.emplace(ds.name, std::move(ds));
    }
    const auto results = parse_probe_results_csv(read_text_file(run / "probe_results.csv"));

    PermutationTally tally;
    ordered_json out_json = ordered_json::array();
    std::vector<double> tested_ps;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const bool tested = r.test_r2 > 0.0;  // only probes beating the mean predictor
        if (!tested) {
            tally.add(r, false, false);
            continue;
        }
        const auto ds_it = datasets.find(r.dataset);
        if (ds_it == datasets.end())
            throw std::invalid_argument("results reference unknown dataset: " + r.dataset);
        const auto mode = r.mode == "regular" ? FeatureMode::Activations
                          : r.mode == "embedding" ? FeatureMode::Embeddings
                                                  : FeatureMode::Joint;
        const auto samples = compute_transitions(ds_it->second, r.horizon, r.layer, mode);
        const auto split = split_to_matrices(samples);
        PermutationRecipe recipe;
        recipe.kind = r.kind;
        recipe.hyper = {r.lr, r.lambda, r.dropout >= 0 ? r.dropout : 0.0};
        recipe.epochs = cfg.train.final_epochs;
        recipe.batch_size = cfg.train.batch_size;
        const auto outcome =
            permutation_test(split.x_train, split.y_train, split.x_test, split.y_test, recipe,
                             r.test_r2, cfg.n_perm, derive_seed(cfg.seed, "permtest", i),
                             cfg.threads);
        tested_ps.push_back(outcome.p);
        tally.add(r, true, outcome.p < 0.01);
        ordered_json j;
        j["dataset"] = r.dataset;
        j["probe_type"] = probe_type_string(r);
        j["k"] = r.horizon;
        j["observed_r2"] = r.test_r2;
        j["p_value"] = outcome.p;
        j["n_permutations"] = outcome.n_permutations;
        out_json.push_back(j);
        std::cout << probe_type_string(r) << " K=" << r.horizon << ": p="
                  << format_sci(outcome.p) << "\n";
    }
    ordered_json doc;
    doc["tests"] = out_json;
    doc["tally_overall"] = tally.overall().to_string();
    if (!tested_ps.empty()) {
        const auto combined = aggregate_overall_p(tested_ps);
        doc["overall_p"] = {{"method", "fisher"},
                            {"p", combined.p},
                            {"statistic", combined.statistic},
                            {"dof", combined.dof},
                            {"bonferroni_bound", combined.bonferroni}};
    }
    write_text_file(run / "permtest.json", doc.dump(2) + "\n");
    write_text_file(run / "permtest_tally.csv", tally.to_csv());
    std::cout << "tally " << tally.overall().to_string() << ", outputs in " << run_dir << "\n";
    return kExitOk;
}

int cmd_bootstrap(const std::string& run_dir, int n_reps, std::uint64_t seed) {
    using namespace worldprobe;
    const fs::path run(run_dir);
    const auto results = parse_probe_results_csv(read_text_file(run / "probe_results.csv"));
    const auto meta = load_json_file(run / "preds" / "meta.json");
    ordered_json out = ordered_json::array();
    for (const auto& r : results) {
        const auto& shape =
            meta.at("targets").at(sanitize(r.dataset)).at(std::to_string(r.horizon));
        const auto n = shape.at("n").get<Eigen::Index>();
        const auto d = shape.at("d").get<Eigen::Index>();
        const auto y_raw =
            read_f32(run / "preds" / ("targets_" + sanitize(r.dataset) + "_k" +
                                      std::to_string(r.horizon) + ".f32"),
                     static_cast<std::size_t>(n * d));
        const auto p_raw = read_f32(run / "preds" / ("pred_" + cell_file_stem(r) + ".f32"),
                                    static_cast<std::size_t>(n * d));
        Eigen::MatrixXd y(n, d), p(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j) {
                y(i, j) = y_raw[static_cast<std::size_t>(i * d + j)];
                p(i, j) = p_raw[static_cast<std::size_t>(i * d + j)];
            }
        const auto report = block_bootstrap(y, p, n_reps, {90, 95, 99},
                                            derive_seed(seed, "reboot", out.size()));
        ordered_json j;
        j["dataset"] = r.dataset;
        j["probe_type"] = probe_type_string(r);
        j["k"] = r.horizon;
        j["report"] = stat_report_to_json(report);
        out.push_back(j);
    }
    write_text_file(run / "bootstrap.json", out.dump(2) + "\n");
    std::cout << "recomputed " << out.size() << " bootstrap reports (n_reps=" << n_reps
              << ") in " << run_dir << "\n";
    return kExitOk;
}

int cmd_coherence(const std::string& data, const std::vector<int>& k_list,
                  const std::string& out_dir) {
    using namespace worldprobe;
    const auto ds = load_dataset(data);
    const auto curve = temporal_coherence(ds, k_list.empty() ? std::vector<int>{1, 3, 10, 30}
                                                             : k_list);
    fs::create_directories(out_dir);
    std::string csv = "k,mean_cosine,std,pairs,skipped\n";
    SvgSeries series;
    series.label = ds.name;
    for (const auto& pt : curve.points) {
        csv += std::to_string(pt.horizon) + "," + format_fixed(pt.mean) + "," +
               format_fixed(pt.stddev) + "," + std::to_string(pt.pairs) + "," +
               std::to_string(pt.skipped) + "\n";
        series.x.push_back(pt.horizon);
        series.y.push_back(pt.mean);
    }
    write_text_file(fs::path(out_dir) / "coherence.csv", csv);
    write_text_file(fs::path(out_dir) / "coherence.svg",
                    svg_line_plot({series}, "Temporal coherence of embeddings", "K",
                                  "mean cosine similarity"));
    std::cout << "coherence outputs in " << out_dir << "\n";
    return kExitOk;
}

int cmd_allan(const std::string& data, const std::vector<int>& k_list,
              const std::string& out_dir) {
    using namespace worldprobe;
    const auto ds = load_dataset(data);
    const auto ks = k_list.empty() ? std::vector<int>{1, 3, 10, 30} : k_list;
    fs::create_directories(out_dir);

    std::string curves_csv = "k,tau,allan_deviation\n";
    std::vector<SvgSeries> plot;
    const std::vector<std::string> palette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        const int k = ks[ki];
        // pool transitions across episodes into one matrix per K for the curve
        std::vector<Eigen::MatrixXd> deltas;
        Eigen::Index min_rows = std::numeric_limits<Eigen::Index>::max();
        for (const auto& ep : ds.episodes) {
            if (ep.steps <= k) continue;
            Eigen::MatrixXd pooled(ep.steps, ds.embed_dim);
            for (Eigen::Index t = 0; t < ep.steps; ++t)
                pooled.row(t) = ep.pooled(t).transpose();
            const Eigen::Index rows = ep.steps - k;
            deltas.push_back(pooled.bottomRows(rows) - pooled.topRows(rows));
            min_rows = std::min(min_rows, rows);
        }
        if (deltas.empty()) continue;
        const auto taus = default_allan_taus(min_rows);
        // aggregate the per-episode curves by RMS
        std::vector<double> agg(taus.size(), 0.0);
        for (const auto& delta : deltas) {
            const auto curve = allan_variance(delta, taus);
            for (std::size_t i = 0; i < taus.size(); ++i)
                agg[i] += curve.deviation[i] * curve.deviation[i];
        }
        SvgSeries series;
        series.label = "K=" + std::to_string(k);
        series.color = palette[ki % palette.size()];
        for (std::size_t i = 0; i < taus.size(); ++i) {
            const double dev = std::sqrt(agg[i] / static_cast<double>(deltas.size()));
            curves_csv += std::to_string(k) + "," + std::to_string(taus[i]) + "," +
                          format_fixed(dev, 8) + "\n";
            series.x.push_back(static_cast<double>(taus[i]));
            series.y.push_back(dev);
        }
        plot.push_back(series);
    }
    write_text_file(fs::path(out_dir) / "allan.csv", curves_csv);
    write_text_file(fs::path(out_dir) / "allan.svg",
                    svg_line_plot(plot, "Allan deviation of transition components", "tau",
                                  "Allan deviation", true, true));

    const auto profile = transition_noise_profile(ds, ks);
    std::string noise_csv = "k,rms_total,rms_noise,signal_fraction\n";
    for (const auto& entry : profile)
        noise_csv += std::to_string(entry.horizon) + "," + format_fixed(entry.rms_total, 8) + "," +
                     format_fixed(entry.rms_noise, 8) + "," +
                     format_fixed(entry.signal_fraction) + "\n";
    write_text_file(fs::path(out_dir) / "noise_profile.csv", noise_csv);
    std::cout << "allan outputs in " << out_dir << "\n";
    return kExitOk;
}

int cmd_koopman(const std::string& system, double alpha, double rho, const std::string& basis,
                const std::vector<int>& sizes, const std::vector<long long>& m_list, int k,
                int g_freq, const std::string& g_kind, std::uint64_t seed,
                const std::string& out_dir, const std::string& data, int layer) {
    using namespace worldprobe;
    if (!data.empty()) {
        // activation features as the observable basis: no analytic truth terms,
        // only the empirical evolution residual
        const auto ds = load_dataset(data);
        fs::create_directories(out_dir);
        std::string csv = "layer,k,samples,residual_rms,r2,rank_deficient\n";
        const auto result = activation_edmd(ds, layer, k);
        csv += std::to_string(layer) + "," + std::to_string(k) + "," +
               std::to_string(ds.total_steps()) + "," + format_fixed(result.residual_rms, 8) +
               "," + format_fixed(result.r2) + "," + (result.rank_deficient ? "yes" : "no") +
               "\n";
        write_text_file(fs::path(out_dir) / "activation_edmd.csv", csv);
        std::cout << "activation features, layer " << layer << ", K=" << k << ": residual rms "
                  << format_fixed(result.residual_rms, 6) << ", fit R2 "
                  << format_fixed(result.r2, 4)
                  << (result.rank_deficient ? " (rank-deficient Gram)" : "") << "\n";
        return kExitOk;
    }
    AnalyticSystem sys;
    if (system == "torus")
        sys = TorusRotation{alpha};
    else if (system == "contraction")
        sys = LinearContraction1D{rho};
    else
        throw std::invalid_argument("unknown system: " + system);

    BasisKind kind;
    if (basis == "fourier") kind = BasisKind::FourierTorus;
    else if (basis == "cosine") kind = BasisKind::FourierCosine;
    else if (basis == "monomial") kind = BasisKind::Monomial;
    else throw std::invalid_argument("unknown basis: " + basis);

    std::function<double(double)> g;
    if (std::holds_alternative<TorusRotation>(sys)) {
        if (g_kind == "cos")
            g = [g_freq](double x) { return std::cos(2.0 * M_PI * g_freq * x); };
        else if (g_kind == "sin")
            g = [g_freq](double x) { return std::sin(2.0 * M_PI * g_freq * x); };
        else
            throw std::invalid_argument("g kind must be cos or sin for the torus");
    } else {
        g = [g_freq](double x) { return std::pow(x, g_freq); };
    }

    ErrorDecompositionConfig cfg;
    cfg.horizon = k;
    cfg.seed = seed;
    std::vector<Eigen::Index> ms(m_list.begin(), m_list.end());
    const auto rows = error_decomposition_sweep(sys, kind, sizes, ms, g, cfg);

    fs::create_directories(out_dir);
    std::string csv = "n,m,k,term1,term2,term3,total\n";
    std::map<int, SvgSeries> term1_series, total_series;
    for (const auto& row : rows) {
        csv += std::to_string(row.basis_size) + "," + std::to_string(row.samples) + "," +
               std::to_string(row.horizon) + "," + format_sci(row.term1) + "," +
               format_sci(row.term2) + "," + format_sci(row.term3) + "," +
               format_sci(row.total) + "\n";
        auto& t1 = term1_series[row.basis_size];
        t1.label = "term1 N=" + std::to_string(row.basis_size);
        t1.x.push_back(static_cast<double>(row.samples));
        t1.y.push_back(row.term1);
        auto& tt = total_series[row.basis_size];
        tt.label = "total N=" + std::to_string(row.basis_size);
        tt.color = "#d62728";
        tt.x.push_back(static_cast<double>(row.samples));
        tt.y.push_back(row.total);
    }
    write_text_file(fs::path(out_dir) / "koopman_sweep.csv", csv);
    std::vector<SvgSeries> plot;
    for (auto& [n, s] : term1_series) plot.push_back(s);
    for (auto& [n, s] : total_series) plot.push_back(s);
    write_text_file(fs::path(out_dir) / "koopman_sweep.svg",
                    svg_line_plot(plot, "EDMD error decomposition", "M (samples)",
                                  "empirical L2 error", true, true));
    std::cout << rows.size() << " sweep cells, outputs in " << out_dir << "\n";
    return kExitOk;
}

int cmd_report(const std::string& run_dir) {
    using namespace worldprobe;
    const fs::path run(run_dir);
    ordered_json report;
    std::vector<std::string> missing;

    std::vector<ProbeResult> results;
    // keyed by (dataset, probe type, K)
    std::map<std::tuple<std::string, std::string, int>, StatReport> test_reports;
    if (fs::exists(run / "probe_results.csv")) {
        results = parse_probe_results_csv(read_text_file(run / "probe_results.csv"));
        ordered_json arr = ordered_json::array();
        for (const auto& r : results) arr.push_back(probe_result_to_json(r));
        report["probes"] = arr;
    } else {
        missing.push_back("probes");
    }
    if (fs::exists(run / "stats.json")) {
        for (const auto& cell : load_json_file(run / "stats.json"))
            test_reports[{cell.value("dataset", ""), cell.at("probe_type").get<std::string>(),
                          cell.at("k").get<int>()}] = stat_report_from_json(cell.at("test"));
    }

    // one-way comparison per K: best activation-reading probe vs best baseline
    if (!results.empty() && !test_reports.empty()) {
        ordered_json oneway = ordered_json::array();
        std::string csv = "dataset,k,advanced_type,advanced_r2,baseline_type,baseline_r2,z,"
                          "p_one_sided,significant,ci_overlap\n";
        std::vector<std::pair<std::string, int>> groups;
        for (const auto& r : results) {
            const auto key = std::make_pair(r.dataset, r.horizon);
            if (std::find(groups.begin(), groups.end(), key) == groups.end())
                groups.push_back(key);
        }
        std::sort(groups.begin(), groups.end());
        for (const auto& [dataset, k] : groups) {
            const ProbeResult* adv = nullptr;
            const ProbeResult* base = nullptr;
            for (const auto& r : results) {
                if (r.horizon != k || r.dataset != dataset) continue;
                if (r.uses_activations()) {
                    if (!adv || r.test_r2 > adv->test_r2) adv = &r;
                } else if (!base || r.test_r2 > base->test_r2) {
                    base = &r;
                }
            }
            if (!adv || !base) continue;
            const auto ita = test_reports.find({dataset, probe_type_string(*adv), k});
            const auto itb = test_reports.find({dataset, probe_type_string(*base), k});
            if (ita == test_reports.end() || itb == test_reports.end()) continue;
            const auto cmp = compare_one_way(ita->second, itb->second);
            ordered_json j;
            j["dataset"] = dataset;
            j["k"] = k;
            j["advanced"] = probe_type_string(*adv);
            j["baseline"] = probe_type_string(*base);
            j["advanced_r2"] = adv->test_r2;
            j["baseline_r2"] = base->test_r2;
            j["z"] = cmp.z;
            j["p_one_sided"] = cmp.p_one_sided;
            j["significant"] = cmp.significant;
            j["ci_overlap"] = cmp.ci_overlap;
            oneway.push_back(j);
            csv += dataset + "," + std::to_string(k) + "," + probe_type_string(*adv) + "," +
                   format_fixed(adv->test_r2, 4) + "," + probe_type_string(*base) + "," +
                   format_fixed(base->test_r2, 4) + "," + format_fixed(cmp.z, 3) + "," +
                   format_sci(cmp.p_one_sided) + "," + (cmp.significant ? "yes" : "no") + "," +
                   (cmp.ci_overlap ? "yes" : "no") + "\n";
        }
        report["one_way"] = oneway;
        write_text_file(run / "oneway.csv", csv);
    } else if (results.empty() || test_reports.empty()) {
        missing.push_back("one_way");
    }

    // MLP vs linear per level
    if (!results.empty() && !test_reports.empty()) {
        std::map<int, std::map<std::string, int>> counts;  // level -> verdict -> n
        std::map<std::string, int> absolute;
        int cells = 0;
        for (const auto& lin : results) {
            if (lin.kind != ProbeKind::Linear) continue;
            for (const auto& mlp : results) {
                if (mlp.kind != ProbeKind::Mlp || mlp.horizon != lin.horizon ||
                    mlp.layer != lin.layer || mlp.mode != lin.mode ||
                    mlp.dataset != lin.dataset)
                    continue;
                const auto itl =
                    test_reports.find({lin.dataset, probe_type_string(lin), lin.horizon});
                const auto itm =
                    test_reports.find({mlp.dataset, probe_type_string(mlp), mlp.horizon});
                if (itl == test_reports.end() || itm == test_reports.end()) continue;
                const auto cmp = compare_two_sided(itl->second, itm->second);
                ++cells;
                ++absolute[to_string(cmp.absolute)];
                for (const auto& [level, verdict] : cmp.per_level)
                    ++counts[level][to_string(verdict)];
            }
        }
        if (cells > 0) {
            ordered_json j;
            j["cells"] = cells;
            j["absolute"] = absolute;
            for (const auto& [level, vc] : counts) j["ci_" + std::to_string(level)] = vc;
            report["mlp_vs_linear"] = j;
            std::string csv = "method,mlp_wins,tie,linear_wins\n";
            csv += "absolute," + std::to_string(absolute["mlp_wins"]) + "," +
                   std::to_string(absolute["tie"]) + "," + std::to_string(absolute["linear_wins"]) +
                   "\n";
            for (const auto& entry : counts) {
                const auto& verdicts = entry.second;
                auto get = [&verdicts](const char* k) {
                    const auto it = verdicts.find(k);
                    return it == verdicts.end() ? 0 : it->second;
                };
                csv += std::to_string(entry.first) + "% two-sided ci," +
                       std::to_string(get("mlp_wins")) + "," + std::to_string(get("tie")) + "," +
                       std::to_string(get("linear_wins")) + "\n";
            }
            write_text_file(run / "mlp_vs_linear.csv", csv);
        }
    }

    // layer x K grid, one per dataset
    if (!results.empty()) {
        std::vector<std::string> dataset_names;
        for (const auto& r : results)
            if (std::find(dataset_names.begin(), dataset_names.end(), r.dataset) ==
                dataset_names.end())
                dataset_names.push_back(r.dataset);
        std::sort(dataset_names.begin(), dataset_names.end());
        ordered_json grids = ordered_json::array();
        for (const auto& dataset : dataset_names) {
            std::vector<ProbeResult> subset;
            for (const auto& r : results)
                if (r.dataset == dataset) subset.push_back(r);
            try {
                const auto grid = layer_k_grid(subset);
                std::string csv = "layer";
                for (int k : grid.horizons) csv += ",k" + std::to_string(k);
                csv += "\n";
                std::vector<double> rows_c, cols_c;
                std::vector<std::vector<double>> values;
                for (std::size_t li = 0; li < grid.layers.size(); ++li) {
                    csv += std::to_string(grid.layers[li]);
                    std::vector<double> row;
                    for (std::size_t ki = 0; ki < grid.horizons.size(); ++ki) {
                        csv += "," +
                               format_fixed(grid.best_test_r2(static_cast<Eigen::Index>(li),
                                                              static_cast<Eigen::Index>(ki)),
                                            4);
                        row.push_back(grid.best_test_r2(static_cast<Eigen::Index>(li),
                                                        static_cast<Eigen::Index>(ki)));
                    }
                    csv += "\n";
                    values.push_back(row);
                    rows_c.push_back(grid.layers[li]);
                }
                for (int k : grid.horizons) cols_c.push_back(k);
                const std::string stem = dataset_names.size() > 1
                                             ? "layer_k_grid_" + sanitize(dataset)
                                             : "layer_k_grid";
                write_text_file(run / (stem + ".csv"), csv);
                if (grid.layers.size() >= 2 && grid.horizons.size() >= 2)
                    write_text_file(run / (stem + ".svg"),
                                    svg_heatmap(rows_c, cols_c, values,
                                                "Best test R2 by layer and K (" + dataset + ")",
                                                "K", "layer"));
                ordered_json grid_json;
                grid_json["dataset"] = dataset;
                grid_json["layers"] = grid.layers;
                grid_json["horizons"] = grid.horizons;
                ordered_json vals = ordered_json::array();
                for (const auto& row : values) vals.push_back(row);
                grid_json["best_test_r2"] = vals;
                grids.push_back(grid_json);
            } catch (const std::exception&) {
                // dataset with no activation-reading rows: nothing to grid
            }
        }
        if (grids.empty())
            missing.push_back("layer_k_grid");
        else
            report["layer_k_grid"] = grids;
    }

    for (const char* section : {"permtest", "coherence", "allan"}) {
        const fs::path file = run / (std::string(section) +
                                     (std::string(section) == "permtest" ? ".json" : ".csv"));
        if (fs::exists(file)) {
            if (std::string(section) == "permtest")
                report["permtest"] = load_json_file(file);
            else
                report[section] = read_text_file(file);
        } else {
            missing.push_back(section);
        }
    }
    if (fs::exists(run / "noise_profile.csv"))
        report["noise_profile"] = read_text_file(run / "noise_profile.csv");

    report["complete"] = missing.empty();
    if (!missing.empty()) report["missing_sections"] = missing;
    write_text_file(run / "report.json", report.dump(2) + "\n");
    std::cout << "report.json written";
    if (!missing.empty()) {
        std::cout << " (incomplete; missing:";
        for (const auto& m : missing) std::cout << " " << m;
        std::cout << ")";
    }
    std::cout << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"world-model probing toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_spec, synth_out;
    std::optional<int> synth_episodes, synth_steps;
    synth->add_option("--spec", synth_spec, "system spec JSON")->required();
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--episodes", synth_episodes, "episode count");
    synth->add_option("--steps", synth_steps, "steps per episode");

    // ingest-check
    auto* ingest = app.add_subcommand("ingest-check", "validate a dataset directory");
    std::string ingest_data;
    int ingest_k = 1;
    ingest->add_option("--data", ingest_data, "dataset directory")->required();
    ingest->add_option("--k", ingest_k, "horizon for the linearity check");

    // probe
    auto* probe = app.add_subcommand("probe", "train and evaluate the probe lattice");
    std::string probe_config, probe_out;
    std::vector<std::string> probe_data;
    std::optional<std::uint64_t> probe_seed;
    std::optional<unsigned> probe_threads;
    std::vector<int> probe_ks;
    probe->add_option("--config", probe_config, "run config JSON");
    probe->add_option("--data", probe_data, "dataset directories (override config)");
    probe->add_option("--out", probe_out, "output directory (overrides config)");
    probe->add_option("--seed", probe_seed, "master seed (overrides config)");
    probe->add_option("--threads", probe_threads, "worker thread cap");
    probe->add_option("--k", probe_ks, "horizons (overrides config)");

    // permtest
    auto* permtest = app.add_subcommand("permtest", "permutation tests over a probe run");
    std::string perm_run;
    std::optional<int> perm_n;
    std::optional<unsigned> perm_threads;
    permtest->add_option("--run", perm_run, "probe run directory")->required();
    permtest->add_option("--n-perm", perm_n, "number of permutations");
    permtest->add_option("--threads", perm_threads, "worker thread cap");

    // bootstrap
    auto* bootstrap = app.add_subcommand("bootstrap", "recompute bootstrap reports from a run");
    std::string boot_run;
    int boot_reps = 400;
    std::uint64_t boot_seed = 0;
    bootstrap->add_option("--run", boot_run, "probe run directory")->required();
    bootstrap->add_option("--reps", boot_reps, "bootstrap replicates");
    bootstrap->add_option("--seed", boot_seed, "seed");

    // coherence
    auto* coherence = app.add_subcommand("coherence", "temporal coherence curves");
    std::string coh_data, coh_out = ".";
    std::vector<int> coh_ks;
    coherence->add_option("--data", coh_data, "dataset directory")->required();
    coherence->add_option("--k", coh_ks, "horizons");
    coherence->add_option("--out", coh_out, "output directory");

    // allan
    auto* allan = app.add_subcommand("allan", "Allan deviation and noise profile");
    std::string allan_data, allan_out = ".";
    std::vector<int> allan_ks;
    allan->add_option("--data", allan_data, "dataset directory")->required();
    allan->add_option("--k", allan_ks, "horizons");
    allan->add_option("--out", allan_out, "output directory");

    // koopman
    auto* koopman = app.add_subcommand("koopman", "EDMD convergence sweeps");
    std::string koop_system = "torus", koop_basis = "fourier", koop_g_kind = "cos";
    std::string koop_out = ".";
    double koop_alpha = 0.41421356237309515, koop_rho = 0.9;
    std::vector<int> koop_sizes = {1};
    std::vector<long long> koop_ms = {100, 1000, 10000, 100000};
    int koop_k = 1, koop_g_freq = 1;
    std::uint64_t koop_seed = 0;
    koopman->add_option("--system", koop_system, "torus | contraction");
    koopman->add_option("--alpha", koop_alpha, "torus rotation step");
    koopman->add_option("--rho", koop_rho, "contraction factor");
    koopman->add_option("--basis", koop_basis, "fourier | cosine | monomial");
    koopman->add_option("--sizes", koop_sizes, "basis size parameters (m or degree)");
    koopman->add_option("--samples", koop_ms, "M sweep");
    koopman->add_option("--horizon", koop_k, "K");
    koopman->add_option("--g-freq", koop_g_freq, "observable frequency / degree");
    koopman->add_option("--g-kind", koop_g_kind, "cos | sin (torus)");
    koopman->add_option("--seed", koop_seed, "seed");
    koopman->add_option("--out", koop_out, "output directory");
    std::string koop_data;
    int koop_layer = 15;
    koopman->add_option("--data", koop_data,
                        "dataset directory: fit the activation-feature evolution instead");
    koopman->add_option("--layer", koop_layer, "activation layer for --data mode");

    // report
    auto* report = app.add_subcommand("report", "consolidate run outputs");
    std::string report_run;
    report->add_option("--run", report_run, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_spec, synth_out, synth_episodes, synth_steps);
        if (ingest->parsed()) return cmd_ingest_check(ingest_data, ingest_k);
        if (probe->parsed()) {
            const auto cfg = resolve_config(probe_config, probe_data, probe_out, probe_seed,
                                            probe_threads, probe_ks);
            return cmd_probe(cfg);
        }
        if (permtest->parsed()) return cmd_permtest(perm_run, perm_n, perm_threads);
        if (bootstrap->parsed()) return cmd_bootstrap(boot_run, boot_reps, boot_seed);
        if (coherence->parsed()) return cmd_coherence(coh_data, coh_ks, coh_out);
        if (allan->parsed()) return cmd_allan(allan_data, allan_ks, allan_out);
        if (koopman->parsed())
            return cmd_koopman(koop_system, koop_alpha, koop_rho, koop_basis, koop_sizes, koop_ms,
                               koop_k, koop_g_freq, koop_g_kind, koop_seed, koop_out, koop_data,
                               koop_layer);
        if (report->parsed()) return cmd_report(report_run);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    return kExitOk;
}
