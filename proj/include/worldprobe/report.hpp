#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "worldprobe/probes.hpp"
#include "worldprobe/stats.hpp"

namespace worldprobe {

// Serialization of probe results and stat reports: the probe-results CSV
// schema (dataset, K, train/test R^2 and std, lr, lambda, dropout, probe type
// string), JSON stat reports, and the permutation-success tally.

inline std::string format_fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

inline std::string format_sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2e", v);
    return buf;
}

inline std::string mode_display_name(const std::string& mode) {
    if (mode == "regular" || mode == "activations") return "Regular";
    if (mode == "embedding" || mode == "embeddings") return "Embedding";
    if (mode == "joint") return "Joint";
    throw std::invalid_argument("unknown mode: " + mode);
}

// "Linear-Joint-L15", "MLP-Regular-L7"; embedding-mode probes read no layer
// stream and carry no layer suffix ("Linear-Embedding").
inline std::string probe_type_string(const ProbeResult& r) {
    std::string s = to_string(r.kind) + "-" + mode_display_name(r.mode);
    if (r.uses_activations() && r.layer >= 0) s += "-L" + std::to_string(r.layer);
    return s;
}

inline void parse_probe_type(const std::string& type, ProbeKind& kind, std::string& mode,
                             int& layer) {
    std::vector<std::string> parts;
    std::stringstream ss(type);
    std::string item;
    while (std::getline(ss, item, '-')) parts.push_back(item);
    if (parts.size() < 2) throw std::invalid_argument("bad probe type string: " + type);
    kind = probe_kind_from_string(parts[0]);
    if (parts[1] == "Regular") mode = "regular";
    else if (parts[1] == "Embedding") mode = "embedding";
    else if (parts[1] == "Joint") mode = "joint";
    else throw std::invalid_argument("bad probe mode in type string: " + type);
    layer = -1;
    if (parts.size() >= 3) {
        if (parts[2].size() < 2 || parts[2][0] != 'L')
            throw std::invalid_argument("bad layer suffix in type string: " + type);
        layer = std::stoi(parts[2].substr(1));
    }
}

inline const char* kProbeCsvHeader =
    "dataset,k,train_r2,train_std,test_r2,test_std,lr,lambda,dropout,probe_type";

inline std::string probe_results_csv(const std::vector<ProbeResult>& results) {
    std::string out = kProbeCsvHeader;
    out += "\n";
    for (const auto& r : results) {
        out += r.dataset + "," + std::to_string(r.horizon) + "," + format_fixed(r.train_r2, 4) +
               "," + format_fixed(r.train_std, 4) + "," + format_fixed(r.test_r2, 4) + "," +
               format_fixed(r.test_std, 4) + "," + format_sci(r.lr) + "," + format_sci(r.lambda) +
               "," + (r.dropout >= 0 ? format_fixed(r.dropout, 2) : std::string()) + "," +
               probe_type_string(r) + "\n";
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

inline std::vector<ProbeResult> parse_probe_results_csv(const std::string& text) {
    std::vector<ProbeResult> out;
    std::stringstream ss(text);
    std::string line;
    bool first = true;
    while (std::getline(ss, line)) {
        if (line.empty() || line == "\r") continue;
        if (first) {
            first = false;
            continue;  // header
        }
        const auto f = detail::split_csv_line(line);
        if (f.size() != 10) throw std::invalid_argument("bad probe-results row: " + line);
        ProbeResult r;
        r.dataset = f[0];
        r.horizon = std::stoi(f[1]);
        r.train_r2 = std::stod(f[2]);
        r.train_std = std::stod(f[3]);
        r.test_r2 = std::stod(f[4]);
        r.test_std = std::stod(f[5]);
        r.lr = std::stod(f[6]);
        r.lambda = std::stod(f[7]);
        r.dropout = f[8].empty() ? -1.0 : std::stod(f[8]);
        parse_probe_type(f[9], r.kind, r.mode, r.layer);
        out.push_back(std::move(r));
    }
    return out;
}

inline nlohmann::ordered_json stat_report_to_json(const StatReport& report) {
    nlohmann::ordered_json j;
    j["r2"] = report.r2;
    j["se"] = report.se;
    nlohmann::ordered_json ci;
    for (const auto& [level, interval] : report.ci)
        ci[std::to_string(level)] = {interval.first, interval.second};
    j["ci"] = ci;
    j["n_reps"] = report.n_reps;
    j["block_length"] = report.block_length;
    j["n"] = report.n;
    if (report.has_p_value()) {
        j["p_value"] = report.p_value;
        j["n_permutations"] = report.n_permutations;
    }
    return j;
}

inline nlohmann::ordered_json probe_result_to_json(const ProbeResult& r) {
    nlohmann::ordered_json j;
    j["dataset"] = r.dataset;
    j["probe_type"] = probe_type_string(r);
    j["kind"] = to_string(r.kind);
    j["mode"] = r.mode;
    j["layer"] = r.layer;
    j["k"] = r.horizon;
    j["train_r2"] = r.train_r2;
    j["train_std"] = r.train_std;
    j["test_r2"] = r.test_r2;
    j["test_std"] = r.test_std;
    j["val_r2"] = r.val_r2;
    j["lr"] = r.lr;
    j["lambda"] = r.lambda;
    if (r.dropout >= 0) j["dropout"] = r.dropout;
    return j;
}

// --- permutation tally ----------------------------------------------------------

struct TallyCell {
    int passed = 0;  // p < 0.01
    int tested = 0;  // probes with R^2 > 0

    std::string to_string() const {
        return std::to_string(passed) + "/" + std::to_string(tested);
    }
};

// Successful permutation tests over tested probes, grouped the way the results
// tables group them: one row per probe group ("L15 Linear", "Linear Embedding"),
// one column per K, plus overall totals.
struct PermutationTally {
    std::map<std::string, std::map<int, TallyCell>> rows;
    std::vector<int> horizons;

    void add(const ProbeResult& r, bool tested, bool passed) {
        if (!tested) return;
        std::string group = r.uses_activations() && r.layer >= 0
                                ? "L" + std::to_string(r.layer) + " " + worldprobe::to_string(r.kind)
                                : worldprobe::to_string(r.kind) + " Embedding";
        auto& cell = rows[group][r.horizon];
        ++cell.tested;
        if (passed) ++cell.passed;
        if (std::find(horizons.begin(), horizons.end(), r.horizon) == horizons.end()) {
            horizons.push_back(r.horizon);
            std::sort(horizons.begin(), horizons.end());
        }
    }

    TallyCell overall() const {
        TallyCell total;
        for (const auto& [group, cells] : rows)
            for (const auto& [k, cell] : cells) {
                total.passed += cell.passed;
                total.tested += cell.tested;
            }
        return total;
    }

    std::string to_csv() const {
        std::string out = "probe_group";
        for (int k : horizons) out += ",k" + std::to_string(k);
        out += ",overall\n";
        for (const auto& [group, cells] : rows) {
            out += group;
            TallyCell row_total;
            for (int k : horizons) {
                const auto it = cells.find(k);
                out += ",";
                if (it != cells.end()) {
                    out += it->second.to_string();
                    row_total.passed += it->second.passed;
                    row_total.tested += it->second.tested;
                }
            }
            out += "," + row_total.to_string() + "\n";
        }
        out += "total";
        TallyCell grand;
        for (int k : horizons) {
            TallyCell col;
            for (const auto& [group, cells] : rows) {
                const auto it = cells.find(k);
                if (it != cells.end()) {
                    col.passed += it->second.passed;
                    col.tested += it->second.tested;
                }
            }
            grand.passed += col.passed;
            grand.tested += col.tested;
            out += "," + col.to_string();
        }
        out += "," + grand.to_string() + "\n";
        return out;
    }
};

}  // namespace worldprobe
