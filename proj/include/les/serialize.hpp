#pragma once

// Persistence: versioned JSON documents for fitted statistics, the feature
// table, CDAN parameters and cluster reports, plus CSV exports (LES
// vectors, outlier matrix, training losses) and the per-frame injection
// trace in JSON-lines form. All writes go through a temp-file-and-rename so
// failed runs never leave partial output behind.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "les/au.hpp"
#include "les/cdan.hpp"
#include "les/cluster.hpp"
#include "les/csv.hpp"
#include "les/dataset_stats.hpp"
#include "les/error.hpp"
#include "les/injector.hpp"
#include "les/stats.hpp"

namespace les {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Atomic file output

inline void atomic_write_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(ErrorKind::IoFailure, "short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorKind::IoFailure, "cannot rename temp file onto '" + path + "'");
    }
}

// ---------------------------------------------------------------------------
// Shared JSON helpers

namespace detail {

inline Json au_order_json() {
    Json arr = Json::array();
    for (int i = 0; i < kNumAu; ++i) arr.push_back(au_short_name(i));
    return arr;
}

template <class Vec>
inline Json vec_to_json(const Vec& v) {
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline Eigen::VectorXd json_to_vec(const Json& arr, Eigen::Index expect,
                                   const std::string& what) {
    if (!arr.is_array() || (expect >= 0 && static_cast<Eigen::Index>(arr.size()) != expect))
        throw Error(ErrorKind::SchemaMismatch, what + " must be an array of " +
                                                   std::to_string(expect) + " numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number())
            throw Error(ErrorKind::SchemaMismatch, what + " holds a non-numeric entry");
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    }
    return v;
}

inline Json parse_json_document(const std::string& text, const std::string& what) {
    Json doc = Json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw Error(ErrorKind::SchemaMismatch, what + ": not a JSON object");
    return doc;
}

inline void check_header(const Json& doc, const std::string& kind, const std::string& what) {
    if (!doc.contains("kind") || !doc["kind"].is_string() || doc["kind"] != kind)
        throw Error(ErrorKind::SchemaMismatch, what + ": missing or wrong 'kind' (want '" + kind + "')");
    if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer() ||
        doc["schema_version"].get<int>() != kSchemaVersion)
        throw Error(ErrorKind::SchemaMismatch, what + ": unsupported schema_version");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Dataset statistics

inline Json stats_to_json(const DatasetStats& stats) {
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "les_dataset_stats";
    doc["au_order"] = detail::au_order_json();
    doc["opt2_mode"] = to_string(stats.opt2_mode);
    doc["mu_d"] = detail::vec_to_json(stats.mu_d);
    doc["sigma_d"] = detail::vec_to_json(stats.sigma_d);
    Json mu_emo = Json::object(), sigma_emo = Json::object();
    for (const auto& [e, v] : stats.mu_emo) mu_emo[emotion_name(e)] = detail::vec_to_json(v);
    for (const auto& [e, v] : stats.sigma_emo) sigma_emo[emotion_name(e)] = detail::vec_to_json(v);
    doc["mu_emo"] = mu_emo;
    doc["sigma_emo"] = sigma_emo;
    Json mean_od = Json::object(), frame_count = Json::object();
    for (const auto& [key, v] : stats.mean_od)
        mean_od[emotion_name(key.first)][std::to_string(key.second)] = v;
    for (const auto& [key, v] : stats.frame_count)
        frame_count[emotion_name(key.first)][std::to_string(key.second)] = v;
    doc["mean_od"] = mean_od;
    doc["frame_count"] = frame_count;
    doc["degenerate_columns"] = stats.degenerate_columns;
    return doc;
}

inline DatasetStats stats_from_json(const Json& doc) {
    detail::check_header(doc, "les_dataset_stats", "stats file");
    DatasetStats stats;
    try {
        stats.opt2_mode = opt2_mode_from_string(doc.at("opt2_mode").get<std::string>());
        stats.mu_d = detail::json_to_vec(doc.at("mu_d"), kNumAu, "mu_d");
        stats.sigma_d = detail::json_to_vec(doc.at("sigma_d"), kNumAu, "sigma_d");
        stats.has_global = true;
        for (const auto& [name, arr] : doc.at("mu_emo").items())
            stats.mu_emo[emotion_from_name(name)] = detail::json_to_vec(arr, kNumAu, "mu_emo");
        for (const auto& [name, arr] : doc.at("sigma_emo").items())
            stats.sigma_emo[emotion_from_name(name)] = detail::json_to_vec(arr, kNumAu, "sigma_emo");
        for (const auto& [name, levels] : doc.at("mean_od").items())
            for (const auto& [level, v] : levels.items())
                stats.mean_od[{emotion_from_name(name), std::stoi(level)}] = v.get<double>();
        for (const auto& [name, levels] : doc.at("frame_count").items())
            for (const auto& [level, v] : levels.items())
                stats.frame_count[{emotion_from_name(name), std::stoi(level)}] =
                    v.get<std::int64_t>();
        if (doc.contains("degenerate_columns"))
            stats.degenerate_columns = doc.at("degenerate_columns").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, std::string("stats file: ") + e.what());
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Feature table

inline Json table_to_json(const FeatureTable& table) {
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "les_feature_table";
    doc["au_order"] = detail::au_order_json();
    Json uf = Json::object();
    for (const auto& [key, vec] : table.uf)
        uf[emotion_name(key.first)][std::to_string(key.second)] = detail::vec_to_json(vec);
    doc["uf"] = uf;
    return doc;
}

inline FeatureTable table_from_json(const Json& doc) {
    detail::check_header(doc, "les_feature_table", "feature table file");
    FeatureTable table;
    try {
        for (const auto& [name, levels] : doc.at("uf").items())
            for (const auto& [level, arr] : levels.items())
                table.uf[{emotion_from_name(name), std::stoi(level)}] =
                    detail::json_to_vec(arr, kNumAu, "uf");
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, std::string("feature table file: ") + e.what());
    }
    return table;
}

// ---------------------------------------------------------------------------
// CDAN parameters

namespace detail {

inline Json tensor_to_json(const Eigen::MatrixXd& m) {
    Json t;
    t["shape"] = Json::array({m.rows(), m.cols()});
    Json data = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    t["data"] = data;
    return t;
}

inline Json tensor_to_json(const Eigen::VectorXd& v) {
    Json t;
    t["shape"] = Json::array({v.size()});
    t["data"] = vec_to_json(v);
    return t;
}

inline Eigen::MatrixXd json_to_matrix(const Json& t, const std::string& what) {
    if (!t.is_object() || !t.contains("shape") || !t.contains("data"))
        throw Error(ErrorKind::SchemaMismatch, what + ": tensor needs 'shape' and 'data'");
    const Json& shape = t["shape"];
    if (!shape.is_array() || shape.size() != 2)
        throw Error(ErrorKind::ShapeMismatch, what + ": expected a rank-2 shape");
    auto rows = shape[0].get<Eigen::Index>();
    auto cols = shape[1].get<Eigen::Index>();
    const Json& data = t["data"];
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw Error(ErrorKind::ShapeMismatch, what + ": data length does not match shape");
    Eigen::MatrixXd m(rows, cols);
    size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!data[i].is_number())
                throw Error(ErrorKind::SchemaMismatch, what + ": non-numeric tensor entry");
            m(r, c) = data[i++].get<double>();
        }
    return m;
}

inline Eigen::VectorXd json_to_vector(const Json& t, const std::string& what) {
    if (!t.is_object() || !t.contains("shape") || !t.contains("data"))
        throw Error(ErrorKind::SchemaMismatch, what + ": tensor needs 'shape' and 'data'");
    const Json& shape = t["shape"];
    if (!shape.is_array() || shape.size() != 1)
        throw Error(ErrorKind::ShapeMismatch, what + ": expected a rank-1 shape");
    auto n = shape[0].get<Eigen::Index>();
    const Json& data = t["data"];
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != n)
        throw Error(ErrorKind::ShapeMismatch, what + ": data length does not match shape");
    return json_to_vec(data, n, what);
}

inline Json level_to_json(const CdanLevelParams& p) {
    Json level;
    level["seq_len"] = p.seq_len;
    level["combine_w"] = tensor_to_json(p.combine_w);
    level["combine_b"] = tensor_to_json(p.combine_b);
    level["wq"] = tensor_to_json(p.wq);
    level["wk"] = tensor_to_json(p.wk);
    level["wv"] = tensor_to_json(p.wv);
    level["fc_w"] = tensor_to_json(p.fc_w);
    level["fc_b"] = tensor_to_json(p.fc_b);
    level["mlp_w1"] = tensor_to_json(p.mlp_w1);
    level["mlp_b1"] = tensor_to_json(p.mlp_b1);
    level["mlp_w2"] = tensor_to_json(p.mlp_w2);
    level["mlp_b2"] = tensor_to_json(p.mlp_b2);
    return level;
}

inline CdanLevelParams level_from_json(const Json& level, const std::string& which) {
    if (!level.is_object())
        throw Error(ErrorKind::SchemaMismatch, which + ": not an object");
    auto need = [&](const char* key) -> const Json& {
        if (!level.contains(key))
            throw Error(ErrorKind::SchemaMismatch, which + ": missing tensor '" + key + "'");
        return level[key];
    };
    CdanLevelParams p;
    try {
        if (!level.contains("seq_len") || !level["seq_len"].is_number_integer())
            throw Error(ErrorKind::SchemaMismatch, which + ": missing seq_len");
        p.seq_len = level["seq_len"].get<int>();
        p.combine_w = json_to_matrix(need("combine_w"), which + ".combine_w");
        p.combine_b = json_to_vector(need("combine_b"), which + ".combine_b");
        p.wq = json_to_matrix(need("wq"), which + ".wq");
        p.wk = json_to_matrix(need("wk"), which + ".wk");
        p.wv = json_to_matrix(need("wv"), which + ".wv");
        p.fc_w = json_to_matrix(need("fc_w"), which + ".fc_w");
        p.fc_b = json_to_vector(need("fc_b"), which + ".fc_b");
        p.mlp_w1 = json_to_matrix(need("mlp_w1"), which + ".mlp_w1");
        p.mlp_b1 = json_to_vector(need("mlp_b1"), which + ".mlp_b1");
        p.mlp_w2 = json_to_matrix(need("mlp_w2"), which + ".mlp_w2");
        p.mlp_b2 = json_to_vector(need("mlp_b2"), which + ".mlp_b2");
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, which + ": " + e.what());
    }
    return p;
}

} // namespace detail

inline std::string save_params(const CdanParams& params) {
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "les_cdan_params";
    doc["seed"] = params.seed;
    doc["level1"] = detail::level_to_json(params.level1);
    doc["level2"] = detail::level_to_json(params.level2);
    return doc.dump(2) + "\n";
}

inline CdanParams load_params(const std::string& bytes) {
    Json doc = detail::parse_json_document(bytes, "params file");
    detail::check_header(doc, "les_cdan_params", "params file");
    CdanParams params;
    try {
        if (!doc.contains("seed") || !doc["seed"].is_number_integer())
            throw Error(ErrorKind::SchemaMismatch, "params file: missing seed");
        params.seed = doc["seed"].get<std::uint64_t>();
        if (!doc.contains("level1") || !doc.contains("level2"))
            throw Error(ErrorKind::SchemaMismatch, "params file: missing level1/level2");
        params.level1 = detail::level_from_json(doc["level1"], "level1");
        params.level2 = detail::level_from_json(doc["level2"], "level2");
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, std::string("params file: ") + e.what());
    }
    validate_shapes(params);  // throws ShapeMismatch on wrong dimensions
    return params;
}

// ---------------------------------------------------------------------------
// LES vector CSV (external visualization feed)

inline std::string write_les_csv(const std::vector<LesVector>& vectors) {
    std::string out;
    for (int i = 0; i < kLesDim; ++i) {
        if (i) out += ',';
        out += "e" + std::to_string(i + 1);
    }
    out += '\n';
    for (const LesVector& w : vectors) {
        for (int i = 0; i < kLesDim; ++i) {
            if (i) out += ',';
            out += format_double(w[i]);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Outlier matrix CSV

/// Rows are (emotion, level) classes; the 17 AU cells carry the anchor value
/// with a `*` suffix when it exceeds the row threshold.
inline std::string outlier_matrix_to_csv(const OutlierMatrix& m) {
    std::string out = "emotion,level,n,z,confidence,threshold";
    for (int i = 0; i < kNumAu; ++i) out += "," + std::string(au_short_name(i));
    out += ",outlier_count\n";
    for (const OutlierRow& row : m.rows) {
        out += emotion_name(row.emotion);
        out += ',' + std::to_string(row.level);
        out += ',' + std::to_string(row.n);
        out += ',' + format_double(m.z);
        out += ',' + format_double(m.confidence);
        out += ',' + format_double(row.threshold);
        for (const OutlierCell& cell : row.cells) {
            out += ',' + format_double(cell.value);
            if (cell.is_outlier) out += '*';
        }
        out += ',' + std::to_string(row.outlier_count);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Injection trace (JSON lines, one record per frame)

inline std::string injection_trace_lines(const AUSequence& seq,
                                         const std::vector<InjectionResult>& results) {
    std::string out;
    for (size_t i = 0; i < results.size(); ++i) {
        Json line;
        line["frame"] = seq.frames[i].frame_index + 1;
        line["u_inj"] = detail::vec_to_json(results[i].u_inj);
        line["v_target"] =
            results[i].v_target ? detail::vec_to_json(*results[i].v_target) : Json(nullptr);
        line["w_prime"] = detail::vec_to_json(results[i].w_prime);
        Json clamped = Json::array();
        for (int idx : results[i].clamp_report) clamped.push_back(au_short_name(idx));
        line["clamped"] = clamped;
        out += line.dump();
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cluster report

inline Json cluster_report_to_json(const ClusterReport& report, std::uint64_t seed) {
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "les_cluster_report";
    doc["method"] = to_string(report.method);
    doc["k"] = report.k;
    doc["seed"] = seed;
    doc["silhouette"] = report.silhouette;
    doc["assignments"] = report.assignments;
    doc["wcss_history"] = report.wcss_history;
    doc["loglik_history"] = report.loglik_history;
    Json top = Json::object();
    for (const auto& [cluster, share] : report.per_cluster_top_label) {
        Json entry;
        entry["label"] = share.label;
        entry["percentage"] = share.percentage;
        top[std::to_string(cluster)] = entry;
    }
    doc["per_cluster_top_label"] = top;
    Json centroids = Json::array();
    for (const auto& c : report.centroids) centroids.push_back(detail::vec_to_json(c));
    doc["centroids"] = centroids;
    return doc;
}

// ---------------------------------------------------------------------------
// CDAN inference I/O

struct InferInput {
    Eigen::VectorXd u;     // 17
    Eigen::VectorXd v;     // 24
    Eigen::VectorXd beta;  // 64
};

inline InferInput infer_input_from_json(const std::string& text) {
    Json doc = detail::parse_json_document(text, "inference input");
    InferInput in;
    try {
        in.u = detail::json_to_vec(doc.at("u"), -1, "u");
        in.v = detail::json_to_vec(doc.at("v"), -1, "v");
        in.beta = detail::json_to_vec(doc.at("beta"), -1, "beta");
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, std::string("inference input: ") + e.what());
    }
    return in;
}

inline std::string infer_output_to_json(const Eigen::VectorXd& beta_prime,
                                        const Eigen::VectorXd& beta_final) {
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "les_infer_output";
    doc["beta_prime"] = detail::vec_to_json(beta_prime);
    doc["beta_final"] = detail::vec_to_json(beta_final);
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Training losses

inline std::string train_report_to_csv(const TrainReport& report, double lr, double decay) {
    std::string out = "phase,epoch,lr,loss\n";
    auto dump_phase = [&](const char* phase, const std::vector<double>& losses) {
        for (size_t e = 0; e < losses.size(); ++e) {
            out += phase;
            out += ',' + std::to_string(e);
            out += ',' + format_double(lr * std::pow(decay, static_cast<double>(e)));
            out += ',' + format_double(losses[e]);
            out += '\n';
        }
    };
    dump_phase("coarse", report.coarse_epoch_loss);
    dump_phase("fine", report.fine_epoch_loss);
    return out;
}

} // namespace les
