#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "les/les.hpp"
#include "support/synthetic.hpp"

using namespace les;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("atomic writes land complete and leave no temp files") {
    auto dir = ts::scratch_dir("atomic");
    auto path = dir / "out.txt";
    atomic_write_file(path.string(), "first\n");
    CHECK(slurp(path) == "first\n");
    atomic_write_file(path.string(), "second\n");  // overwrite in place
    CHECK(slurp(path) == "second\n");
    CHECK(!std::filesystem::exists(path.string() + ".tmp"));
    CHECK_THROWS_AS(atomic_write_file((dir / "no_such_dir" / "x.txt").string(), "x"), Error);
}

TEST_CASE("dataset statistics survive a json round trip bit for bit") {
    auto catalog = ts::make_catalog(12, 2718);
    DatasetStats stats = fit_stats(catalog, Opt2Mode::Centered);

    Json doc = Json::parse(stats_to_json(stats).dump(2));
    DatasetStats back = stats_from_json(doc);

    CHECK(back.has_global);
    CHECK(back.opt2_mode == Opt2Mode::Centered);
    CHECK((back.mu_d - stats.mu_d).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.sigma_d - stats.sigma_d).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.mu_emo.size() == stats.mu_emo.size());
    REQUIRE(back.sigma_emo.size() == stats.sigma_emo.size());
    for (const auto& [e, v] : stats.mu_emo)
        CHECK((back.mu_emo.at(e) - v).cwiseAbs().maxCoeff() == 0.0);
    for (const auto& [e, v] : stats.sigma_emo)
        CHECK((back.sigma_emo.at(e) - v).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.mean_od.size() == stats.mean_od.size());
    for (const auto& [key, v] : stats.mean_od) CHECK(back.mean_od.at(key) == v);
    REQUIRE(back.frame_count.size() == stats.frame_count.size());
    for (const auto& [key, v] : stats.frame_count) CHECK(back.frame_count.at(key) == v);
    CHECK(back.degenerate_columns == stats.degenerate_columns);
}

TEST_CASE("stats loader rejects foreign or damaged documents") {
    auto catalog = ts::make_catalog(6, 5);
    Json doc = stats_to_json(fit_stats(catalog));

    SECTION("wrong kind") {
        doc["kind"] = "les_feature_table";
        CHECK_THROWS_AS(stats_from_json(doc), Error);
    }
    SECTION("unsupported version") {
        doc["schema_version"] = 99;
        try {
            stats_from_json(doc);
            FAIL("expected SchemaMismatch");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::SchemaMismatch);
        }
    }
    SECTION("missing field") {
        doc.erase("mu_d");
        CHECK_THROWS_AS(stats_from_json(doc), Error);
    }
    SECTION("wrong vector arity") {
        doc["sigma_d"] = Json::array({1.0, 2.0});
        CHECK_THROWS_AS(stats_from_json(doc), Error);
    }
}

TEST_CASE("feature table survives a json round trip bit for bit") {
    auto catalog = ts::make_catalog(9, 13);
    DatasetStats stats = fit_stats(catalog);
    FeatureTable table = build_feature_table(catalog, stats);

    FeatureTable back = table_from_json(Json::parse(table_to_json(table).dump()));
    REQUIRE(back.uf.size() == 22);
    for (const auto& [key, vec] : table.uf)
        CHECK((back.uf.at(key) - vec).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cdan parameters survive save and load bit for bit") {
    CdanParams params = init_params(31415);
    std::string bytes = save_params(params);
    CdanParams back = load_params(bytes);

    CHECK(back.seed == params.seed);
    auto pa = level_views(params.level1);
    auto pb = level_views(back.level1);
    for (size_t t = 0; t < pa.size(); ++t) {
        REQUIRE(pa[t].size == pb[t].size);
        for (Eigen::Index i = 0; i < pa[t].size; ++i) CHECK(pa[t].data[i] == pb[t].data[i]);
    }
    auto qa = level_views(params.level2);
    auto qb = level_views(back.level2);
    for (size_t t = 0; t < qa.size(); ++t)
        for (Eigen::Index i = 0; i < qa[t].size; ++i) CHECK(qa[t].data[i] == qb[t].data[i]);
}

TEST_CASE("params loader distinguishes schema damage from shape damage") {
    CdanParams params = init_params(1);
    std::string bytes = save_params(params);

    SECTION("truncated document") {
        try {
            load_params(bytes.substr(0, bytes.size() / 2));
            FAIL("expected SchemaMismatch");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::SchemaMismatch);
        }
    }
    SECTION("missing tensor") {
        Json doc = Json::parse(bytes);
        doc["level1"].erase("wq");
        try {
            load_params(doc.dump());
            FAIL("expected SchemaMismatch");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::SchemaMismatch);
        }
    }
    SECTION("tensor data shorter than its shape") {
        Json doc = Json::parse(bytes);
        doc["level1"]["wq"]["data"].erase(0);
        try {
            load_params(doc.dump());
            FAIL("expected ShapeMismatch");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ShapeMismatch);
        }
    }
    SECTION("well-formed tensors of the wrong size") {
        Json doc = Json::parse(bytes);
        doc["level1"]["seq_len"] = 16;
        try {
            load_params(doc.dump());
            FAIL("expected ShapeMismatch");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ShapeMismatch);
        }
    }
}

TEST_CASE("les vector export uses the e1..e41 header") {
    std::vector<LesVector> vectors(2, LesVector::Zero());
    vectors[0][0] = 1.5;
    vectors[1][40] = -0.25;
    std::string csv = write_les_csv(vectors);

    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header.rfind("e1,e2,e3,", 0) == 0);
    CHECK(header.find(",e41") == header.size() - 4);

    std::string row1, row2, extra;
    std::getline(lines, row1);
    std::getline(lines, row2);
    CHECK(!std::getline(lines, extra));
    CHECK(row1.rfind("1.5,0,", 0) == 0);
    CHECK(row2.find("-0.25") == row2.size() - 5);
}

TEST_CASE("outlier csv marks flagged cells with a star") {
    auto catalog = ts::make_catalog(40, 9);
    DatasetStats stats = fit_stats(catalog);
    FeatureTable table = build_feature_table(catalog, stats);
    OutlierMatrix m = outlier_matrix(table, 3.291, std::nullopt, stats);
    std::string csv = outlier_matrix_to_csv(m);

    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "emotion,level,n,z,confidence,threshold,AU01,AU02,AU04,AU05,AU06,AU07,AU09,"
                    "AU10,AU12,AU14,AU15,AU17,AU20,AU23,AU25,AU26,AU45,outlier_count");
    int rows = 0;
    bool any_star = false;
    std::string line;
    while (std::getline(lines, line)) {
        ++rows;
        if (line.find('*') != std::string::npos) any_star = true;
    }
    CHECK(rows == 22);
    CHECK(any_star);  // the synthetic anchors are far from zero
}

TEST_CASE("injection trace is one json record per frame") {
    auto catalog = ts::make_dyadic_catalog(4);
    DatasetStats stats = fit_stats(catalog);
    FeatureTable table = build_feature_table(catalog, stats);
    const AUSequence& seq = catalog.front();

    auto [out, results] = inject_sequence(seq, stats, table, AuBiasTarget{17, 2.5});
    std::string trace = injection_trace_lines(out, results);

    std::istringstream lines(trace);
    std::string line;
    int frame = 0;
    while (std::getline(lines, line)) {
        Json rec = Json::parse(line);
        ++frame;
        CHECK(rec["frame"] == frame);
        CHECK(rec["v_target"].is_null());  // AU-bias targets leave the isolation side alone
        CHECK(rec["u_inj"].size() == 17);
        CHECK(rec["w_prime"].size() == 41);
        if (frame % 2 == 0)  // 0-based odd frames sit at 4.5 and clamp at 5
            CHECK(rec["clamped"] == Json::array({"AU45"}));
        else
            CHECK(rec["clamped"].empty());
    }
    CHECK(frame == 4);
}

TEST_CASE("cluster report serializes every diagnostic field") {
    std::vector<int> truth;
    auto points = ts::make_blobs(60, 3, 2, 8, &truth);
    std::vector<std::string> labels;
    for (int t : truth) labels.push_back("c" + std::to_string(t));
    ClusterReport rep = cluster(points, 3, ClusterMethod::KMeans, 77, labels);

    Json doc = cluster_report_to_json(rep, 77);
    CHECK(doc["kind"] == "les_cluster_report");
    CHECK(doc["method"] == "kmeans");
    CHECK(doc["k"] == 3);
    CHECK(doc["seed"] == 77);
    CHECK(doc["assignments"].size() == 60);
    CHECK(doc["centroids"].size() == 3);
    CHECK(!doc["wcss_history"].empty());
    CHECK(doc["per_cluster_top_label"].size() == 3);
    CHECK(doc["silhouette"].get<double>() == rep.silhouette);
}

TEST_CASE("inference io validates its shapes at the boundary") {
    Json doc;
    doc["u"] = std::vector<double>(17, 0.1);
    doc["v"] = std::vector<double>(24, 0.2);
    doc["beta"] = std::vector<double>(64, 0.3);
    InferInput in = infer_input_from_json(doc.dump());
    CHECK(in.u.size() == 17);
    CHECK(in.v.size() == 24);
    CHECK(in.beta.size() == 64);

    doc.erase("beta");
    CHECK_THROWS_AS(infer_input_from_json(doc.dump()), Error);
    CHECK_THROWS_AS(infer_input_from_json("not json at all"), Error);

    std::string out = infer_output_to_json(Eigen::VectorXd::Zero(64), Eigen::VectorXd::Ones(64));
    Json parsed = Json::parse(out);
    CHECK(parsed["kind"] == "les_infer_output");
    CHECK(parsed["beta_prime"].size() == 64);
    CHECK(parsed["beta_final"].size() == 64);
}

TEST_CASE("training losses export as a phase-tagged csv") {
    TrainReport report;
    report.coarse_epoch_loss = {0.5, 0.4};
    report.fine_epoch_loss = {0.3};
    std::string csv = train_report_to_csv(report, 1e-4, 0.86);

    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "phase,epoch,lr,loss");
    std::getline(lines, line);
    CHECK(line.rfind("coarse,0,", 0) == 0);
    CHECK(line.find("0.5") != std::string::npos);
    std::getline(lines, line);
    CHECK(line.rfind("coarse,1,", 0) == 0);
    std::getline(lines, line);
    CHECK(line.rfind("fine,0,", 0) == 0);
    CHECK(!std::getline(lines, line));
}
