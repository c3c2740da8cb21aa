// Command-line front door for the Linear Emotion Space engine: fits dataset
// statistics, runs emotion/AU injection over AU CSVs, produces diagnostic
// reports (outliers, isolation bound, clustering), and drives the CDAN
// (init / infer / gradcheck / train-toy).
//
// Exit codes: 0 ok, 2 ingestion error, 3 stats/table error, 4 target error,
// 5 params error, 1 anything else (I/O, gradcheck failure).

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "les/les.hpp"

namespace {

struct CliExit {
    int code;
    std::string message;
};

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitIngest = 2;
constexpr int kExitStats = 3;
constexpr int kExitTarget = 4;
constexpr int kExitParams = 5;

// Runs one pipeline stage; any engine error inside becomes the stage's exit
// code (I/O failures keep their own).
template <class Fn>
auto stage(int code, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const les::Error& e) {
        throw CliExit{e.kind() == les::ErrorKind::IoFailure ? kExitOther : code, e.what()};
    }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("LES_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw CliExit{kExitOther, std::string("LES_SEED is not a number: ") + env};
        }
    }
    return 0;
}

void warn_degenerate(const les::DatasetStats& stats) {
    for (const std::string& column : stats.degenerate_columns)
        std::cerr << "warning: degenerate column " << column << " (std below guard, using 1.0)\n";
}

les::DatasetStats load_stats_file(const std::string& path) {
    return stage(kExitStats, [&] {
        return les::stats_from_json(
            les::detail::parse_json_document(les::read_file(path), "stats file"));
    });
}

les::FeatureTable load_table_file(const std::string& path) {
    return stage(kExitStats, [&] {
        return les::table_from_json(
            les::detail::parse_json_document(les::read_file(path), "feature table file"));
    });
}

les::CdanParams load_params_file(const std::string& path) {
    return stage(kExitParams, [&] { return les::load_params(les::read_file(path)); });
}

void write_file(const std::string& path, const std::string& content) {
    try {
        les::atomic_write_file(path, content);
    } catch (const les::Error& e) {
        throw CliExit{kExitOther, e.what()};
    }
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
    std::string manifest, out_stats, out_table;
    std::string opt2_mode = "literal";
};

int cmd_fit(const FitOptions& opt) {
    auto mode = stage(kExitStats, [&] { return les::opt2_mode_from_string(opt.opt2_mode); });
    auto catalog = stage(kExitIngest, [&] { return les::load_catalog(opt.manifest); });
    auto stats = stage(kExitStats, [&] { return les::fit_stats(catalog, mode); });
    warn_degenerate(stats);
    auto table = stage(kExitStats, [&] { return les::build_feature_table(catalog, stats); });
    write_file(opt.out_stats, les::stats_to_json(stats).dump(2) + "\n");
    write_file(opt.out_table, les::table_to_json(table).dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// inject

struct InjectOptions {
    std::string input, stats_path, table_path, output, trace;
    std::optional<std::string> emo;
    std::optional<double> level;
    std::optional<int> au_number;
    std::optional<double> bias;
};

les::InjectionTarget make_target(const InjectOptions& opt) {
    const bool emotion_given = opt.emo.has_value() || opt.level.has_value();
    const bool au_given = opt.au_number.has_value() || opt.bias.has_value();
    if (emotion_given == au_given)
        throw CliExit{kExitTarget, "give exactly one target: --emo/--level or --au/--bias"};
    if (emotion_given) {
        if (!opt.emo || !opt.level)
            throw CliExit{kExitTarget, "--emo and --level must be given together"};
        return stage(kExitTarget, [&] {
            les::EmotionLevelTarget t;
            t.emotion = les::emotion_from_name(*opt.emo);
            t.level = *opt.level;
            les::InjectionTarget target = t;
            les::validate_target(target);
            return target;
        });
    }
    if (!opt.au_number || !opt.bias)
        throw CliExit{kExitTarget, "--au and --bias must be given together"};
    return stage(kExitTarget, [&] {
        les::AuBiasTarget t;
        t.au_index = les::au_number_to_index(*opt.au_number) + 1;  // flag takes the AU number
        t.bias = *opt.bias;
        les::InjectionTarget target = t;
        les::validate_target(target);
        return target;
    });
}

int cmd_inject(const InjectOptions& opt) {
    auto target = make_target(opt);
    auto seq = stage(kExitIngest, [&] { return les::parse_au_csv(les::read_file(opt.input)); });
    auto stats = load_stats_file(opt.stats_path);
    auto table = load_table_file(opt.table_path);

    auto [out_seq, results] = stage(kExitStats, [&] {
        return les::inject_sequence(seq, stats, table, target);
    });

    write_file(opt.output, les::write_au_csv(out_seq));
    if (!opt.trace.empty())
        write_file(opt.trace, les::injection_trace_lines(seq, results));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// reconstruct (LES vector export)

struct ReconstructOptions {
    std::string input, stats_path, output;
    std::string emo = "neutral";
};

int cmd_reconstruct(const ReconstructOptions& opt) {
    auto emotion = stage(kExitTarget, [&] { return les::emotion_from_name(opt.emo); });
    auto seq = stage(kExitIngest, [&] { return les::parse_au_csv(les::read_file(opt.input)); });
    auto stats = load_stats_file(opt.stats_path);
    auto vectors = stage(kExitStats, [&] {
        std::vector<les::LesVector> out;
        out.reserve(seq.frames.size());
        for (const auto& frame : seq.frames)
            out.push_back(les::reconstruct(frame, stats, emotion));
        return out;
    });
    write_file(opt.output, les::write_les_csv(vectors));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// diagnose

struct OutlierOptions {
    std::string stats_path, table_path, output;
    double z = 3.291;
    std::optional<std::int64_t> n_override;
};

int cmd_diagnose_outliers(const OutlierOptions& opt) {
    auto stats = load_stats_file(opt.stats_path);
    auto table = load_table_file(opt.table_path);
    auto matrix = stage(kExitStats, [&] {
        return les::outlier_matrix(table, opt.z, opt.n_override, stats);
    });
    write_file(opt.output, les::outlier_matrix_to_csv(matrix));
    return kExitOk;
}

struct IsolationOptions {
    std::string manifest, stats_path, output;
    int pairs = 10000;
    std::optional<std::uint64_t> seed;
};

int cmd_diagnose_isolation(const IsolationOptions& opt) {
    auto catalog = stage(kExitIngest, [&] { return les::load_catalog(opt.manifest); });
    auto stats = load_stats_file(opt.stats_path);
    const std::uint64_t seed = resolve_seed(opt.seed);

    // isolation vectors of every labeled non-neutral frame with nonzero od
    std::vector<les::IsoVector> pool;
    stage(kExitStats, [&] {
        for (const auto& seq : catalog) {
            if (!seq.emotion || *seq.emotion == les::Emotion::Neutral) continue;
            for (const auto& frame : seq.frames) {
                les::IsoVector v =
                    les::decompose(les::reconstruct(frame, stats, *seq.emotion)).second;
                if (les::origin_distance(v) > 0.0) pool.push_back(v);
            }
        }
        if (pool.size() < 2)
            throw les::Error(les::ErrorKind::TooFewPoints,
                             "need at least 2 non-neutral frames with nonzero origin distance");
        return 0;
    });

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    std::int64_t inner = 0, outer = 0, violations = 0;
    double max_inner_ratio = 0.0, min_outer_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < opt.pairs; ++i) {
        size_t a = pick(rng), b = pick(rng);
        while (b == a) b = pick(rng);
        les::IsoVector v1 = pool[a];
        // rescale the partner onto the same origin distance; the one-hot tail
        // scales along so the od coupling is preserved
        les::IsoVector v2 = pool[b] * (les::origin_distance(pool[a]) / les::origin_distance(pool[b]));
        les::PairDistance pd = les::pair_distance(v1, v2);
        const double bound = les::origin_distance(v1) * std::sqrt(2.0);
        if (pd.kind == les::PairKind::Inner) {
            ++inner;
            max_inner_ratio = std::max(max_inner_ratio, pd.distance / bound);
        } else {
            ++outer;
            min_outer_ratio = std::min(min_outer_ratio, pd.distance / bound);
        }
        if (!pd.bound_ok) ++violations;
    }

    les::Json doc;
    doc["schema_version"] = les::kSchemaVersion;
    doc["kind"] = "les_isolation_report";
    doc["seed"] = seed;
    doc["pairs"] = opt.pairs;
    doc["inner_pairs"] = inner;
    doc["outer_pairs"] = outer;
    doc["violations"] = violations;
    doc["max_inner_ratio"] = max_inner_ratio;
    doc["min_outer_ratio"] = outer > 0 ? les::Json(min_outer_ratio) : les::Json(nullptr);
    write_file(opt.output, doc.dump(2) + "\n");
    return kExitOk;
}

struct ClusteringOptions {
    std::string manifest, stats_path, output;
    int k = 8;
    std::string method = "kmeans";
    std::optional<std::uint64_t> seed;
};

int cmd_diagnose_clustering(const ClusteringOptions& opt) {
    auto catalog = stage(kExitIngest, [&] { return les::load_catalog(opt.manifest); });
    auto stats = load_stats_file(opt.stats_path);
    const std::uint64_t seed = resolve_seed(opt.seed);

    auto method = stage(kExitStats, [&] { return les::cluster_method_from_string(opt.method); });
    std::vector<Eigen::VectorXd> points;
    std::vector<std::string> labels;
    for (const auto& seq : catalog) {
        for (const auto& frame : seq.frames) {
            points.push_back(les::standardize(frame.au, stats));
            labels.push_back(seq.emotion ? les::emotion_name(*seq.emotion) : "unlabeled");
        }
    }
    auto report = stage(kExitStats, [&] {
        return les::cluster(points, opt.k, method, seed, labels);
    });
    write_file(opt.output, les::cluster_report_to_json(report, seed).dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// cdan

int cmd_cdan_init(const std::optional<std::uint64_t>& seed_flag, const std::string& out) {
    const std::uint64_t seed = resolve_seed(seed_flag);
    auto params = les::init_params(seed);
    write_file(out, les::save_params(params));
    return kExitOk;
}

int cmd_cdan_infer(const std::string& params_path, const std::string& in_path,
                   const std::string& out_path) {
    auto params = load_params_file(params_path);
    auto input = stage(kExitParams, [&] {
        return les::infer_input_from_json(les::read_file(in_path));
    });
    auto [beta_prime, beta_final] = stage(kExitParams, [&] {
        return les::forward_serial(params, input.u, input.v, input.beta);
    });
    write_file(out_path, les::infer_output_to_json(beta_prime, beta_final));
    return kExitOk;
}

int cmd_cdan_gradcheck(const std::string& params_path, const std::optional<std::uint64_t>& seed_flag,
                       double epsilon) {
    auto params = load_params_file(params_path);
    const std::uint64_t seed = resolve_seed(seed_flag);

    // probe with a toy-distribution sample: the pass tolerance is calibrated
    // for inputs at these magnitudes
    les::ToySample probe = les::make_linear_toy_dataset(1, seed)[0];
    auto report = stage(kExitParams, [&] {
        return les::grad_check(params, les::ActVector(probe.u), les::IsoVector(probe.v),
                               les::ExprCoeff(probe.beta), les::ExprCoeff(probe.target), epsilon);
    });
    std::cout << "checked=" << report.checked << " max_rel_err=" << report.max_rel_err << " "
              << (report.pass ? "pass" : "fail") << "\n";
    return report.pass ? kExitOk : kExitOther;
}

struct TrainToyOptions {
    std::string params_path, out_path, loss_csv;
    int samples = 200;
    int epochs = 30;
    double lr = 1e-4;
    double decay = 0.86;
    int batch = 10;
    std::optional<std::uint64_t> seed;
};

int cmd_cdan_train_toy(const TrainToyOptions& opt) {
    auto params = load_params_file(opt.params_path);
    const std::uint64_t seed = resolve_seed(opt.seed);

    auto data = stage(kExitParams, [&] { return les::make_linear_toy_dataset(opt.samples, seed); });
    les::TrainReport report;
    auto trained = stage(kExitParams, [&] {
        return les::train_toy(data, params, opt.epochs, opt.lr, opt.decay, opt.batch, &report);
    });
    std::cout << "mse_before=" << les::serial_mse(data, params)
              << " mse_after=" << les::serial_mse(data, trained) << "\n";
    write_file(opt.out_path, les::save_params(trained));
    if (!opt.loss_csv.empty())
        write_file(opt.loss_csv, les::train_report_to_csv(report, opt.lr, opt.decay));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear Emotion Space engine"};
    app.require_subcommand(1);

    // fit
    FitOptions fit_opt;
    auto* fit = app.add_subcommand("fit", "Fit dataset statistics and the feature table");
    fit->add_option("--manifest", fit_opt.manifest, "JSON-lines manifest of AU CSVs")->required();
    fit->add_option("--out-stats", fit_opt.out_stats, "Output stats JSON")->required();
    fit->add_option("--out-table", fit_opt.out_table, "Output feature table JSON")->required();
    fit->add_option("--opt2-mode", fit_opt.opt2_mode, "Isolation magnitude mode: literal|centered");

    // inject
    InjectOptions inj_opt;
    auto* inject = app.add_subcommand("inject", "Apply an emotion/AU target to an AU CSV");
    inject->add_option("--in", inj_opt.input, "Input AU CSV")->required();
    inject->add_option("--stats", inj_opt.stats_path, "Stats JSON")->required();
    inject->add_option("--table", inj_opt.table_path, "Feature table JSON")->required();
    inject->add_option("--out", inj_opt.output, "Output AU CSV")->required();
    inject->add_option("--trace", inj_opt.trace, "Optional JSON-lines trace");
    inject->add_option("--emo", inj_opt.emo, "Target emotion name");
    inject->add_option("--level", inj_opt.level, "Target level (real, >= 0)");
    inject->add_option("--au", inj_opt.au_number, "Target AU number (e.g. 12 for AU12)");
    inject->add_option("--bias", inj_opt.bias, "Bias added to the standardized AU");

    // reconstruct
    ReconstructOptions rec_opt;
    auto* reconstruct = app.add_subcommand("reconstruct", "Export LES vectors (e1..e41 CSV)");
    reconstruct->add_option("--in", rec_opt.input, "Input AU CSV")->required();
    reconstruct->add_option("--stats", rec_opt.stats_path, "Stats JSON")->required();
    reconstruct->add_option("--emo", rec_opt.emo, "Emotion label of the sequence");
    reconstruct->add_option("--out", rec_opt.output, "Output CSV")->required();

    // diagnose
    auto* diagnose = app.add_subcommand("diagnose", "Analysis reports");
    diagnose->require_subcommand(1);

    OutlierOptions out_opt;
    auto* outliers = diagnose->add_subcommand("outliers", "Hypothesis-test outlier matrix");
    outliers->add_option("--stats", out_opt.stats_path, "Stats JSON")->required();
    outliers->add_option("--table", out_opt.table_path, "Feature table JSON")->required();
    outliers->add_option("--z", out_opt.z, "z threshold (default 3.291)");
    outliers->add_option("--n", out_opt.n_override, "Fixed sample size replacing per-class counts");
    outliers->add_option("--out", out_opt.output, "Output CSV")->required();

    IsolationOptions iso_opt;
    auto* isolation = diagnose->add_subcommand("isolation", "Equal-od pairwise distance bound");
    isolation->add_option("--manifest", iso_opt.manifest, "JSON-lines manifest")->required();
    isolation->add_option("--stats", iso_opt.stats_path, "Stats JSON")->required();
    isolation->add_option("--pairs", iso_opt.pairs, "Number of sampled pairs (default 10000)");
    isolation->add_option("--seed", iso_opt.seed, "Sampling seed (falls back to LES_SEED, then 0)");
    isolation->add_option("--out", iso_opt.output, "Output JSON")->required();

    ClusteringOptions clu_opt;
    auto* clustering = diagnose->add_subcommand("clustering", "Cluster standardized activations");
    clustering->add_option("--manifest", clu_opt.manifest, "JSON-lines manifest")->required();
    clustering->add_option("--stats", clu_opt.stats_path, "Stats JSON")->required();
    clustering->add_option("--k", clu_opt.k, "Cluster count (default 8)");
    clustering->add_option("--method", clu_opt.method, "kmeans|gmm");
    clustering->add_option("--seed", clu_opt.seed, "Seed (falls back to LES_SEED, then 0)");
    clustering->add_option("--out", clu_opt.output, "Output JSON")->required();

    // cdan
    auto* cdan = app.add_subcommand("cdan", "Cross-Dimension Attention Net");
    cdan->require_subcommand(1);

    std::optional<std::uint64_t> init_seed;
    std::string init_out;
    auto* cdan_init = cdan->add_subcommand("init", "Write freshly initialized parameters");
    cdan_init->add_option("--seed", init_seed, "Init seed (falls back to LES_SEED, then 0)");
    cdan_init->add_option("--out", init_out, "Output params JSON")->required();

    std::string infer_params, infer_in, infer_out;
    auto* cdan_infer = cdan->add_subcommand("infer", "Serial (u, v, beta) -> beta'' inference");
    cdan_infer->add_option("--params", infer_params, "Params JSON")->required();
    cdan_infer->add_option("--in", infer_in, "Input JSON with u, v, beta arrays")->required();
    cdan_infer->add_option("--out", infer_out, "Output JSON")->required();

    std::string gc_params;
    std::optional<std::uint64_t> gc_seed;
    double gc_epsilon = 1e-5;
    auto* cdan_gradcheck = cdan->add_subcommand("gradcheck", "Finite-difference gradient check");
    cdan_gradcheck->add_option("--params", gc_params, "Params JSON")->required();
    cdan_gradcheck->add_option("--seed", gc_seed, "Probe seed (falls back to LES_SEED, then 0)");
    cdan_gradcheck->add_option("--epsilon", gc_epsilon, "Step size (default 1e-5)");

    TrainToyOptions tt_opt;
    auto* cdan_train = cdan->add_subcommand("train-toy", "Two-phase Adam training on the linear fixture");
    cdan_train->add_option("--params", tt_opt.params_path, "Input params JSON")->required();
    cdan_train->add_option("--out", tt_opt.out_path, "Output params JSON")->required();
    cdan_train->add_option("--loss-csv", tt_opt.loss_csv, "Optional per-epoch loss CSV");
    cdan_train->add_option("--samples", tt_opt.samples, "Dataset size (default 200)");
    cdan_train->add_option("--epochs", tt_opt.epochs, "Epochs per phase (default 30)");
    cdan_train->add_option("--lr", tt_opt.lr, "Initial learning rate (default 1e-4)");
    cdan_train->add_option("--decay", tt_opt.decay, "Per-epoch decay (default 0.86)");
    cdan_train->add_option("--batch", tt_opt.batch, "Mini-batch size (default 10)");
    cdan_train->add_option("--seed", tt_opt.seed, "Dataset seed (falls back to LES_SEED, then 0)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit) return cmd_fit(fit_opt);
        if (*inject) return cmd_inject(inj_opt);
        if (*reconstruct) return cmd_reconstruct(rec_opt);
        if (*outliers) return cmd_diagnose_outliers(out_opt);
        if (*isolation) return cmd_diagnose_isolation(iso_opt);
        if (*clustering) return cmd_diagnose_clustering(clu_opt);
        if (*cdan_init) return cmd_cdan_init(init_seed, init_out);
        if (*cdan_infer) return cmd_cdan_infer(infer_params, infer_in, infer_out);
        if (*cdan_gradcheck) return cmd_cdan_gradcheck(gc_params, gc_seed, gc_epsilon);
        if (*cdan_train) return cmd_cdan_train_toy(tt_opt);
    } catch (const CliExit& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const les::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
    return kExitOk;
}
