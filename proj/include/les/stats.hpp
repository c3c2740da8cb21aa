#pragma once

// Dataset statistics, the 22-entry feature table anchoring emotion levels,
// the hypothesis-test outlier matrix, and the isolation distance check.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "les/au.hpp"
#include "les/dataset_stats.hpp"
#include "les/error.hpp"
#include "les/space.hpp"

namespace les {

namespace detail {

struct MomentAccumulator {
    Vec17 sum = Vec17::Zero();
    Vec17 sum_sq = Vec17::Zero();
    std::int64_t n = 0;

    void add(const Vec17& x) {
        sum += x;
        sum_sq += x.cwiseProduct(x);
        ++n;
    }

    Vec17 mean() const { return sum / static_cast<double>(n); }

    // Population standard deviation (divide by N).
    Vec17 stddev() const {
        Vec17 mu = mean();
        Vec17 var = sum_sq / static_cast<double>(n) - mu.cwiseProduct(mu);
        return var.cwiseMax(0.0).cwiseSqrt();
    }
};

inline Vec17 guard_sigma(const Vec17& sigma, const std::string& context,
                         std::vector<std::string>& warnings) {
    Vec17 out = sigma;
    for (int i = 0; i < kNumAu; ++i) {
        if (out[i] < kSigmaGuard) {
            out[i] = 1.0;
            warnings.push_back(context + "[" + au_short_name(i) + "]");
        }
    }
    return out;
}

} // namespace detail

/// Fits mu_D/sigma_D over every frame, sigma_emo per labeled emotion, and the
/// mean origin distance per (emotion, level) class using the freshly fitted
/// statistics. Neutral classes are keyed (neutral, 1).
inline DatasetStats fit_stats(const std::vector<AUSequence>& catalog,
                              Opt2Mode opt2_mode = Opt2Mode::Literal) {
    DatasetStats stats;
    stats.opt2_mode = opt2_mode;

    detail::MomentAccumulator global;
    std::map<Emotion, detail::MomentAccumulator> per_emotion;
    for (const AUSequence& seq : catalog) {
        for (const AUFrame& f : seq.frames) {
            global.add(f.au);
            if (seq.emotion) per_emotion[*seq.emotion].add(f.au);
        }
    }
    if (global.n == 0) throw Error(ErrorKind::EmptyCatalog, "catalog contains no frames");

    stats.mu_d = global.mean();
    stats.sigma_d = detail::guard_sigma(global.stddev(), "sigma_d", stats.degenerate_columns);
    stats.has_global = true;

    for (const auto& [emotion, acc] : per_emotion) {
        if (acc.n < 2)
            throw Error(ErrorKind::EmotionUnderrepresented,
                        "emotion '" + emotion_name(emotion) + "' has " + std::to_string(acc.n) + " frame(s)");
        stats.mu_emo[emotion] = acc.mean();
        stats.sigma_emo[emotion] =
            detail::guard_sigma(acc.stddev(), "sigma_emo[" + emotion_name(emotion) + "]",
                                stats.degenerate_columns);
    }

    std::map<EmotionLevel, double> od_sum;
    for (const AUSequence& seq : catalog) {
        if (!seq.emotion || !seq.level) continue;
        EmotionLevel key{*seq.emotion, *seq.level};
        for (const AUFrame& f : seq.frames) {
            od_sum[key] += origin_distance(isolate(f.au, stats, *seq.emotion));
            ++stats.frame_count[key];
        }
    }
    for (const auto& [key, sum] : od_sum)
        stats.mean_od[key] = sum / static_cast<double>(stats.frame_count[key]);

    return stats;
}

// ---------------------------------------------------------------------------
// Feature table

/// The 22 action-subspace anchors: 7 emotions x levels {1,2,3} plus
/// (neutral, 0).
struct FeatureTable {
    std::map<EmotionLevel, ActVector> uf;

    const ActVector& require(Emotion e, int level) const {
        auto it = uf.find({e, level});
        if (it == uf.end())
            throw Error(ErrorKind::MissingAnchor,
                        "no feature vector for (" + emotion_name(e) + ", " + std::to_string(level) + ")");
        return it->second;
    }

    static std::vector<EmotionLevel> required_keys() {
        std::vector<EmotionLevel> keys;
        for (Emotion e : kAllEmotions) {
            if (e == Emotion::Neutral) {
                keys.push_back({e, 0});
            } else {
                for (int level = 1; level <= 3; ++level) keys.push_back({e, level});
            }
        }
        return keys;
    }
};

/// Averages the standardized activation of every frame per (emotion, level)
/// class. The (neutral, 0) anchor averages neutral level-1 frames.
inline FeatureTable build_feature_table(const std::vector<AUSequence>& catalog,
                                        const DatasetStats& stats) {
    std::map<EmotionLevel, Vec17> sums;
    std::map<EmotionLevel, std::int64_t> counts;
    for (const AUSequence& seq : catalog) {
        if (!seq.emotion || !seq.level) continue;
        EmotionLevel key{*seq.emotion, *seq.level};
        if (*seq.emotion == Emotion::Neutral) key.second = 0;  // table key for neutral
        for (const AUFrame& f : seq.frames) {
            auto [it, fresh] = sums.try_emplace(key, Vec17::Zero());
            it->second += standardize(f.au, stats);
            ++counts[key];
        }
    }
    FeatureTable table;
    for (const EmotionLevel& key : FeatureTable::required_keys()) {
        auto it = sums.find(key);
        if (it == sums.end())
            throw Error(ErrorKind::MissingAnchor, "no frames for (" + emotion_name(key.first) + ", " +
                                                      std::to_string(key.second) + ")");
        table.uf[key] = it->second / static_cast<double>(counts[key]);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Outlier matrix

/// Central-limit threshold: a standardized class mean whose magnitude
/// exceeds z*sigma/sqrt(n) is a significant anomaly.
inline double outlier_threshold(double z, double sigma, std::int64_t n) {
    if (n < 1) throw Error(ErrorKind::BadParams, "n must be >= 1");
    if (!(sigma > 0.0)) throw Error(ErrorKind::BadParams, "sigma must be positive");
    if (z < 0.0) throw Error(ErrorKind::BadParams, "z must be non-negative");
    return z * sigma / std::sqrt(static_cast<double>(n));
}

/// Two-sided confidence level corresponding to a z threshold.
inline double z_to_confidence(double z) {
    return std::erf(z / std::sqrt(2.0));
}

struct OutlierCell {
    double value = 0.0;
    bool is_outlier = false;
};

struct OutlierRow {
    Emotion emotion = Emotion::Neutral;
    int level = 0;
    std::int64_t n = 0;       // sample size used for this row
    double threshold = 0.0;   // z * sigma / sqrt(n)
    std::array<OutlierCell, kNumAu> cells{};
    int outlier_count = 0;
};

/// Per-class flags of the feature-table coordinates against the
/// hypothesis-test threshold.
struct OutlierMatrix {
    double z = 0.0;
    double sigma = 1.0;
    double confidence = 0.0;
    std::optional<std::int64_t> n_override;  // fixed n replacing per-class counts
    std::vector<OutlierRow> rows;
};

/// Flags each feature-vector coordinate. n is the per-class frame count
/// unless `n_override` pins a fixed sample size. sigma is 1 because the
/// coordinates live in standardized space.
inline OutlierMatrix outlier_matrix(const FeatureTable& table, double z,
                                    std::optional<std::int64_t> n_override,
                                    const DatasetStats& stats) {
    OutlierMatrix m;
    m.z = z;
    m.sigma = 1.0;
    m.confidence = z_to_confidence(z);
    m.n_override = n_override;
    for (const EmotionLevel& key : FeatureTable::required_keys()) {
        const ActVector& uf = table.require(key.first, key.second);
        OutlierRow row;
        row.emotion = key.first;
        row.level = key.second;
        if (n_override) {
            row.n = *n_override;
        } else {
            // The (neutral, 0) anchor is fitted from (neutral, 1) frames.
            EmotionLevel count_key = key.first == Emotion::Neutral ? EmotionLevel{key.first, 1} : key;
            auto it = stats.frame_count.find(count_key);
            if (it == stats.frame_count.end())
                throw Error(ErrorKind::StatsIncomplete,
                            "no frame count for (" + emotion_name(key.first) + ", " +
                                std::to_string(count_key.second) + ")");
            row.n = it->second;
        }
        row.threshold = outlier_threshold(z, m.sigma, row.n);
        for (int i = 0; i < kNumAu; ++i) {
            row.cells[static_cast<size_t>(i)].value = uf[i];
            row.cells[static_cast<size_t>(i)].is_outlier = std::abs(uf[i]) > row.threshold;
            if (row.cells[static_cast<size_t>(i)].is_outlier) ++row.outlier_count;
        }
        m.rows.push_back(row);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Isolation distance check

enum class PairKind { Inner, Outer };

struct PairDistance {
    double distance = 0.0;
    PairKind kind = PairKind::Inner;
    bool bound_ok = true;
};

inline constexpr double kPairOdTolerance = 1e-9;   // ods equal within this are comparable
inline constexpr double kPairBoundSlack = 1e-12;   // fp slack on the sqrt(2) bound

/// Distance between two isolation vectors and the inner/outer bound check:
/// same one-hot slot pairs must sit within od*sqrt(2), different slots at or
/// beyond it. Pairs whose origin distances differ are vacuously ok.
inline PairDistance pair_distance(const IsoVector& v1, const IsoVector& v2) {
    PairDistance out;
    out.distance = (v1 - v2).norm();
    out.kind = one_hot_slot(v1) == one_hot_slot(v2) ? PairKind::Inner : PairKind::Outer;
    double od1 = origin_distance(v1);
    double od2 = origin_distance(v2);
    if (std::abs(od1 - od2) > kPairOdTolerance) {
        out.bound_ok = true;  // bound only applies at equal od
        return out;
    }
    double bound = od1 * std::sqrt(2.0);
    out.bound_ok = out.kind == PairKind::Inner ? out.distance <= bound + kPairBoundSlack
                                               : out.distance >= bound - kPairBoundSlack;
    return out;
}

} // namespace les
