#pragma once

// Emotion injection: translate a user target — (emotion, continuous level)
// or (AU index, bias) — into a delta applied in the action subspace, plus a
// synthesized isolation-subspace target for emotion targets. Levels beyond
// the highest anchor (3) extrapolate along the last anchor segment.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "les/au.hpp"
#include "les/error.hpp"
#include "les/space.hpp"
#include "les/stats.hpp"

namespace les {

struct EmotionLevelTarget {
    Emotion emotion = Emotion::Neutral;
    double level = 0.0;
};

struct AuBiasTarget {
    int au_index = 1;  // canonical AU position, 1-based (1..17)
    double bias = 0.0;
};

using InjectionTarget = std::variant<EmotionLevelTarget, AuBiasTarget>;

inline void validate_target(const InjectionTarget& target) {
    if (const auto* el = std::get_if<EmotionLevelTarget>(&target)) {
        if (!(el->level >= 0.0) || !std::isfinite(el->level))
            throw Error(ErrorKind::BadTarget,
                        "emotion level must be a finite value >= 0");
    } else {
        const auto& ab = std::get<AuBiasTarget>(target);
        if (ab.au_index < 1 || ab.au_index > kNumAu)
            throw Error(ErrorKind::BadIndex,
                        "AU index " + std::to_string(ab.au_index) + " outside 1..17");
        if (!std::isfinite(ab.bias))
            throw Error(ErrorKind::BadTarget, "AU bias must be finite");
    }
}

struct InjectionResult {
    LesVector w_prime = LesVector::Zero();
    ActVector u_inj = ActVector::Zero();
    std::optional<IsoVector> v_target;   // present for emotion targets only
    std::vector<int> clamp_report;       // AU indices (0-based) clamped on inverse mapping
};

/// Anchor lookup with linear interpolation between adjacent integer levels.
/// The level-0 anchor for every emotion is the neutral rest vector; levels
/// above 3 continue the direction of the last anchor segment. Integer levels
/// 1..3 return the stored table entry unchanged.
inline ActVector anchor_vector(const FeatureTable& table, Emotion emotion, double level) {
    if (!(level >= 0.0) || !std::isfinite(level))
        throw Error(ErrorKind::BadTarget, "level must be a finite value >= 0");
    const ActVector& rest = table.require(Emotion::Neutral, 0);
    if (emotion == Emotion::Neutral) return rest;
    if (level == 0.0) return rest;

    if (level > 3.0) {
        const ActVector& u2 = table.require(emotion, 2);
        const ActVector& u3 = table.require(emotion, 3);
        return u3 + (level - 3.0) * (u3 - u2);
    }

    const int j = static_cast<int>(std::floor(level));
    const int i = static_cast<int>(std::ceil(level));
    if (i == j) return table.require(emotion, i);  // integer level: exact table entry

    const ActVector& lo = (j == 0) ? rest : table.require(emotion, j);
    const ActVector& hi = table.require(emotion, i);
    return (hi - lo) * (level - j) + lo;
}

/// Action-subspace injection: u_inj = anchor(emotion, level) − rest vector,
/// added onto u. Level 0 leaves u untouched (u_inj = 0) without consulting
/// the table beyond the rest anchor.
inline std::pair<ActVector, ActVector> inject_emotion(const ActVector& u,
                                                      const FeatureTable& table,
                                                      Emotion emotion, double level) {
    if (!(level >= 0.0) || !std::isfinite(level))
        throw Error(ErrorKind::BadTarget, "level must be a finite value >= 0");
    if (level == 0.0 || emotion == Emotion::Neutral)
        return {u, ActVector::Zero()};
    ActVector u_inj = anchor_vector(table, emotion, level) - table.require(Emotion::Neutral, 0);
    return {ActVector(u + u_inj), u_inj};
}

/// Adds `bias` to one action-subspace coordinate. `au_index` is the 1-based
/// canonical AU position (AU12 sits at position 9).
inline ActVector inject_au_bias(const ActVector& u, int au_index, double bias) {
    if (au_index < 1 || au_index > kNumAu)
        throw Error(ErrorKind::BadIndex,
                    "AU index " + std::to_string(au_index) + " outside 1..17");
    ActVector out = u;
    out[au_index - 1] += bias;
    return out;
}

namespace detail {

/// Piecewise-linear interpolation of the per-class mean origin distance over
/// levels {0 → 0, 1, 2, 3}, extrapolating past 3 along the last segment.
inline double interpolate_mean_od(const DatasetStats& stats, Emotion emotion, double level) {
    if (level == 0.0) return 0.0;
    if (level > 3.0) {
        double m2 = stats.require_mean_od(emotion, 2);
        double m3 = stats.require_mean_od(emotion, 3);
        return m3 + (level - 3.0) * (m3 - m2);
    }
    const int j = static_cast<int>(std::floor(level));
    const int i = static_cast<int>(std::ceil(level));
    if (i == j) return stats.require_mean_od(emotion, i);
    double lo = (j == 0) ? 0.0 : stats.require_mean_od(emotion, j);
    double hi = stats.require_mean_od(emotion, i);
    return (hi - lo) * (level - j) + lo;
}

} // namespace detail

/// Synthesizes the isolation-subspace target for an emotion at a continuous
/// level: magnitudes (first 17 coordinates) are zero and the emotion's
/// one-hot slot carries the interpolated mean origin distance. Neutral and
/// level 0 yield the zero vector.
inline IsoVector build_v_target(const DatasetStats& stats, Emotion emotion, double level) {
    if (!(level >= 0.0) || !std::isfinite(level))
        throw Error(ErrorKind::BadTarget, "level must be a finite value >= 0");
    IsoVector v = IsoVector::Zero();
    if (emotion == Emotion::Neutral || level == 0.0) return v;
    v[kNumAu + iso_slot(emotion)] = detail::interpolate_mean_od(stats, emotion, level);
    return v;
}

/// Applies the target to every frame: reconstruct into the emotion space,
/// shift the action subspace (and synthesize the isolation target for
/// emotion targets), then map back to clamped AU intensities. Frame count
/// and ordering are preserved; one InjectionResult is returned per frame.
inline std::pair<AUSequence, std::vector<InjectionResult>> inject_sequence(
    const AUSequence& seq, const DatasetStats& stats, const FeatureTable& table,
    const InjectionTarget& target) {
    validate_target(target);

    AUSequence out = seq;
    std::vector<InjectionResult> results;
    results.reserve(seq.frames.size());

    const Emotion source = seq.emotion.value_or(Emotion::Neutral);
    for (size_t idx = 0; idx < seq.frames.size(); ++idx) {
        const AUFrame& frame = seq.frames[idx];
        InjectionResult r;

        LesVector w = reconstruct(frame, stats, source);
        auto [u, v] = decompose(w);

        ActVector u_prime;
        if (const auto* el = std::get_if<EmotionLevelTarget>(&target)) {
            auto [up, u_inj] = inject_emotion(u, table, el->emotion, el->level);
            u_prime = up;
            r.u_inj = u_inj;
            r.v_target = build_v_target(stats, el->emotion, el->level);
            v = *r.v_target;
        } else {
            const auto& ab = std::get<AuBiasTarget>(target);
            u_prime = inject_au_bias(u, ab.au_index, ab.bias);
            r.u_inj = ActVector::Zero();
            r.u_inj[ab.au_index - 1] = ab.bias;
            // isolation subspace is left untouched for AU-bias targets
        }

        r.w_prime = compose(u_prime, v);
        out.frames[idx].au = inverse_standardize(u_prime, stats, &r.clamp_report);
        results.push_back(std::move(r));
    }
    return {std::move(out), std::move(results)};
}

} // namespace les
