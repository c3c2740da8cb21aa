#pragma once

// Construction and decomposition of 41-coordinate emotion-space points.
//
// Layout of a LesVector w = (e_1 .. e_41), stored 0-based:
//   [0, 17)   action subspace   u: standardized AU activations
//   [17, 34)  isolation magnitudes: per-emotion-normalized |AU|
//   [34, 41)  one-hot tail: a single slot carries the origin distance

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "les/au.hpp"
#include "les/dataset_stats.hpp"
#include "les/error.hpp"

namespace les {

/// Opt1: u_i = (AU_i - mu_D,i) / sigma_D,i.
inline ActVector standardize(const Vec17& au, const DatasetStats& stats) {
    stats.require_global();
    return (au - stats.mu_d).cwiseQuotient(stats.sigma_d);
}

/// Inverse of Opt1, clamped back to the valid intensity range. Indices of
/// clamped coordinates (canonical, 0-based) are appended to `clamped` when
/// given.
inline Vec17 inverse_standardize(const ActVector& u, const DatasetStats& stats,
                                 std::vector<int>* clamped = nullptr) {
    stats.require_global();
    Vec17 au = u.cwiseProduct(stats.sigma_d) + stats.mu_d;
    for (int i = 0; i < kNumAu; ++i) {
        double v = std::clamp(au[i], kAuIntensityMin, kAuIntensityMax);
        if (v != au[i]) {
            if (clamped) clamped->push_back(i);
            au[i] = v;
        }
    }
    return au;
}

/// Opt2: per-emotion-normalized magnitudes. Literal mode divides |AU_j| by
/// sigma_emo,j; centered mode uses |AU_j - mu_emo,j| instead.
inline Vec17 isolate(const Vec17& au, const DatasetStats& stats, Emotion emotion) {
    const Vec17& sigma = stats.require_sigma_emo(emotion);
    if (stats.opt2_mode == Opt2Mode::Centered) {
        const Vec17& mu = stats.require_mu_emo(emotion);
        return (au - mu).cwiseAbs().cwiseQuotient(sigma);
    }
    return au.cwiseAbs().cwiseQuotient(sigma);
}

/// Euclidean norm of the 17 isolation magnitudes.
inline double origin_distance(const Vec17& iso17) {
    return iso17.norm();
}

/// Maps one AU frame into the full 41-coordinate space. The one-hot tail
/// carries the origin distance at the emotion's slot; neutral has no slot
/// and leaves the tail zero.
inline LesVector reconstruct(const AUFrame& frame, const DatasetStats& stats, Emotion emotion) {
    LesVector w = LesVector::Zero();
    w.head<kActDim>() = standardize(frame.au, stats);
    Vec17 iso = isolate(frame.au, stats, emotion);
    w.segment<kNumAu>(kActDim) = iso;
    if (emotion != Emotion::Neutral)
        w[kActDim + kNumAu + iso_slot(emotion)] = origin_distance(iso);
    return w;
}

/// Slices w into its action and isolation views; concatenating the two
/// reproduces w exactly.
inline std::pair<ActVector, IsoVector> decompose(const LesVector& w) {
    return {w.head<kActDim>(), w.tail<kIsoDim>()};
}

inline LesVector compose(const ActVector& u, const IsoVector& v) {
    LesVector w;
    w.head<kActDim>() = u;
    w.tail<kIsoDim>() = v;
    return w;
}

/// Origin distance of an isolation-subspace vector (norm of its first 17
/// coordinates).
inline double origin_distance(const IsoVector& v) {
    return v.head<kNumAu>().norm();
}

/// One-hot slot of an isolation vector: the index (0..6) of the dominant
/// tail coordinate, or absent when the tail is all zero.
inline std::optional<int> one_hot_slot(const IsoVector& v) {
    int best = 0;
    double best_abs = 0.0;
    for (int s = 0; s < kNumSlots; ++s) {
        double a = std::abs(v[kNumAu + s]);
        if (a > best_abs) {
            best_abs = a;
            best = s;
        }
    }
    if (best_abs == 0.0) return std::nullopt;
    return best;
}

} // namespace les
