#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "les/error.hpp"

namespace les {

inline constexpr int kNumAu = 17;
inline constexpr int kActDim = 17;  // action subspace, coordinates 1..17
inline constexpr int kIsoDim = 24;  // isolation subspace, coordinates 18..41
inline constexpr int kLesDim = 41;
inline constexpr int kNumSlots = 7;  // one-hot tail, coordinates 35..41
inline constexpr int kBetaDim = 64;  // 3DMM expression coefficients

inline constexpr double kAuIntensityMin = 0.0;
inline constexpr double kAuIntensityMax = 5.0;

using Vec17 = Eigen::Matrix<double, 17, 1>;
using Vec24 = Eigen::Matrix<double, 24, 1>;
using Vec41 = Eigen::Matrix<double, 41, 1>;
using Vec64 = Eigen::Matrix<double, 64, 1>;

/// Standardized AU activations (coordinates 1..17).
using ActVector = Vec17;
/// Per-emotion-normalized magnitudes plus the one-hot tail (coordinates 18..41).
using IsoVector = Vec24;
/// A full 41-coordinate point of the linear emotion space.
using LesVector = Vec41;
/// 3DMM expression coefficients.
using ExprCoeff = Vec64;

/// The 17 controllable facial action units in canonical order. Every
/// 17-vector in the engine (intensities, activations, magnitudes) uses
/// this coordinate order.
inline constexpr std::array<int, kNumAu> kAuNumbers = {
    1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45};

inline constexpr std::array<std::string_view, kNumAu> kAuDescriptions = {
    "Inner Brow Raiser", "Outer Brow Raiser", "Brow Lowerer",  "Upper Lid Raiser",
    "Cheek Raiser",      "Lid Tightener",     "Nose Wrinkler", "Upper Lip Raiser",
    "Lip Corner Puller", "Dimpler",           "Lip Corner Depressor", "Chin Raiser",
    "Lip Stretcher",     "Lip Tightener",     "Lips Part",     "Jaw Drop",
    "Blink"};

/// OpenFace intensity column for canonical position `i` ("AU01_r", ...).
inline std::string au_column_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "AU%02d_r", kAuNumbers[static_cast<size_t>(i)]);
    return buf;
}

/// Short AU tag for canonical position `i` ("AU01", ...).
inline std::string au_short_name(int i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "AU%02d", kAuNumbers[static_cast<size_t>(i)]);
    return buf;
}

/// Canonical position (0-based) of an AU number such as 12 for AU12,
/// or -1 if the number is not one of the 17 controllable units.
inline int au_number_to_index(int au_number) {
    for (int i = 0; i < kNumAu; ++i)
        if (kAuNumbers[static_cast<size_t>(i)] == au_number) return i;
    return -1;
}

// ---------------------------------------------------------------------------
// Emotion labels

enum class Emotion : int {
    Angry = 0,
    Contempt = 1,
    Disgusted = 2,
    Fear = 3,
    Happy = 4,
    Neutral = 5,
    Sad = 6,
    Surprised = 7,
};

inline constexpr int kNumEmotions = 8;

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "angry", "contempt", "disgusted", "fear", "happy", "neutral", "sad", "surprised"};

inline std::string emotion_name(Emotion e) {
    return std::string(kEmotionNames[static_cast<size_t>(e)]);
}

inline Emotion emotion_from_name(std::string_view name) {
    for (int i = 0; i < kNumEmotions; ++i)
        if (kEmotionNames[static_cast<size_t>(i)] == name) return static_cast<Emotion>(i);
    throw Error(ErrorKind::UnknownEmotion, "unknown emotion name '" + std::string(name) + "'");
}

/// The 7 non-neutral emotions map onto one-hot tail slots 0..6 in
/// alphabetical order (coordinates 35..41 of the full vector).
inline int iso_slot(Emotion e) {
    if (e == Emotion::Neutral)
        throw Error(ErrorKind::BadLabel, "neutral has no isolation slot");
    int idx = static_cast<int>(e);
    return idx < static_cast<int>(Emotion::Neutral) ? idx : idx - 1;
}

/// Inverse of iso_slot.
inline Emotion emotion_from_slot(int slot) {
    if (slot < 0 || slot >= kNumSlots)
        throw Error(ErrorKind::BadIndex, "isolation slot out of range");
    return static_cast<Emotion>(slot < static_cast<int>(Emotion::Neutral) ? slot : slot + 1);
}

/// All emotions in label-index order.
inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions = {
    Emotion::Angry, Emotion::Contempt, Emotion::Disgusted, Emotion::Fear,
    Emotion::Happy, Emotion::Neutral,  Emotion::Sad,       Emotion::Surprised};

// ---------------------------------------------------------------------------
// AU time series

/// One frame of AU intensities in canonical order, each within [0, 5].
struct AUFrame {
    std::int64_t frame_index = 0;
    Vec17 au = Vec17::Zero();
    std::optional<double> confidence;  // absent when the source had no column
};

/// An ordered AU intensity sequence with optional emotion/level labels.
/// frame_index is strictly increasing; neutral sequences carry level 1.
struct AUSequence {
    std::vector<AUFrame> frames;
    std::optional<Emotion> emotion;
    std::optional<int> level;  // 1..3 when present (0 is reserved for the neutral table key)
    std::optional<std::string> subject_id;
    std::string source;
};

} // namespace les
