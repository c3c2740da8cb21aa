#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "les/au.hpp"
#include "les/error.hpp"

namespace les {

/// Which magnitude definition the isolation mapping uses: the literal
/// |AU|/sigma_emo, or the centered |AU - mu_emo|/sigma_emo fluctuation.
enum class Opt2Mode { Literal, Centered };

inline const char* to_string(Opt2Mode m) {
    return m == Opt2Mode::Literal ? "literal" : "centered";
}

inline Opt2Mode opt2_mode_from_string(const std::string& s) {
    if (s == "literal") return Opt2Mode::Literal;
    if (s == "centered") return Opt2Mode::Centered;
    throw Error(ErrorKind::BadParams, "opt2 mode must be 'literal' or 'centered', got '" + s + "'");
}

using EmotionLevel = std::pair<Emotion, int>;

/// Dataset-wide statistics fitted once and treated as constants afterwards.
/// Standard deviations are population (divide by N) and are guarded against
/// degenerate columns: anything below 1e-8 is replaced by 1.0 and the column
/// recorded in `degenerate_columns`.
struct DatasetStats {
    Vec17 mu_d = Vec17::Zero();
    Vec17 sigma_d = Vec17::Ones();
    bool has_global = false;

    std::map<Emotion, Vec17> sigma_emo;
    std::map<Emotion, Vec17> mu_emo;  // needed by the centered isolation variant

    std::map<EmotionLevel, double> mean_od;
    std::map<EmotionLevel, std::int64_t> frame_count;

    Opt2Mode opt2_mode = Opt2Mode::Literal;
    std::vector<std::string> degenerate_columns;

    void require_global() const {
        if (!has_global)
            throw Error(ErrorKind::StatsIncomplete, "global mean/std have not been fitted");
    }

    const Vec17& require_sigma_emo(Emotion e) const {
        auto it = sigma_emo.find(e);
        if (it == sigma_emo.end())
            throw Error(ErrorKind::StatsIncomplete, "no per-emotion std for '" + emotion_name(e) + "'");
        return it->second;
    }

    const Vec17& require_mu_emo(Emotion e) const {
        auto it = mu_emo.find(e);
        if (it == mu_emo.end())
            throw Error(ErrorKind::StatsIncomplete, "no per-emotion mean for '" + emotion_name(e) + "'");
        return it->second;
    }

    double require_mean_od(Emotion e, int level) const {
        auto it = mean_od.find({e, level});
        if (it == mean_od.end())
            throw Error(ErrorKind::MissingAnchor,
                        "no mean origin distance for (" + emotion_name(e) + ", " + std::to_string(level) + ")");
        return it->second;
    }
};

inline constexpr double kSigmaGuard = 1e-8;

} // namespace les
