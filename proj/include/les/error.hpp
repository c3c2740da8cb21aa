#pragma once

#include <stdexcept>
#include <string>

namespace les {

/// Failure categories used across the engine. The CLI maps these onto its
/// exit-code taxonomy, so every throwing path must pick the right kind.
enum class ErrorKind {
    // ingestion
    MissingColumn,
    MalformedRow,
    EmptyInput,
    FileNotFound,
    BadLabel,
    // statistics / tables
    StatsIncomplete,
    UnknownEmotion,
    EmptyCatalog,
    EmotionUnderrepresented,
    MissingAnchor,
    BadParams,
    TooFewPoints,
    SingleCluster,
    // injection targets
    BadIndex,
    BadTarget,
    // network
    BadLength,
    NonFiniteActivation,
    Diverged,
    // persistence
    SchemaMismatch,
    ShapeMismatch,
    IoFailure,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::BadLabel: return "BadLabel";
    case ErrorKind::StatsIncomplete: return "StatsIncomplete";
    case ErrorKind::UnknownEmotion: return "UnknownEmotion";
    case ErrorKind::EmptyCatalog: return "EmptyCatalog";
    case ErrorKind::EmotionUnderrepresented: return "EmotionUnderrepresented";
    case ErrorKind::MissingAnchor: return "MissingAnchor";
    case ErrorKind::BadParams: return "BadParams";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::SingleCluster: return "SingleCluster";
    case ErrorKind::BadIndex: return "BadIndex";
    case ErrorKind::BadTarget: return "BadTarget";
    case ErrorKind::BadLength: return "BadLength";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace les
