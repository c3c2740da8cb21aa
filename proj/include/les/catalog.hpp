#pragma once

// Labeled dataset catalogs. A catalog manifest is JSON-lines (UTF-8):
// one object per line with `path` and optional `emotion`, `level`,
// `subject_id`. Paths are resolved relative to the manifest location.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "les/au.hpp"
#include "les/csv.hpp"
#include "les/error.hpp"

namespace les {

struct CatalogEntry {
    std::string path;
    std::optional<Emotion> emotion;
    std::optional<int> level;
    std::optional<std::string> subject_id;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::FileNotFound, path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parses the JSON-lines manifest text. Label checks happen here so a bad
/// manifest fails before any CSV is touched.
inline std::vector<CatalogEntry> parse_manifest(std::string_view text) {
    std::vector<CatalogEntry> entries;
    size_t line_no = 0;
    for (std::string_view line : detail::split_lines(text)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::MalformedRow, "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("path") || !j["path"].is_string())
            throw Error(ErrorKind::MalformedRow,
                        "manifest line " + std::to_string(line_no) + ": missing string field 'path'");
        CatalogEntry entry;
        entry.path = j["path"].get<std::string>();
        if (j.contains("emotion")) {
            if (!j["emotion"].is_string())
                throw Error(ErrorKind::BadLabel, "manifest line " + std::to_string(line_no) + ": emotion must be a string");
            entry.emotion = emotion_from_name(j["emotion"].get<std::string>());
        }
        if (j.contains("level")) {
            if (!j["level"].is_number_integer())
                throw Error(ErrorKind::BadLabel, "manifest line " + std::to_string(line_no) + ": level must be an integer");
            int level = j["level"].get<int>();
            if (level < 1 || level > 3)
                throw Error(ErrorKind::BadLabel,
                            "manifest line " + std::to_string(line_no) + ": level " + std::to_string(level) +
                                " outside {1,2,3}");
            if (!entry.emotion)
                throw Error(ErrorKind::BadLabel,
                            "manifest line " + std::to_string(line_no) + ": level given without emotion");
            entry.level = level;
        }
        if (j.contains("subject_id")) entry.subject_id = j["subject_id"].get<std::string>();

        // Neutral data exists only at level 1; an absent neutral level defaults to it.
        if (entry.emotion == Emotion::Neutral) {
            if (entry.level && *entry.level != 1)
                throw Error(ErrorKind::BadLabel,
                            "manifest line " + std::to_string(line_no) + ": neutral sequences carry level 1");
            entry.level = 1;
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

/// Loads and labels every sequence referenced by a manifest, preserving
/// manifest order. `clamped_total`, when given, accumulates the per-file
/// clamp counters.
inline std::vector<AUSequence> load_catalog(const std::filesystem::path& manifest_path,
                                            std::int64_t* clamped_total = nullptr) {
    auto entries = parse_manifest(read_file(manifest_path));
    const auto base = manifest_path.has_parent_path() ? manifest_path.parent_path()
                                                      : std::filesystem::path(".");
    std::vector<AUSequence> catalog;
    catalog.reserve(entries.size());
    for (const CatalogEntry& entry : entries) {
        std::filesystem::path p(entry.path);
        if (p.is_relative()) p = base / p;
        ParseReport report;
        AUSequence seq = parse_au_csv(read_file(p), &report);
        if (clamped_total) *clamped_total += report.clamped_values;
        seq.emotion = entry.emotion;
        seq.level = entry.level;
        seq.subject_id = entry.subject_id;
        seq.source = p.string();
        catalog.push_back(std::move(seq));
    }
    return catalog;
}

} // namespace les
