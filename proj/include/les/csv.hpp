#pragma once

// OpenFace-compatible AU intensity CSV ingestion and export.
// Comma separated, '.' decimal separator, header row required. The 17
// AU*_r intensity columns may appear in any order; extra columns are
// ignored. An optional `confidence` column is carried through.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "les/au.hpp"
#include "les/error.hpp"

namespace les {

/// Per-file ingestion diagnostics.
struct ParseReport {
    std::int64_t rows = 0;
    std::int64_t clamped_values = 0;  // AU cells pulled back into [0, 5]
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

// Splits a text buffer into lines, tolerating \r\n and a missing final newline.
inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    size_t start = 0;
    for (size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == '\n') {
            std::string_view line = text.substr(start, i - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            start = i + 1;
        }
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

} // namespace detail

/// Parses an OpenFace AU CSV into a sequence. Intensities are clamped to
/// [0, 5]; the number of clamped cells is reported through `report`.
/// frame_index is the 0-based data row ordinal, so ordering is preserved
/// and strictly increasing by construction.
inline AUSequence parse_au_csv(std::string_view text, ParseReport* report = nullptr) {
    auto lines = detail::split_lines(text);
    if (lines.empty()) throw Error(ErrorKind::EmptyInput, "no CSV content");

    auto header = detail::split_fields(lines[0]);
    std::array<int, kNumAu> au_col{};
    au_col.fill(-1);
    int confidence_col = -1;
    for (size_t c = 0; c < header.size(); ++c) {
        for (int i = 0; i < kNumAu; ++i)
            if (header[c] == au_column_name(i)) au_col[static_cast<size_t>(i)] = static_cast<int>(c);
        if (header[c] == "confidence") confidence_col = static_cast<int>(c);
    }
    for (int i = 0; i < kNumAu; ++i)
        if (au_col[static_cast<size_t>(i)] < 0)
            throw Error(ErrorKind::MissingColumn, au_column_name(i));

    if (lines.size() < 2) throw Error(ErrorKind::EmptyInput, "CSV has a header but no data rows");

    AUSequence seq;
    ParseReport local;
    for (size_t row = 1; row < lines.size(); ++row) {
        if (detail::trim(lines[row]).empty()) continue;  // stray blank line
        auto fields = detail::split_fields(lines[row]);
        if (fields.size() != header.size())
            throw Error(ErrorKind::MalformedRow,
                        "row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
        AUFrame frame;
        frame.frame_index = local.rows;
        for (int i = 0; i < kNumAu; ++i) {
            double v = 0.0;
            auto cell = fields[static_cast<size_t>(au_col[static_cast<size_t>(i)])];
            if (!detail::parse_double(cell, v))
                throw Error(ErrorKind::MalformedRow, "row " + std::to_string(row) + ": non-numeric value '" +
                                                         std::string(cell) + "' in " + au_column_name(i));
            if (!std::isfinite(v))
                throw Error(ErrorKind::MalformedRow,
                            "row " + std::to_string(row) + ": non-finite value in " + au_column_name(i));
            double clamped = std::clamp(v, kAuIntensityMin, kAuIntensityMax);
            if (clamped != v) ++local.clamped_values;
            frame.au[i] = clamped;
        }
        if (confidence_col >= 0) {
            auto cell = fields[static_cast<size_t>(confidence_col)];
            if (!cell.empty()) {  // empty cell means confidence absent for this row
                double v = 0.0;
                if (!detail::parse_double(cell, v))
                    throw Error(ErrorKind::MalformedRow,
                                "row " + std::to_string(row) + ": non-numeric confidence");
                double clamped = std::clamp(v, 0.0, 1.0);
                if (clamped != v) ++local.clamped_values;
                frame.confidence = clamped;
            }
        }
        seq.frames.push_back(frame);
        ++local.rows;
    }
    if (seq.frames.empty()) throw Error(ErrorKind::EmptyInput, "CSV has a header but no data rows");
    if (report) *report = local;
    return seq;
}

/// Formats a double losslessly (round-trips bit-exactly through parse).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Serializes a sequence back to an OpenFace-style CSV. Re-parsing the
/// result yields identical frames.
inline std::string write_au_csv(const AUSequence& seq) {
    std::string out = "frame,confidence";
    for (int i = 0; i < kNumAu; ++i) out += "," + au_column_name(i);
    out += "\n";
    for (const AUFrame& f : seq.frames) {
        out += std::to_string(f.frame_index + 1);
        out += ",";
        if (f.confidence) out += format_double(*f.confidence);
        for (int i = 0; i < kNumAu; ++i) out += "," + format_double(f.au[i]);
        out += "\n";
    }
    return out;
}

} // namespace les
