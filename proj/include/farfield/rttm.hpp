#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "farfield/error.hpp"
#include "farfield/segments.hpp"

namespace farfield {

namespace detail {

inline double parse_number(const std::string& tok, long line, const char* field) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
        throw FormatError(std::string("bad ") + field + " '" + tok + "'", line);
    return v;
}

}  // namespace detail

/// Reads SPEAKER lines of an RTTM document. Lines starting with ";;" and
/// blank lines are skipped; zero-length turns are dropped.
inline SegmentList parse_rttm(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    SegmentList out;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty() || tok[0].rfind(";;", 0) == 0) continue;
        if (tok[0] != "SPEAKER") throw FormatError("expected SPEAKER record, got '" + tok[0] + "'", lineno);
        if (tok.size() < 8) throw FormatError("SPEAKER record needs at least 8 fields", lineno);
        const double onset = detail::parse_number(tok[3], lineno, "onset");
        const double dur = detail::parse_number(tok[4], lineno, "duration");
        if (dur < 0.0) throw FormatError("negative duration " + tok[4], lineno);
        if (onset < 0.0) throw FormatError("negative onset " + tok[3], lineno);
        if (dur == 0.0) continue;
        out.entries.push_back({tok[1], tok[7], onset, dur});
    }
    out.sort();
    return out;
}

inline SegmentList read_rttm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_rttm(ss.str());
}

/// Renders times at millisecond precision, ordered by (onset, speaker).
inline std::string write_rttm(const SegmentList& segments) {
    SegmentList sorted = segments;
    sorted.sort();
    std::string out;
    char buf[64];
    for (const auto& s : sorted.entries) {
        out += "SPEAKER " + s.session + " 1 ";
        std::snprintf(buf, sizeof buf, "%.3f %.3f", s.onset, s.duration);
        out += buf;
        out += " <NA> <NA> " + s.speaker + " <NA> <NA>\n";
    }
    return out;
}

inline void save_rttm(const SegmentList& segments, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << write_rttm(segments);
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace farfield
