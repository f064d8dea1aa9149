#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "farfield/error.hpp"

namespace farfield {

/// One speaker-attributed time span.
struct Segment {
    std::string session;
    std::string speaker;
    double onset = 0.0;
    double duration = 0.0;

    double end() const { return onset + duration; }
    bool operator==(const Segment&) const = default;
};

/// Speaker-attributed segments sorted by (onset, speaker).
struct SegmentList {
    std::vector<Segment> entries;

    SegmentList() = default;
    explicit SegmentList(std::vector<Segment> e) : entries(std::move(e)) { sort(); }

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
    auto begin() const { return entries.begin(); }
    auto end() const { return entries.end(); }

    void sort() {
        std::stable_sort(entries.begin(), entries.end(), [](const Segment& a, const Segment& b) {
            return std::tie(a.onset, a.speaker, a.duration) < std::tie(b.onset, b.speaker, b.duration);
        });
    }

    void add(Segment s) {
        entries.push_back(std::move(s));
        sort();
    }

    /// Sorted unique speaker ids.
    std::vector<std::string> speakers() const {
        std::set<std::string> s;
        for (const auto& e : entries) s.insert(e.speaker);
        return {s.begin(), s.end()};
    }

    std::vector<std::string> sessions() const {
        std::set<std::string> s;
        for (const auto& e : entries) s.insert(e.session);
        return {s.begin(), s.end()};
    }

    /// The single session id shared by all entries; empty for an empty list.
    std::string session() const {
        const auto s = sessions();
        if (s.size() > 1) throw PreconditionError("segment list spans " + std::to_string(s.size()) + " sessions");
        return s.empty() ? std::string{} : s.front();
    }

    SegmentList for_speaker(const std::string& spk) const {
        SegmentList out;
        for (const auto& e : entries)
            if (e.speaker == spk) out.entries.push_back(e);
        return out;
    }

    double total_duration() const {
        double d = 0.0;
        for (const auto& e : entries) d += e.duration;
        return d;
    }

    void validate() const {
        for (const auto& e : entries) {
            require(e.duration > 0.0, "segment duration must be positive");
            require(e.onset >= 0.0, "segment onset must be non-negative");
            require(!e.speaker.empty(), "speaker id must be non-empty");
        }
    }

    bool operator==(const SegmentList&) const = default;
};

}  // namespace farfield
