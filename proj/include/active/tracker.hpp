#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "active/head.hpp"

namespace active {

struct TrackPoint {
    int frame = 0;
    double cx = 0.0, cy = 0.0;
};

struct Track {
    int id = 0;
    int class_id = 0;
    std::vector<TrackPoint> points;  // strictly increasing frame indices
};

// Greedy nearest-neighbor matching between two adjacent frames: repeatedly
// commit the globally closest unmatched same-class pair with center
// distance <= gate_px; ties prefer the lower index in the first frame, then
// the second. Returns (index_t, index_t1) pairs forming a one-to-one
// partial matching.
std::vector<std::pair<int, int>> match_adjacent(const std::vector<Detection>& dets_t,
                                                const std::vector<Detection>& dets_t1,
                                                double gate_px);

// Chains per-frame detections into tracks with the same greedy matcher,
// matching each frame against the last points of tracks whose last
// detection is at most max_gap frames stale. Unmatched detections open new
// tracks; tracks shorter than min_len are discarded.
std::vector<Track> build_tracks(const std::vector<std::vector<Detection>>& frames,
                                double gate_px, int max_gap, int min_len);

struct MotilityValues {
    double vsl = 0.0, vcl = 0.0, vap = 0.0;  // um/s
};

// Motility of one track: straight-line, curvilinear, and average-path
// velocity (the latter over an endpoint-pinned clamped moving average of
// width smooth_w). Absent for tracks with fewer than two points.
std::optional<MotilityValues> motility(const Track& track, double fps, double um_per_px,
                                       int smooth_w = 5);

struct TrackMotility {
    int track_id = 0;
    int class_id = 0;
    MotilityValues values;
};

struct MotilityReport {
    std::vector<TrackMotility> tracks;
    std::optional<MotilityValues> means;  // absent when no track qualifies
    int skipped_short = 0;
};

MotilityReport motility_report(const std::vector<Track>& tracks, double fps,
                               double um_per_px, int smooth_w = 5);

// Relative error of the computed per-video means against a reference, as
// percentages; absent for metrics whose reference mean is zero or when
// either report has no means.
struct ErrorRates {
    std::optional<double> vsl, vcl, vap;
};

ErrorRates error_rates(const MotilityReport& computed, const MotilityReport& reference);

// One JSON object per line: {"track_id":..,"class_id":..,"points":[[frame,cx,cy],..]}.
std::string tracks_jsonl(const std::vector<Track>& tracks);

// CSV: track_id, vsl, vcl, vap rows plus a trailing mean row when defined.
std::string motility_csv(const MotilityReport& report);

}  // namespace active
