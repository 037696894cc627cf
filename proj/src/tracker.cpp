#include "active/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "active/errors.hpp"

namespace active {

namespace {

struct Candidate {
    double dist;
    int i, j;
    bool operator<(const Candidate& o) const {
        if (dist != o.dist) return dist < o.dist;
        if (i != o.i) return i < o.i;
        return j < o.j;
    }
};

// Greedy sweep over gated same-class pairs between two point sets.
std::vector<std::pair<int, int>> greedy_match(const std::vector<TrackPoint>& a,
                                              const std::vector<int>& a_class,
                                              const std::vector<TrackPoint>& b,
                                              const std::vector<int>& b_class,
                                              double gate_px) {
    std::vector<Candidate> cands;
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) {
            if (a_class[i] != b_class[j]) continue;
            const double d = std::hypot(a[i].cx - b[j].cx, a[i].cy - b[j].cy);
            if (d <= gate_px)
                cands.push_back({d, static_cast<int>(i), static_cast<int>(j)});
        }
    std::sort(cands.begin(), cands.end());
    std::vector<char> used_a(a.size(), 0), used_b(b.size(), 0);
    std::vector<std::pair<int, int>> pairs;
    for (const Candidate& c : cands) {
        if (used_a[c.i] || used_b[c.j]) continue;
        used_a[c.i] = 1;
        used_b[c.j] = 1;
        pairs.emplace_back(c.i, c.j);
    }
    return pairs;
}

void split_dets(const std::vector<Detection>& dets, std::vector<TrackPoint>& pts,
                std::vector<int>& cls) {
    pts.reserve(dets.size());
    cls.reserve(dets.size());
    for (const Detection& d : dets) {
        pts.push_back({0, d.box.cx, d.box.cy});
        cls.push_back(d.class_id);
    }
}

double dist2d(const TrackPoint& p, const TrackPoint& q) {
    return std::hypot(p.cx - q.cx, p.cy - q.cy);
}

}  // namespace

std::vector<std::pair<int, int>> match_adjacent(const std::vector<Detection>& dets_t,
                                                const std::vector<Detection>& dets_t1,
                                                double gate_px) {
    if (gate_px < 0.0) throw InputError("gate must be non-negative");
    std::vector<TrackPoint> pa, pb;
    std::vector<int> ca, cb;
    split_dets(dets_t, pa, ca);
    split_dets(dets_t1, pb, cb);
    return greedy_match(pa, ca, pb, cb, gate_px);
}

std::vector<Track> build_tracks(const std::vector<std::vector<Detection>>& frames,
                                double gate_px, int max_gap, int min_len) {
    if (gate_px < 0.0) throw InputError("gate must be non-negative");
    if (max_gap < 0) throw InputError("max_gap must be non-negative");
    if (min_len < 1) throw InputError("min_len must be positive");

    std::vector<Track> all;      // every track ever opened
    std::vector<int> active;     // indices into all, creation order
    for (size_t f = 0; f < frames.size(); ++f) {
        const int frame = static_cast<int>(f);
        // Retire tracks too stale to extend.
        std::vector<int> alive;
        for (int ti : active)
            if (frame - all[ti].points.back().frame <= max_gap + 1) alive.push_back(ti);
        active = std::move(alive);

        std::vector<TrackPoint> heads;
        std::vector<int> head_cls;
        for (int ti : active) {
            heads.push_back(all[ti].points.back());
            head_cls.push_back(all[ti].class_id);
        }
        std::vector<TrackPoint> cur;
        std::vector<int> cur_cls;
        split_dets(frames[f], cur, cur_cls);

        std::vector<std::pair<int, int>> pairs =
            greedy_match(heads, head_cls, cur, cur_cls, gate_px);
        std::vector<char> det_used(cur.size(), 0);
        for (const auto& [hi, dj] : pairs) {
            all[active[hi]].points.push_back({frame, cur[dj].cx, cur[dj].cy});
            det_used[dj] = 1;
        }
        for (size_t dj = 0; dj < cur.size(); ++dj) {
            if (det_used[dj]) continue;
            Track t;
            t.id = static_cast<int>(all.size());
            t.class_id = cur_cls[dj];
            t.points.push_back({frame, cur[dj].cx, cur[dj].cy});
            active.push_back(t.id);
            all.push_back(std::move(t));
        }
    }

    std::vector<Track> kept;
    for (Track& t : all)
        if (static_cast<int>(t.points.size()) >= min_len) kept.push_back(std::move(t));
    for (size_t i = 0; i < kept.size(); ++i) kept[i].id = static_cast<int>(i);
    return kept;
}

std::optional<MotilityValues> motility(const Track& track, double fps, double um_per_px,
                                       int smooth_w) {
    if (fps <= 0.0 || um_per_px <= 0.0)
        throw InputError("fps and um_per_px must be positive");
    if (smooth_w < 1 || smooth_w % 2 == 0) throw InputError("smooth_w must be odd");
    const std::vector<TrackPoint>& p = track.points;
    const size_t n = p.size();
    if (n < 2) return std::nullopt;
    for (size_t i = 1; i < n; ++i)
        if (p[i].frame <= p[i - 1].frame)
            throw InputError("track frames must be strictly increasing");

    const double duration = (p.back().frame - p.front().frame) / fps;
    MotilityValues v;
    v.vsl = dist2d(p.front(), p.back()) * um_per_px / duration;
    double path = 0.0;
    for (size_t i = 1; i < n; ++i) path += dist2d(p[i - 1], p[i]);
    v.vcl = path * um_per_px / duration;

    // Endpoint-pinned clamped moving average.
    const int h = smooth_w / 2;
    std::vector<TrackPoint> s(n);
    s.front() = p.front();
    s.back() = p.back();
    for (size_t i = 1; i + 1 < n; ++i) {
        const size_t lo = i >= static_cast<size_t>(h) ? i - h : 0;
        const size_t hi = std::min(n - 1, i + h);
        double sx = 0.0, sy = 0.0;
        for (size_t k = lo; k <= hi; ++k) {
            sx += p[k].cx;
            sy += p[k].cy;
        }
        const double cnt = static_cast<double>(hi - lo + 1);
        s[i] = {p[i].frame, sx / cnt, sy / cnt};
    }
    double smooth_path = 0.0;
    for (size_t i = 1; i < n; ++i) smooth_path += dist2d(s[i - 1], s[i]);
    v.vap = smooth_path * um_per_px / duration;
    return v;
}

MotilityReport motility_report(const std::vector<Track>& tracks, double fps,
                               double um_per_px, int smooth_w) {
    MotilityReport report;
    MotilityValues sum;
    for (const Track& t : tracks) {
        std::optional<MotilityValues> v = motility(t, fps, um_per_px, smooth_w);
        if (!v) {
            ++report.skipped_short;
            continue;
        }
        report.tracks.push_back({t.id, t.class_id, *v});
        sum.vsl += v->vsl;
        sum.vcl += v->vcl;
        sum.vap += v->vap;
    }
    if (!report.tracks.empty()) {
        const double n = static_cast<double>(report.tracks.size());
        report.means = MotilityValues{sum.vsl / n, sum.vcl / n, sum.vap / n};
    }
    return report;
}

ErrorRates error_rates(const MotilityReport& computed, const MotilityReport& reference) {
    ErrorRates e;
    if (!computed.means || !reference.means) return e;
    auto rate = [](double c, double r) -> std::optional<double> {
        if (r == 0.0) return std::nullopt;
        return std::abs(c - r) / r * 100.0;
    };
    e.vsl = rate(computed.means->vsl, reference.means->vsl);
    e.vcl = rate(computed.means->vcl, reference.means->vcl);
    e.vap = rate(computed.means->vap, reference.means->vap);
    return e;
}

std::string tracks_jsonl(const std::vector<Track>& tracks) {
    std::ostringstream os;
    for (const Track& t : tracks) {
        nlohmann::ordered_json j;
        j["track_id"] = t.id;
        j["class_id"] = t.class_id;
        nlohmann::ordered_json pts = nlohmann::ordered_json::array();
        for (const TrackPoint& p : t.points)
            pts.push_back(nlohmann::ordered_json::array({p.frame, p.cx, p.cy}));
        j["points"] = std::move(pts);
        os << j.dump() << '\n';
    }
    return os.str();
}

std::string motility_csv(const MotilityReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "track_id,vsl,vcl,vap\n";
    for (const TrackMotility& t : report.tracks)
        os << t.track_id << ',' << t.values.vsl << ',' << t.values.vcl << ','
           << t.values.vap << '\n';
    if (report.means)
        os << "mean," << report.means->vsl << ',' << report.means->vcl << ','
           << report.means->vap << '\n';
    return os.str();
}

}  // namespace active
