#include "active/head.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "active/errors.hpp"
#include "active/ops.hpp"

namespace active {

std::vector<Detection> decode_scale(const Tensor& raw, int image_index,
                                    const std::vector<AnchorWh>& anchors, int stride,
                                    int image_size, int num_classes) {
    const Shape& s = raw.shape();
    const int per_anchor = 5 + num_classes;
    const int na = static_cast<int>(anchors.size());
    if (s.c != na * per_anchor)
        throw ShapeError("decode_scale: expected " + std::to_string(na * per_anchor) +
                         " channels for " + std::to_string(na) + " anchors, got " + std::to_string(s.c));
    if (s.h != s.w) throw ShapeError("decode_scale: non-square grid " + s.str());
    if (stride * s.h != image_size)
        throw ShapeError("decode_scale: stride " + std::to_string(stride) + " times grid " +
                         std::to_string(s.h) + " must equal image size " + std::to_string(image_size));
    if (image_index < 0 || image_index >= s.n)
        throw ShapeError("decode_scale: image index " + std::to_string(image_index) +
                         " out of range for batch " + std::to_string(s.n));

    std::vector<Detection> out;
    out.reserve(static_cast<size_t>(s.h) * s.w * na);
    for (int cy = 0; cy < s.h; ++cy)
        for (int cx = 0; cx < s.w; ++cx)
            for (int a = 0; a < na; ++a) {
                const int base = a * per_anchor;
                const double tx = raw.at(image_index, base + 0, cy, cx);
                const double ty = raw.at(image_index, base + 1, cy, cx);
                const double tw = raw.at(image_index, base + 2, cy, cx);
                const double th = raw.at(image_index, base + 3, cy, cx);

                Detection d;
                d.box.cx = (sigmoid_value(tx) + cx) * stride;
                d.box.cy = (sigmoid_value(ty) + cy) * stride;
                d.box.w = anchors[a].first * std::exp(std::min(tw, 40.0));
                d.box.h = anchors[a].second * std::exp(std::min(th, 40.0));
                d.box = clip_box(d.box, image_size);
                d.confidence = sigmoid_value(raw.at(image_index, base + 4, cy, cx));
                d.class_probs.resize(num_classes);
                for (int c = 0; c < num_classes; ++c)
                    d.class_probs[c] = sigmoid_value(raw.at(image_index, base + 5 + c, cy, cx));
                d.class_id = static_cast<int>(std::max_element(d.class_probs.begin(),
                                                               d.class_probs.end()) -
                                              d.class_probs.begin());
                out.push_back(std::move(d));
            }
    return out;
}

std::vector<Detection> diou_nms(const std::vector<Detection>& dets, double conf_thresh,
                                double diou_thresh) {
    struct Ranked {
        const Detection* det;
        size_t orig;
    };
    std::set<int> classes;
    for (const Detection& d : dets) classes.insert(d.class_id);

    std::vector<Ranked> survivors;
    for (int cls : classes) {
        std::vector<Ranked> pool;
        for (size_t i = 0; i < dets.size(); ++i)
            if (dets[i].class_id == cls && dets[i].confidence >= conf_thresh)
                pool.push_back({&dets[i], i});
        std::sort(pool.begin(), pool.end(), [](const Ranked& a, const Ranked& b) {
            if (a.det->confidence != b.det->confidence) return a.det->confidence > b.det->confidence;
            return a.orig < b.orig;
        });
        std::vector<bool> removed(pool.size(), false);
        for (size_t i = 0; i < pool.size(); ++i) {
            if (removed[i]) continue;
            survivors.push_back(pool[i]);
            for (size_t j = i + 1; j < pool.size(); ++j)
                if (!removed[j] && diou(pool[i].det->box, pool[j].det->box) > diou_thresh)
                    removed[j] = true;
        }
    }
    std::sort(survivors.begin(), survivors.end(), [](const Ranked& a, const Ranked& b) {
        if (a.det->confidence != b.det->confidence) return a.det->confidence > b.det->confidence;
        if (a.det->class_id != b.det->class_id) return a.det->class_id < b.det->class_id;
        return a.orig < b.orig;
    });
    std::vector<Detection> out;
    out.reserve(survivors.size());
    for (const Ranked& r : survivors) out.push_back(*r.det);
    return out;
}

std::vector<AnchorWh> fallback_anchors(int image_size) {
    static constexpr double base[9][2] = {{10, 13},   {16, 30},   {33, 23},
                                          {30, 61},   {62, 45},   {59, 119},
                                          {116, 90},  {156, 198}, {373, 326}};
    const double scale = static_cast<double>(image_size) / 416.0;
    std::vector<AnchorWh> out;
    out.reserve(9);
    for (const auto& wh : base) out.emplace_back(wh[0] * scale, wh[1] * scale);
    return out;
}

namespace {

// 1 - IoU between origin-centered boxes; the k-means metric.
double wh_distance(const AnchorWh& a, const AnchorWh& b) {
    const double inter = std::min(a.first, b.first) * std::min(a.second, b.second);
    const double uni = a.first * a.second + b.first * b.second - inter;
    return uni > 0.0 ? 1.0 - inter / uni : 1.0;
}

}  // namespace

std::vector<AnchorWh> kmeans_anchors(const std::vector<AnchorWh>& boxes_wh, int k,
                                     int image_size, Rng& rng) {
    if (k <= 0) throw InputError("kmeans_anchors: k must be positive");
    std::set<AnchorWh> distinct(boxes_wh.begin(), boxes_wh.end());
    if (static_cast<int>(distinct.size()) < k) return fallback_anchors(image_size);

    const size_t n = boxes_wh.size();
    std::vector<AnchorWh> centroids;
    centroids.reserve(static_cast<size_t>(k));

    // k-means++ seeding
    centroids.push_back(boxes_wh[rng.uniform_int(n)]);
    std::vector<double> best_d(n);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double d = wh_distance(boxes_wh[i], centroids[0]);
            for (size_t c = 1; c < centroids.size(); ++c)
                d = std::min(d, wh_distance(boxes_wh[i], centroids[c]));
            best_d[i] = d * d;
            total += best_d[i];
        }
        if (total <= 0.0) return fallback_anchors(image_size);
        double pick = rng.uniform() * total;
        size_t chosen = n - 1;
        for (size_t i = 0; i < n; ++i) {
            pick -= best_d[i];
            if (pick <= 0.0) {
                chosen = i;
                break;
            }
        }
        centroids.push_back(boxes_wh[chosen]);
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 50; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = wh_distance(boxes_wh[i], centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = wh_distance(boxes_wh[i], centroids[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        for (int c = 0; c < k; ++c) {
            double sw = 0.0, sh = 0.0;
            long long cnt = 0;
            for (size_t i = 0; i < n; ++i)
                if (assign[i] == c) {
                    sw += boxes_wh[i].first;
                    sh += boxes_wh[i].second;
                    ++cnt;
                }
            if (cnt > 0) {
                centroids[c] = {sw / cnt, sh / cnt};
            } else {
                centroids[c] = boxes_wh[rng.uniform_int(n)];
            }
        }
    }

    std::sort(centroids.begin(), centroids.end(), [](const AnchorWh& a, const AnchorWh& b) {
        const double aa = a.first * a.second, ab = b.first * b.second;
        if (aa != ab) return aa < ab;
        return a < b;
    });
    return centroids;
}

}  // namespace active
