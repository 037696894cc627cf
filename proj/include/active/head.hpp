#pragma once

#include <utility>
#include <vector>

#include "active/box.hpp"
#include "active/rng.hpp"
#include "active/tensor.hpp"

namespace active {

struct Detection {
    Box box;
    double confidence = 0.0;
    std::vector<double> class_probs;
    int class_id = 0;
};

using AnchorWh = std::pair<double, double>;  // prior extent in pixels

// Decodes one scale's raw head output for one batch image into one
// Detection per (cell, anchor). Channel layout per anchor:
// (t_x, t_y, t_w, t_h, C, P_0 .. P_{nc-1}).
//   b_x = (sigmoid(t_x) + C_x) * stride      b_w = P_w * exp(t_w)
// Boxes are clipped to [0, image_size] after decoding.
std::vector<Detection> decode_scale(const Tensor& raw, int image_index,
                                    const std::vector<AnchorWh>& anchors, int stride,
                                    int image_size, int num_classes = 2);

// Per-class greedy suppression: drop detections below conf_thresh, keep the
// most confident box, suppress others with DIoU above diou_thresh, repeat.
// Output ordered by confidence descending. Idempotent.
std::vector<Detection> diou_nms(const std::vector<Detection>& dets, double conf_thresh,
                                double diou_thresh);

// The fixed prior set, scaled from its native 416 to image_size, ascending area.
std::vector<AnchorWh> fallback_anchors(int image_size);

// Seeded k-means (k clusters, 1-IoU distance on origin-centered boxes) over
// observed box extents; ascending area. Falls back to the fixed set when
// there are fewer than k distinct extents.
std::vector<AnchorWh> kmeans_anchors(const std::vector<AnchorWh>& boxes_wh, int k,
                                     int image_size, Rng& rng);

}  // namespace active
