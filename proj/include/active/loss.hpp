#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "active/box.hpp"
#include "active/head.hpp"
#include "active/tensor.hpp"

namespace active {

inline constexpr int kNumScales = 3;
inline constexpr int kAnchorsPerScale = 3;
// Scale 0 is the coarsest grid.
inline constexpr std::array<int, kNumScales> kStrides{32, 16, 8};

using AnchorGrid = std::array<std::array<AnchorWh, kAnchorsPerScale>, kNumScales>;

// Splits a canonical 9-anchor list (ascending area) across scales; the
// coarsest scale takes the largest triple.
AnchorGrid split_anchors(const std::vector<AnchorWh>& anchors9);

// One ground truth mapped to its (scale, cell, anchor). Regression targets
// are in raw head space: the box decodes back to the gt exactly when the
// head emits these values.
struct AnchorAssignment {
    int scale = 0;
    int anchor = 0;
    int cx = 0, cy = 0;   // cell
    double tx = 0.0, ty = 0.0, tw = 0.0, th = 0.0;
    int class_id = 0;
    int gt_index = 0;
};

struct TargetAssignment {
    std::vector<AnchorAssignment> positives;
    // ignored[k][a*S*S + cy*S + cx]: anchor overlaps some gt above the
    // ignore threshold without being assigned; excluded from the negative
    // objectness term.
    std::array<std::vector<std::uint8_t>, kNumScales> ignored;
    int skipped_degenerate = 0;
};

// Assigns each gt to the (scale, anchor) whose prior has maximal IoU with
// the gt when both are centered at the origin; ties keep the lowest
// (scale, anchor) in scan order. Zero-area gts are skipped and counted.
TargetAssignment assign_targets(const std::vector<GtBox>& gts, const AnchorGrid& anchors,
                                int image_size, double ignore_thresh = 0.5);

struct LossParts {
    Tensor total;  // loc + conf + cls
    Tensor loc, conf, cls;
    int positives = 0;
};

// raw[k]: N x (3*(5+nc)) x S_k x S_k head outputs (logits), scale 0
// coarsest. targets[n] belongs to batch image n. Location term decodes each
// positive and sums 1 - IoU against its gt; objectness and class terms are
// binary cross-entropy on logits, with ignored anchors excluded from the
// objectness term. Terms are summed unweighted. Throws NumericalError if
// the result is not finite.
LossParts detection_loss(const std::array<Tensor, kNumScales>& raw,
                         const std::vector<TargetAssignment>& targets,
                         const AnchorGrid& anchors, int image_size, int num_classes = 2);

}  // namespace active
