#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "active/box.hpp"

namespace active {

// A detection pooled across a dataset; image scopes the gt matching.
struct ScoredDet {
    Box box;
    int class_id = 0;
    double conf = 0.0;
    int image = 0;
};

struct GtObs {
    Box box;
    int class_id = 0;
    int image = 0;
};

// Intersection over union; a zero-area operand yields 0 and bumps *warnings
// when given.
double iou_box(const Box& a, const Box& b, int* warnings = nullptr);

struct ClassEval {
    int annotations = 0;
    int tp = 0, fp = 0, fn = 0;
    std::optional<double> ap;                      // absent when annotations == 0
    std::vector<std::pair<double, double>> curve;  // (recall, precision) per rank
};

struct EvalReport {
    std::vector<ClassEval> per_class;
    std::optional<double> mean_ap;  // mean over classes with a defined AP
    int detections = 0;             // detections considered
    int degenerate_boxes = 0;
};

// All-point interpolated AP for one class: detections sorted by confidence
// descending (ties: image, then input order), each matched greedily to the
// best unmatched same-image gt with IoU >= iou_thresh (ties: lowest gt
// index). AP sums the precision right-envelope at each recovered gt over
// the gt count; absent when there are no gts.
ClassEval average_precision(const std::vector<ScoredDet>& dets, const std::vector<GtObs>& gts,
                            double iou_thresh = 0.5, int* warnings = nullptr);

// Per-class AP at IoU 0.5 over detections pooled across images, plus the
// mean over defined classes. Rejects class ids outside [0, num_classes).
EvalReport ap50_report(const std::vector<ScoredDet>& dets, const std::vector<GtObs>& gts,
                       int num_classes = 2, double iou_thresh = 0.5);

// Class naming for reports: the two-class detector names its targets.
std::string eval_class_name(int class_id, int num_classes);

std::string eval_report_json(const EvalReport& report);
std::string eval_report_csv(const EvalReport& report);

}  // namespace active
