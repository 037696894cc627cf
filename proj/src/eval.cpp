#include "active/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "active/errors.hpp"

namespace active {

double iou_box(const Box& a, const Box& b, int* warnings) {
    if (a.area() <= 0.0 || b.area() <= 0.0) {
        if (warnings) ++*warnings;
        return 0.0;
    }
    return iou(a, b);
}

ClassEval average_precision(const std::vector<ScoredDet>& dets, const std::vector<GtObs>& gts,
                            double iou_thresh, int* warnings) {
    ClassEval out;
    out.annotations = static_cast<int>(gts.size());

    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        if (dets[i].conf != dets[j].conf) return dets[i].conf > dets[j].conf;
        if (dets[i].image != dets[j].image) return dets[i].image < dets[j].image;
        return i < j;
    });

    // gt indices per image, in input order.
    std::map<int, std::vector<int>> gts_by_image;
    for (size_t g = 0; g < gts.size(); ++g)
        gts_by_image[gts[g].image].push_back(static_cast<int>(g));
    std::vector<char> matched(gts.size(), 0);

    std::vector<char> is_tp(order.size(), 0);
    int tp = 0;
    for (size_t r = 0; r < order.size(); ++r) {
        const ScoredDet& d = dets[order[r]];
        int best_g = -1;
        double best = -1.0;
        auto it = gts_by_image.find(d.image);
        if (it != gts_by_image.end())
            for (int g : it->second) {
                if (matched[g]) continue;
                const double v = iou_box(d.box, gts[g].box, warnings);
                if (v < iou_thresh) continue;
                // Ascending index scan: a strict improvement keeps the
                // lowest gt index on ties.
                if (v > best) {
                    best = v;
                    best_g = g;
                }
            }
        if (best_g >= 0) {
            matched[best_g] = 1;
            is_tp[r] = 1;
            ++tp;
        }
        out.curve.emplace_back(
            out.annotations > 0 ? static_cast<double>(tp) / out.annotations : 0.0,
            static_cast<double>(tp) / static_cast<double>(r + 1));
    }
    out.tp = tp;
    out.fp = static_cast<int>(order.size()) - tp;
    out.fn = out.annotations - tp;

    if (out.annotations == 0) return out;  // ap stays absent

    // Right-envelope: at each recovered gt take the best precision attained
    // at that rank or later.
    double ap_sum = 0.0;
    double envelope = 0.0;
    std::vector<double> pmax(order.size());
    for (size_t r = order.size(); r-- > 0;) {
        envelope = std::max(envelope, out.curve[r].second);
        pmax[r] = envelope;
    }
    for (size_t r = 0; r < order.size(); ++r)
        if (is_tp[r]) ap_sum += pmax[r];
    out.ap = ap_sum / out.annotations;
    return out;
}

EvalReport ap50_report(const std::vector<ScoredDet>& dets, const std::vector<GtObs>& gts,
                       int num_classes, double iou_thresh) {
    if (num_classes < 1) throw InputError("num_classes must be positive");
    for (const ScoredDet& d : dets)
        if (d.class_id < 0 || d.class_id >= num_classes)
            throw InputError("detection class id " + std::to_string(d.class_id) +
                             " outside [0, " + std::to_string(num_classes) + ")");
    for (const GtObs& g : gts)
        if (g.class_id < 0 || g.class_id >= num_classes)
            throw InputError("annotation class id " + std::to_string(g.class_id) +
                             " outside [0, " + std::to_string(num_classes) + ")");

    EvalReport report;
    report.detections = static_cast<int>(dets.size());
    double ap_sum = 0.0;
    int ap_count = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<ScoredDet> cd;
        std::vector<GtObs> cg;
        for (const ScoredDet& d : dets)
            if (d.class_id == c) cd.push_back(d);
        for (const GtObs& g : gts)
            if (g.class_id == c) cg.push_back(g);
        ClassEval ce = average_precision(cd, cg, iou_thresh, &report.degenerate_boxes);
        if (ce.ap) {
            ap_sum += *ce.ap;
            ++ap_count;
        }
        report.per_class.push_back(std::move(ce));
    }
    if (ap_count > 0) report.mean_ap = ap_sum / ap_count;
    return report;
}

std::string eval_class_name(int class_id, int num_classes) {
    if (num_classes == 2) return class_id == 0 ? "sperm" : "impurity";
    return "class" + std::to_string(class_id);
}

std::string eval_report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["detections"] = report.detections;
    j["degenerate_boxes"] = report.degenerate_boxes;
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    const int nc = static_cast<int>(report.per_class.size());
    for (int c = 0; c < nc; ++c) {
        const ClassEval& ce = report.per_class[c];
        nlohmann::ordered_json cj;
        cj["class"] = eval_class_name(c, nc);
        cj["annotations"] = ce.annotations;
        cj["tp"] = ce.tp;
        cj["fp"] = ce.fp;
        cj["fn"] = ce.fn;
        if (ce.ap)
            cj["ap50"] = *ce.ap;
        else
            cj["ap50"] = nullptr;
        classes.push_back(std::move(cj));
    }
    j["classes"] = std::move(classes);
    if (report.mean_ap)
        j["mean_ap50"] = *report.mean_ap;
    else
        j["mean_ap50"] = nullptr;
    return j.dump(2) + "\n";
}

std::string eval_report_csv(const EvalReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "class,ap50\n";
    const int nc = static_cast<int>(report.per_class.size());
    for (int c = 0; c < nc; ++c) {
        os << eval_class_name(c, nc) << ',';
        if (report.per_class[c].ap)
            os << *report.per_class[c].ap;
        else
            os << "absent";
        os << '\n';
    }
    return os.str();
}

}  // namespace active
