#include "active/loss.hpp"

#include <cmath>
#include <string>

#include "active/errors.hpp"
#include "active/ops.hpp"

namespace active {

namespace {

// IoU of two boxes both centered at the origin.
double wh_iou(double w1, double h1, double w2, double h2) {
    const double inter = std::min(w1, w2) * std::min(h1, h2);
    const double uni = w1 * h1 + w2 * h2 - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double logit(double p) {
    const double q = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(q / (1.0 - q));
}

}  // namespace

AnchorGrid split_anchors(const std::vector<AnchorWh>& anchors9) {
    if (anchors9.size() != kNumScales * kAnchorsPerScale)
        throw InputError("expected " + std::to_string(kNumScales * kAnchorsPerScale) +
                         " anchors, got " + std::to_string(anchors9.size()));
    AnchorGrid grid;
    for (int k = 0; k < kNumScales; ++k)
        for (int a = 0; a < kAnchorsPerScale; ++a)
            grid[k][a] = anchors9[(kNumScales - 1 - k) * kAnchorsPerScale + a];
    return grid;
}

TargetAssignment assign_targets(const std::vector<GtBox>& gts, const AnchorGrid& anchors,
                                int image_size, double ignore_thresh) {
    if (image_size <= 0 || image_size % kStrides[0] != 0)
        throw InputError("image size must be a positive multiple of " +
                         std::to_string(kStrides[0]));
    TargetAssignment out;
    for (int k = 0; k < kNumScales; ++k) {
        const int s = image_size / kStrides[k];
        out.ignored[k].assign(static_cast<size_t>(kAnchorsPerScale) * s * s, 0);
    }

    for (size_t gi = 0; gi < gts.size(); ++gi) {
        const Box& g = gts[gi].box;
        if (g.w <= 0.0 || g.h <= 0.0) {
            ++out.skipped_degenerate;
            continue;
        }
        int best_k = 0, best_a = 0;
        double best = -1.0;
        for (int k = 0; k < kNumScales; ++k)
            for (int a = 0; a < kAnchorsPerScale; ++a) {
                const double v = wh_iou(g.w, g.h, anchors[k][a].first, anchors[k][a].second);
                if (v > best) {
                    best = v;
                    best_k = k;
                    best_a = a;
                }
            }
        const int stride = kStrides[best_k];
        const int s = image_size / stride;
        AnchorAssignment asg;
        asg.scale = best_k;
        asg.anchor = best_a;
        asg.cx = std::min(static_cast<int>(g.cx / stride), s - 1);
        asg.cy = std::min(static_cast<int>(g.cy / stride), s - 1);
        asg.tx = logit(g.cx / stride - asg.cx);
        asg.ty = logit(g.cy / stride - asg.cy);
        asg.tw = std::log(g.w / anchors[best_k][best_a].first);
        asg.th = std::log(g.h / anchors[best_k][best_a].second);
        asg.class_id = gts[gi].class_id;
        asg.gt_index = static_cast<int>(gi);
        out.positives.push_back(asg);
    }

    // Ignore pass: an anchor prior placed at its cell center that overlaps
    // any gt above the threshold is excluded from the negative objectness
    // term unless it is a positive.
    for (int k = 0; k < kNumScales; ++k) {
        const int stride = kStrides[k];
        const int s = image_size / stride;
        for (const GtBox& gt : gts) {
            if (gt.box.w <= 0.0 || gt.box.h <= 0.0) continue;
            for (int a = 0; a < kAnchorsPerScale; ++a) {
                // The prior only clears the threshold near the gt center;
                // restrict the scan to cells the prior can reach.
                const double rx = (gt.box.w + anchors[k][a].first) * 0.5;
                const double ry = (gt.box.h + anchors[k][a].second) * 0.5;
                const int x0 = std::max(0, static_cast<int>((gt.box.cx - rx) / stride) - 1);
                const int x1 = std::min(s - 1, static_cast<int>((gt.box.cx + rx) / stride) + 1);
                const int y0 = std::max(0, static_cast<int>((gt.box.cy - ry) / stride) - 1);
                const int y1 = std::min(s - 1, static_cast<int>((gt.box.cy + ry) / stride) + 1);
                for (int cy = y0; cy <= y1; ++cy)
                    for (int cx = x0; cx <= x1; ++cx) {
                        Box prior{(cx + 0.5) * stride, (cy + 0.5) * stride,
                                  anchors[k][a].first, anchors[k][a].second};
                        if (iou(prior, gt.box) > ignore_thresh)
                            out.ignored[k][(static_cast<size_t>(a) * s + cy) * s + cx] = 1;
                    }
            }
        }
    }
    for (const AnchorAssignment& p : out.positives) {
        const int s = image_size / kStrides[p.scale];
        out.ignored[p.scale][(static_cast<size_t>(p.anchor) * s + p.cy) * s + p.cx] = 0;
    }
    return out;
}

LossParts detection_loss(const std::array<Tensor, kNumScales>& raw,
                         const std::vector<TargetAssignment>& targets,
                         const AnchorGrid& anchors, int image_size, int num_classes) {
    const int block = 5 + num_classes;
    const int batch = raw[0].defined() ? raw[0].shape().n : 0;
    if (static_cast<int>(targets.size()) != batch)
        throw ShapeError("detection_loss: " + std::to_string(targets.size()) +
                         " assignments for batch of " + std::to_string(batch));

    std::vector<Tensor> loc_terms, conf_terms, cls_terms;
    int total_positives = 0;

    for (int k = 0; k < kNumScales; ++k) {
        if (!raw[k].defined()) throw InputError("detection_loss: missing scale output");
        const Shape& sh = raw[k].shape();
        const int stride = kStrides[k];
        const int s = image_size / stride;
        if (sh.c != kAnchorsPerScale * block || sh.h != s || sh.w != s || sh.n != batch)
            throw ShapeError("detection_loss: scale " + std::to_string(k) +
                             " expects " + std::to_string(kAnchorsPerScale * block) + "x" +
                             std::to_string(s) + "x" + std::to_string(s) + ", got " + sh.str());

        auto flat = [&](int n, int c, int y, int x) -> std::int64_t {
            return ((static_cast<std::int64_t>(n) * sh.c + c) * s + y) * s + x;
        };

        // Objectness: every anchor participates unless ignored; positives
        // carry target 1.
        std::vector<double> conf_t(raw[k].numel(), 0.0), conf_w(raw[k].numel(), 0.0);
        for (int n = 0; n < batch; ++n)
            for (int a = 0; a < kAnchorsPerScale; ++a)
                for (int y = 0; y < s; ++y)
                    for (int x = 0; x < s; ++x) {
                        const bool ign = targets[n].ignored[k][(static_cast<size_t>(a) * s + y) * s + x] != 0;
                        conf_w[flat(n, a * block + 4, y, x)] = ign ? 0.0 : 1.0;
                    }

        std::vector<double> cls_t, cls_w;
        std::vector<std::int64_t> ix, iy, iw, ih;
        std::vector<double> cxs, cys, pws, phs, gx1, gy1, gx2, gy2, garea;
        for (int n = 0; n < batch; ++n)
            for (const AnchorAssignment& p : targets[n].positives) {
                if (p.scale != k) continue;
                const int cbase = p.anchor * block;
                conf_t[flat(n, cbase + 4, p.cy, p.cx)] = 1.0;
                conf_w[flat(n, cbase + 4, p.cy, p.cx)] = 1.0;
                if (cls_t.empty()) {
                    cls_t.assign(raw[k].numel(), 0.0);
                    cls_w.assign(raw[k].numel(), 0.0);
                }
                for (int c = 0; c < num_classes; ++c) {
                    cls_t[flat(n, cbase + 5 + c, p.cy, p.cx)] = c == p.class_id ? 1.0 : 0.0;
                    cls_w[flat(n, cbase + 5 + c, p.cy, p.cx)] = 1.0;
                }
                ix.push_back(flat(n, cbase + 0, p.cy, p.cx));
                iy.push_back(flat(n, cbase + 1, p.cy, p.cx));
                iw.push_back(flat(n, cbase + 2, p.cy, p.cx));
                ih.push_back(flat(n, cbase + 3, p.cy, p.cx));
                cxs.push_back(p.cx * static_cast<double>(stride));
                cys.push_back(p.cy * static_cast<double>(stride));
                pws.push_back(anchors[k][p.anchor].first);
                phs.push_back(anchors[k][p.anchor].second);
                // Reconstruct the gt box from the stored raw-space targets.
                const double gw = anchors[k][p.anchor].first * std::exp(p.tw);
                const double gh = anchors[k][p.anchor].second * std::exp(p.th);
                const double gcx = (sigmoid_value(p.tx) + p.cx) * stride;
                const double gcy = (sigmoid_value(p.ty) + p.cy) * stride;
                gx1.push_back(gcx - gw * 0.5);
                gy1.push_back(gcy - gh * 0.5);
                gx2.push_back(gcx + gw * 0.5);
                gy2.push_back(gcy + gh * 0.5);
                garea.push_back(gw * gh);
            }

        conf_terms.push_back(bce_with_logits(raw[k], conf_t, conf_w));
        if (!cls_t.empty()) cls_terms.push_back(bce_with_logits(raw[k], cls_t, cls_w));

        const int npos = static_cast<int>(ix.size());
        total_positives += npos;
        if (npos == 0) continue;

        const Shape vs{1, 1, 1, npos};
        auto cvec = [&](const std::vector<double>& v) { return Tensor::from_data(vs, v); };

        Tensor bx = add2(affine(sigmoid(gather_flat(raw[k], ix)), stride, 0.0), cvec(cxs));
        Tensor by = add2(affine(sigmoid(gather_flat(raw[k], iy)), stride, 0.0), cvec(cys));
        Tensor bw = mul2(exp_clamped(gather_flat(raw[k], iw)), cvec(pws));
        Tensor bh = mul2(exp_clamped(gather_flat(raw[k], ih)), cvec(phs));
        Tensor bx1 = add2(bx, affine(bw, -0.5, 0.0));
        Tensor by1 = add2(by, affine(bh, -0.5, 0.0));
        Tensor bx2 = add2(bx, affine(bw, 0.5, 0.0));
        Tensor by2 = add2(by, affine(bh, 0.5, 0.0));
        Tensor iwid = relu(sub2(min2(bx2, cvec(gx2)), max2(bx1, cvec(gx1))));
        Tensor ihei = relu(sub2(min2(by2, cvec(gy2)), max2(by1, cvec(gy1))));
        Tensor inter = mul2(iwid, ihei);
        Tensor uni = sub2(add2(mul2(bw, bh), cvec(garea)), inter);
        Tensor iou_v = div2(inter, uni);
        loc_terms.push_back(sum_all(affine(iou_v, -1.0, 1.0)));
    }

    LossParts parts;
    parts.positives = total_positives;
    parts.loc = loc_terms.empty() ? Tensor::scalar(0.0)
                                  : (loc_terms.size() == 1 ? loc_terms[0] : add(loc_terms));
    parts.conf = conf_terms.size() == 1 ? conf_terms[0] : add(conf_terms);
    parts.cls = cls_terms.empty() ? Tensor::scalar(0.0)
                                  : (cls_terms.size() == 1 ? cls_terms[0] : add(cls_terms));
    parts.total = add({parts.loc, parts.conf, parts.cls});
    if (!std::isfinite(parts.total.item()))
        throw NumericalError("detection loss is not finite (loc=" +
                             std::to_string(parts.loc.item()) + " conf=" +
                             std::to_string(parts.conf.item()) + " cls=" +
                             std::to_string(parts.cls.item()) + ")");
    return parts;
}

}  // namespace active
