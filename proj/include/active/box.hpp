#pragma once

#include <algorithm>
#include <cmath>

namespace active {

// Axis-aligned box, center format, pixel units.
struct Box {
    double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

    double x1() const { return cx - w * 0.5; }
    double y1() const { return cy - h * 0.5; }
    double x2() const { return cx + w * 0.5; }
    double y2() const { return cy + h * 0.5; }
    double area() const { return w * h; }

    static Box from_corners(double x1, double y1, double x2, double y2) {
        return {(x1 + x2) * 0.5, (y1 + y2) * 0.5, x2 - x1, y2 - y1};
    }
};

// A labeled ground-truth box.
struct GtBox {
    Box box;
    int class_id = 0;
};

inline double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
    const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// IoU minus the squared center distance over the squared enclosing-box
// diagonal. Always <= IoU, equals 1 only for identical boxes.
inline double diou(const Box& a, const Box& b) {
    const double base = iou(a, b);
    const double ex = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
    const double ey = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
    const double c2 = ex * ex + ey * ey;
    if (c2 <= 0.0) return base;
    const double dx = a.cx - b.cx, dy = a.cy - b.cy;
    return base - (dx * dx + dy * dy) / c2;
}

inline Box clip_box(const Box& b, double image_size) {
    const double x1 = std::clamp(b.x1(), 0.0, image_size);
    const double y1 = std::clamp(b.y1(), 0.0, image_size);
    const double x2 = std::clamp(b.x2(), 0.0, image_size);
    const double y2 = std::clamp(b.y2(), 0.0, image_size);
    return Box::from_corners(x1, y1, x2, y2);
}

}  // namespace active
