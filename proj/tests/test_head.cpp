#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "active/box.hpp"
#include "active/head.hpp"
#include "active/rng.hpp"
#include "oracles/nms_oracle.hpp"

using namespace active;

namespace {

Tensor raw_grid(int s, double fill = 0.0) { return Tensor::full({1, 21, s, s}, fill); }

const std::vector<AnchorWh> kTestAnchors = {{20.0, 30.0}, {40.0, 40.0}, {80.0, 60.0}};

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].confidence != b[i].confidence || a[i].class_id != b[i].class_id) return false;
        if (a[i].box.cx != b[i].box.cx || a[i].box.cy != b[i].box.cy) return false;
        if (a[i].box.w != b[i].box.w || a[i].box.h != b[i].box.h) return false;
    }
    return true;
}

Detection make_det(double cx, double cy, double w, double h, double conf, int cls) {
    Detection d;
    d.box = {cx, cy, w, h};
    d.confidence = conf;
    d.class_probs = {cls == 0 ? conf : 1 - conf, cls == 1 ? conf : 1 - conf};
    d.class_id = cls;
    return d;
}

}  // namespace

TEST_CASE("decode at zero offsets centers on the cell middle") {
    Tensor raw = raw_grid(13);
    auto dets = decode_scale(raw, 0, kTestAnchors, 32, 416);
    REQUIRE(dets.size() == 13u * 13 * 3);
    CHECK(dets[0].box.cx == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(dets[0].box.cy == doctest::Approx(16.0).epsilon(1e-12));
    // t_w = t_h = 0 reproduces the prior extents
    CHECK(dets[0].box.w == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(dets[0].box.h == doctest::Approx(30.0).epsilon(1e-12));
    // away from the border no clipping applies
    const Detection& mid = dets[(6 * 13 + 6) * 3 + 1];
    CHECK(mid.box.w == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(mid.box.h == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(dets[0].confidence == 0.5);
    CHECK(dets[0].class_probs[0] == 0.5);
}

TEST_CASE("decode frozen value: t_x=2 at cell column 5, stride 8") {
    Tensor raw = raw_grid(52);
    raw.at(0, 0, 0, 5) = 2.0;  // anchor 0, t_x channel
    auto dets = decode_scale(raw, 0, kTestAnchors, 8, 416);
    const Detection& d = dets[(0 * 52 + 5) * 3 + 0];
    CHECK(d.box.cx == doctest::Approx(47.04637662382306).epsilon(1e-12));
}

TEST_CASE("decoded centers lie strictly inside the image") {
    Rng rng(51);
    Tensor raw = raw_grid(13);
    for (long long i = 0; i < raw.numel(); ++i) raw.data()[i] = rng.uniform(-10.0, 10.0);
    for (const Detection& d : decode_scale(raw, 0, kTestAnchors, 32, 416)) {
        CHECK(d.box.cx > 0.0);
        CHECK(d.box.cx < 416.0);
        CHECK(d.box.cy > 0.0);
        CHECK(d.box.cy < 416.0);
        CHECK(d.confidence > 0.0);
        CHECK(d.confidence < 1.0);
    }
}

TEST_CASE("decode clips huge boxes to image bounds") {
    Tensor raw = raw_grid(13);
    raw.at(0, 2, 6, 6) = 10.0;  // t_w
    raw.at(0, 3, 6, 6) = 10.0;  // t_h
    auto dets = decode_scale(raw, 0, kTestAnchors, 32, 416);
    const Detection& d = dets[(6 * 13 + 6) * 3 + 0];
    CHECK(d.box.x1() >= 0.0);
    CHECK(d.box.y1() >= 0.0);
    CHECK(d.box.x2() <= 416.0);
    CHECK(d.box.y2() <= 416.0);
    CHECK(d.box.w > 0.0);
}

TEST_CASE("decode validates shapes") {
    Tensor bad_c = Tensor::zeros({1, 20, 13, 13});
    CHECK_THROWS_AS(decode_scale(bad_c, 0, kTestAnchors, 32, 416), ShapeError);
    Tensor raw = raw_grid(13);
    CHECK_THROWS_AS(decode_scale(raw, 0, kTestAnchors, 16, 416), ShapeError);
    CHECK_THROWS_AS(decode_scale(raw, 1, kTestAnchors, 32, 416), ShapeError);
}

TEST_CASE("iou and diou frozen examples") {
    const Box a = Box::from_corners(0, 0, 2, 2);
    const Box b = Box::from_corners(1, 0, 3, 2);
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(diou(a, a) == 1.0);
    CHECK(diou(a, b) == doctest::Approx(1.0 / 3.0 - 1.0 / 13.0).epsilon(1e-14));

    const Box far = {1000.0, 0.5, 2.0, 2.0};
    const Box at0 = {1.0, 0.5, 2.0, 2.0};
    CHECK(iou(at0, far) == 0.0);
    CHECK(diou(at0, far) < -0.99);
    CHECK(diou(at0, far) > -1.0);
}

TEST_CASE("diou is symmetric and never exceeds iou") {
    Rng rng(52);
    for (int t = 0; t < 500; ++t) {
        const Box a = {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(1, 50), rng.uniform(1, 50)};
        const Box b = {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(1, 50), rng.uniform(1, 50)};
        CHECK(diou(a, b) == diou(b, a));
        CHECK(diou(a, b) <= iou(a, b));
        CHECK(diou(a, b) > -1.0);
        CHECK(diou(a, b) <= 1.0);
    }
}

TEST_CASE("nms keeps the best of identical boxes and all disjoint boxes") {
    auto d1 = make_det(50, 50, 20, 20, 0.9, 0);
    auto d2 = make_det(50, 50, 20, 20, 0.8, 0);
    auto kept = diou_nms({d2, d1}, 0.5, 0.45);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].confidence == 0.9);

    auto far1 = make_det(20, 20, 10, 10, 0.7, 0);
    auto far2 = make_det(200, 200, 10, 10, 0.6, 0);
    kept = diou_nms({far2, far1}, 0.5, 0.45);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].confidence == 0.7);
}

TEST_CASE("nms suppresses per class independently") {
    auto a = make_det(50, 50, 20, 20, 0.9, 0);
    auto b = make_det(50, 50, 20, 20, 0.8, 1);
    auto kept = diou_nms({a, b}, 0.1, 0.45);
    CHECK(kept.size() == 2);
}

TEST_CASE("nms matches the brute-force greedy oracle") {
    Rng rng(53);
    const double cts[] = {0.0, 0.3, 0.5};
    const double dts[] = {-0.2, 0.45, 0.9};
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Detection> dets;
        const int n = 1 + static_cast<int>(rng.uniform_int(10));
        for (int i = 0; i < n; ++i)
            dets.push_back(make_det(rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(5, 40),
                                    rng.uniform(5, 40), rng.uniform(0.01, 0.99),
                                    static_cast<int>(rng.uniform_int(2))));
        const double ct = cts[trial % 3], dt = dts[(trial / 3) % 3];
        auto got = diou_nms(dets, ct, dt);
        auto want = oracle::nms_greedy(dets, ct, dt);
        CAPTURE(trial);
        CHECK(same_detections(got, want));

        // idempotence and pairwise separation
        CHECK(same_detections(diou_nms(got, ct, dt), got));
        for (size_t i = 0; i + 1 < got.size(); ++i) {
            CHECK(got[i].confidence >= got[i + 1].confidence);
            for (size_t j = i + 1; j < got.size(); ++j)
                if (got[i].class_id == got[j].class_id)
                    CHECK(diou(got[i].box, got[j].box) <= dt);
        }
    }
}

TEST_CASE("fallback anchors are the fixed set scaled by image size") {
    auto a416 = fallback_anchors(416);
    REQUIRE(a416.size() == 9);
    CHECK(a416[0] == AnchorWh{10.0, 13.0});
    CHECK(a416[8] == AnchorWh{373.0, 326.0});
    auto a208 = fallback_anchors(208);
    CHECK(a208[0].first == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(a208[0].second == doctest::Approx(6.5).epsilon(1e-14));
    for (int i = 1; i < 9; ++i)
        CHECK(a416[i].first * a416[i].second >= a416[i - 1].first * a416[i - 1].second);
}

TEST_CASE("kmeans recovers well-separated clusters deterministically") {
    std::vector<AnchorWh> boxes;
    Rng gen(54);
    const AnchorWh centers[3] = {{10, 12}, {40, 35}, {100, 90}};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 20; ++i)
            boxes.emplace_back(centers[c].first + gen.uniform(-1, 1),
                               centers[c].second + gen.uniform(-1, 1));
    Rng r1(5), r2(5);
    auto k1 = kmeans_anchors(boxes, 3, 416, r1);
    auto k2 = kmeans_anchors(boxes, 3, 416, r2);
    REQUIRE(k1.size() == 3);
    CHECK(k1 == k2);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(k1[c].first - centers[c].first) < 2.0);
        CHECK(std::abs(k1[c].second - centers[c].second) < 2.0);
    }
}

TEST_CASE("kmeans falls back when there are too few distinct extents") {
    std::vector<AnchorWh> boxes = {{10, 10}, {10, 10}, {20, 20}};
    Rng rng(55);
    auto got = kmeans_anchors(boxes, 9, 416, rng);
    CHECK(got == fallback_anchors(416));
}
