#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "active/gradcheck.hpp"
#include "active/loss.hpp"
#include "active/model.hpp"
#include "active/ops.hpp"
#include "active/train.hpp"

using namespace active;

namespace {

AnchorGrid test_anchors() {
    // Ascending area: finest scale gets the smallest triple.
    return split_anchors({{4, 6}, {8, 8}, {10, 14}, {16, 16}, {20, 28}, {32, 24},
                          {40, 56}, {64, 64}, {96, 80}});
}

ModelConfig micro_model_config() {
    ModelConfig cfg;
    cfg.dbfen.stem_channels = 2;
    cfg.dbfen.expansion_ratio = 2;
    cfg.dbfen.se_reduction = 2;
    cfg.ccfpn.variant = 4;
    cfg.ccfpn.pyramid_width = 4;
    cfg.image_size = 64;
    cfg.init_seed = 5;
    return cfg;
}

std::vector<AnchorWh> nine_anchors() {
    return {{4, 6}, {8, 8}, {10, 14}, {16, 16}, {20, 28}, {32, 24},
            {40, 56}, {64, 64}, {96, 80}};
}

double bce_scalar(double logit, double target) {
    return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

// Writes the raw values that decode a positive exactly back to its gt, with
// saturated objectness and class logits.
void write_perfect(Tensor& raw, int block, const AnchorAssignment& p, int num_classes) {
    const int s = raw.shape().h;
    const int cb = p.anchor * block;
    raw.at(0, cb + 0, p.cy, p.cx) = p.tx;
    raw.at(0, cb + 1, p.cy, p.cx) = p.ty;
    raw.at(0, cb + 2, p.cy, p.cx) = p.tw;
    raw.at(0, cb + 3, p.cy, p.cx) = p.th;
    raw.at(0, cb + 4, p.cy, p.cx) = 40.0;
    for (int c = 0; c < num_classes; ++c)
        raw.at(0, cb + 5 + c, p.cy, p.cx) = c == p.class_id ? 40.0 : -40.0;
    (void)s;
}

}  // namespace

TEST_CASE("split_anchors hands the largest triple to the coarsest scale") {
    AnchorGrid g = test_anchors();
    CHECK(g[0][0] == AnchorWh{40, 56});
    CHECK(g[0][2] == AnchorWh{96, 80});
    CHECK(g[2][0] == AnchorWh{4, 6});
    CHECK(g[2][2] == AnchorWh{10, 14});
    CHECK_THROWS_AS(split_anchors({{1, 1}}), InputError);
}

TEST_CASE("gt matching an anchor prior exactly gets zero regression targets") {
    AnchorGrid anchors = test_anchors();
    // 16x16 gt centered in a cell of the middle scale (stride 16): cell
    // center of cell (1,1) is (24, 24).
    std::vector<GtBox> gts{{{24.0, 24.0, 16.0, 16.0}, 1}};
    TargetAssignment t = assign_targets(gts, anchors, 64);
    REQUIRE(t.positives.size() == 1);
    const AnchorAssignment& p = t.positives[0];
    CHECK(p.scale == 1);
    CHECK(p.anchor == 0);  // (16,16) prior
    CHECK(p.cx == 1);
    CHECK(p.cy == 1);
    CHECK(p.tx == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.ty == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.tw == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.th == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.class_id == 1);
}

TEST_CASE("16x16 gt picks the exact-match prior among 8/16/32") {
    AnchorGrid anchors;
    for (int k = 0; k < kNumScales; ++k)
        for (int a = 0; a < kAnchorsPerScale; ++a) anchors[k][a] = {1000.0 + a, 1000.0 + a};
    anchors[0][1] = {32, 32};
    anchors[1][2] = {16, 16};
    anchors[2][0] = {8, 8};
    std::vector<GtBox> gts{{{50.0, 50.0, 16.0, 16.0}, 0}};
    TargetAssignment t = assign_targets(gts, anchors, 96);
    REQUIRE(t.positives.size() == 1);
    CHECK(t.positives[0].scale == 1);
    CHECK(t.positives[0].anchor == 2);
}

TEST_CASE("assignment equals an exhaustive argmax oracle") {
    AnchorGrid anchors = test_anchors();
    Rng rng(404);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const double w = rng.uniform(2.0, 120.0);
        const double h = rng.uniform(2.0, 120.0);
        const double cx = rng.uniform(w / 2, 128.0 - w / 2);
        const double cy = rng.uniform(h / 2, 128.0 - h / 2);
        std::vector<GtBox> gts{{{cx, cy, w, h}, 0}};
        TargetAssignment t = assign_targets(gts, anchors, 128);
        REQUIRE(t.positives.size() == 1);

        int bk = -1, ba = -1;
        double best = -1.0;
        for (int k = 0; k < kNumScales; ++k)
            for (int a = 0; a < kAnchorsPerScale; ++a) {
                const Box gb{0, 0, w, h};
                const Box ab{0, 0, anchors[k][a].first, anchors[k][a].second};
                if (iou(gb, ab) > best) {
                    best = iou(gb, ab);
                    bk = k;
                    ba = a;
                }
            }
        CHECK(t.positives[0].scale == bk);
        CHECK(t.positives[0].anchor == ba);
        const int stride = kStrides[bk];
        CHECK(t.positives[0].cx == static_cast<int>(cx / stride));
        CHECK(t.positives[0].cy == static_cast<int>(cy / stride));
        ++checked;
    }
    CHECK(checked == 200);
}

TEST_CASE("assignment tie-break keeps the lowest scan-order anchor") {
    AnchorGrid anchors;
    for (int k = 0; k < kNumScales; ++k)
        for (int a = 0; a < kAnchorsPerScale; ++a) anchors[k][a] = {20.0, 20.0};
    std::vector<GtBox> gts{{{32.0, 32.0, 20.0, 20.0}, 0}};
    TargetAssignment t = assign_targets(gts, anchors, 64);
    REQUIRE(t.positives.size() == 1);
    CHECK(t.positives[0].scale == 0);
    CHECK(t.positives[0].anchor == 0);
}

TEST_CASE("degenerate gts are skipped and counted") {
    AnchorGrid anchors = test_anchors();
    std::vector<GtBox> gts{{{10.0, 10.0, 0.0, 5.0}, 0},
                           {{20.0, 20.0, 8.0, 8.0}, 1},
                           {{30.0, 30.0, 4.0, 0.0}, 0}};
    TargetAssignment t = assign_targets(gts, anchors, 64);
    CHECK(t.skipped_degenerate == 2);
    REQUIRE(t.positives.size() == 1);
    CHECK(t.positives[0].gt_index == 1);
}

TEST_CASE("assignment is permutation-invariant up to gt order") {
    AnchorGrid anchors = test_anchors();
    Rng rng(77);
    std::vector<GtBox> gts;
    for (int i = 0; i < 6; ++i) {
        const double w = rng.uniform(4.0, 60.0), h = rng.uniform(4.0, 60.0);
        gts.push_back({{rng.uniform(w / 2, 128 - w / 2), rng.uniform(h / 2, 128 - h / 2), w, h},
                       i % 2});
    }
    std::vector<GtBox> shuffled = gts;
    std::reverse(shuffled.begin(), shuffled.end());

    auto key_set = [&](const TargetAssignment& t, const std::vector<GtBox>& src) {
        std::vector<std::tuple<int, int, int, int, double, double>> keys;
        for (const AnchorAssignment& p : t.positives)
            keys.emplace_back(p.scale, p.anchor, p.cx, p.cy, src[p.gt_index].box.w,
                              src[p.gt_index].box.h);
        std::sort(keys.begin(), keys.end());
        return keys;
    };
    TargetAssignment a = assign_targets(gts, anchors, 128);
    TargetAssignment b = assign_targets(shuffled, anchors, 128);
    CHECK(key_set(a, gts) == key_set(b, shuffled));
    CHECK(a.ignored == b.ignored);
}

TEST_CASE("ignore mask marks overlapping non-assigned anchors only") {
    AnchorGrid anchors = test_anchors();
    // 70x70 gt at a coarse-cell center: best prior is (64,64) with IoU
    // 0.836; the (96,80) prior at the same cell has IoU 4900/7680 = 0.638,
    // above the threshold but unassigned.
    std::vector<GtBox> gts{{{48.0, 48.0, 70.0, 70.0}, 0}};
    TargetAssignment t = assign_targets(gts, anchors, 128, 0.5);
    REQUIRE(t.positives.size() == 1);
    const AnchorAssignment& p = t.positives[0];
    CHECK(p.scale == 0);
    CHECK(p.anchor == 1);
    const int s = 128 / kStrides[0];
    // The positive cell is never ignored.
    CHECK(t.ignored[0][(static_cast<size_t>(p.anchor) * s + p.cy) * s + p.cx] == 0);
    CHECK(t.ignored[0][(static_cast<size_t>(2) * s + p.cy) * s + p.cx] == 1);
    // A small prior on the finest scale never clears 0.5 against this gt.
    for (std::uint8_t v : t.ignored[2]) CHECK(v == 0);
}

TEST_CASE("perfect predictions drive the loss to zero") {
    AnchorGrid anchors = test_anchors();
    const int image_size = 64;
    std::vector<GtBox> gts{{{24.0, 24.0, 16.0, 16.0}, 1},
                           {{40.0, 44.0, 7.0, 9.0}, 0}};
    TargetAssignment t = assign_targets(gts, anchors, image_size);
    REQUIRE(t.positives.size() == 2);

    std::array<Tensor, kNumScales> raw;
    for (int k = 0; k < kNumScales; ++k) {
        const int s = image_size / kStrides[k];
        raw[k] = Tensor::full({1, 21, s, s}, 0.0);
        // Saturate all objectness channels negative first.
        for (int a = 0; a < kAnchorsPerScale; ++a)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) raw[k].at(0, a * 7 + 4, y, x) = -40.0;
    }
    for (const AnchorAssignment& p : t.positives) write_perfect(raw[p.scale], 7, p, 2);

    LossParts loss = detection_loss(raw, {t}, anchors, image_size);
    CHECK(loss.positives == 2);
    CHECK(loss.loc.item() <= 1e-10);
    CHECK(loss.conf.item() <= 1e-10);
    CHECK(loss.cls.item() <= 1e-10);
    CHECK(loss.total.item() <= 1e-10);
}

TEST_CASE("empty image with saturated-negative objectness has near-zero loss") {
    AnchorGrid anchors = test_anchors();
    std::array<Tensor, kNumScales> raw;
    for (int k = 0; k < kNumScales; ++k) {
        const int s = 64 / kStrides[k];
        raw[k] = Tensor::full({1, 21, s, s}, 0.0);
        for (int a = 0; a < kAnchorsPerScale; ++a)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) raw[k].at(0, a * 7 + 4, y, x) = -40.0;
    }
    TargetAssignment t = assign_targets({}, anchors, 64);
    LossParts loss = detection_loss(raw, {t}, anchors, 64);
    CHECK(loss.positives == 0);
    CHECK(loss.loc.item() == 0.0);
    CHECK(loss.cls.item() == 0.0);
    CHECK(loss.total.item() <= 1e-12);
}

TEST_CASE("single-positive loss matches a scalar transcription") {
    AnchorGrid anchors = test_anchors();
    const int image_size = 32;  // grids 1/2/4
    std::vector<GtBox> gts{{{17.0, 13.0, 30.0, 42.0}, 1}};
    TargetAssignment t = assign_targets(gts, anchors, image_size);
    REQUIRE(t.positives.size() == 1);
    const AnchorAssignment& p = t.positives[0];

    Rng rng(909);
    std::array<Tensor, kNumScales> raw;
    for (int k = 0; k < kNumScales; ++k) {
        const int s = image_size / kStrides[k];
        raw[k] = Tensor::zeros({1, 21, s, s});
        for (long long i = 0; i < raw[k].numel(); ++i)
            raw[k].data()[i] = rng.uniform(-2.0, 2.0);
    }
    LossParts loss = detection_loss(raw, {t}, anchors, image_size);

    // Hand transcription with plain doubles.
    const int stride = kStrides[p.scale];
    const double pw = anchors[p.scale][p.anchor].first;
    const double ph = anchors[p.scale][p.anchor].second;
    const Tensor& rk = raw[p.scale];
    const int cb = p.anchor * 7;
    const double bx = (1.0 / (1.0 + std::exp(-rk.at(0, cb + 0, p.cy, p.cx))) + p.cx) * stride;
    const double by = (1.0 / (1.0 + std::exp(-rk.at(0, cb + 1, p.cy, p.cx))) + p.cy) * stride;
    const double bw = pw * std::exp(rk.at(0, cb + 2, p.cy, p.cx));
    const double bh = ph * std::exp(rk.at(0, cb + 3, p.cy, p.cx));
    const double gw = pw * std::exp(p.tw), gh = ph * std::exp(p.th);
    const double gx = (1.0 / (1.0 + std::exp(-p.tx)) + p.cx) * stride;
    const double gy = (1.0 / (1.0 + std::exp(-p.ty)) + p.cy) * stride;
    const double ix = std::max(
        0.0, std::min(bx + bw / 2, gx + gw / 2) - std::max(bx - bw / 2, gx - gw / 2));
    const double iy = std::max(
        0.0, std::min(by + bh / 2, gy + gh / 2) - std::max(by - bh / 2, gy - gh / 2));
    const double inter = ix * iy;
    const double expected_loc = 1.0 - inter / (bw * bh + gw * gh - inter);

    double expected_conf = 0.0;
    for (int k = 0; k < kNumScales; ++k) {
        const int s = image_size / kStrides[k];
        for (int a = 0; a < kAnchorsPerScale; ++a)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) {
                    if (t.ignored[k][(static_cast<size_t>(a) * s + y) * s + x]) continue;
                    const bool pos = k == p.scale && a == p.anchor && y == p.cy && x == p.cx;
                    expected_conf += bce_scalar(raw[k].at(0, a * 7 + 4, y, x), pos ? 1.0 : 0.0);
                }
    }
    double expected_cls = 0.0;
    for (int c = 0; c < 2; ++c)
        expected_cls += bce_scalar(rk.at(0, cb + 5 + c, p.cy, p.cx), c == p.class_id ? 1.0 : 0.0);

    CHECK(loss.loc.item() == doctest::Approx(expected_loc).epsilon(1e-12));
    CHECK(loss.conf.item() == doctest::Approx(expected_conf).epsilon(1e-12));
    CHECK(loss.cls.item() == doctest::Approx(expected_cls).epsilon(1e-12));
    CHECK(loss.total.item() ==
          doctest::Approx(expected_loc + expected_conf + expected_cls).epsilon(1e-12));
}

TEST_CASE("loss is non-negative and ignores masked anchors") {
    AnchorGrid anchors = test_anchors();
    Rng rng(31);
    std::vector<GtBox> gts{{{30.0, 30.0, 20.0, 24.0}, 0}};
    TargetAssignment t = assign_targets(gts, anchors, 64);
    std::array<Tensor, kNumScales> raw;
    for (int k = 0; k < kNumScales; ++k) {
        const int s = 64 / kStrides[k];
        raw[k] = Tensor::zeros({1, 21, s, s});
        for (long long i = 0; i < raw[k].numel(); ++i)
            raw[k].data()[i] = rng.uniform(-3.0, 3.0);
    }
    LossParts a = detection_loss(raw, {t}, anchors, 64);
    CHECK(a.loc.item() >= 0.0);
    CHECK(a.conf.item() >= 0.0);
    CHECK(a.cls.item() >= 0.0);

    // Force an ignored flag and verify that logit no longer matters.
    TargetAssignment t2 = t;
    const int s2 = 64 / kStrides[2];
    t2.ignored[2][3] = 1;  // anchor 0, cell (0,3)
    LossParts before = detection_loss(raw, {t2}, anchors, 64);
    raw[2].at(0, 4, 0, 3) = 25.0;
    LossParts after = detection_loss(raw, {t2}, anchors, 64);
    CHECK(before.conf.item() == doctest::Approx(after.conf.item()).epsilon(1e-15));
    (void)s2;
}

TEST_CASE("loss input validation") {
    AnchorGrid anchors = test_anchors();
    TargetAssignment t = assign_targets({}, anchors, 64);
    std::array<Tensor, kNumScales> raw;
    for (int k = 0; k < kNumScales; ++k)
        raw[k] = Tensor::zeros({1, 21, 64 / kStrides[k], 64 / kStrides[k]});

    CHECK_THROWS_AS(detection_loss(raw, {t, t}, anchors, 64), ShapeError);
    std::array<Tensor, kNumScales> bad = raw;
    bad[1] = Tensor::zeros({1, 20, 4, 4});
    CHECK_THROWS_AS(detection_loss(bad, {t}, anchors, 64), ShapeError);
    raw[0].at(0, 4, 0, 0) = std::nan("");
    CHECK_THROWS_AS(detection_loss(raw, {t}, anchors, 64), NumericalError);
}

TEST_CASE("full model loss passes the gradient check") {
    ModelConfig mc = micro_model_config();
    Model model(mc, nine_anchors());
    Rng rr(321);
    std::vector<Tensor> leaves;
    for (auto& [name, p] : model.params().params) {
        for (long long i = 0; i < p.numel(); ++i) p.data()[i] = rr.uniform(-0.5, 0.5);
        leaves.push_back(p);
    }
    Tensor image = Tensor::zeros({1, 3, 64, 64});
    for (long long i = 0; i < image.numel(); ++i) image.data()[i] = rr.uniform(0.0, 1.0);
    std::vector<GtBox> gts{{{24.0, 20.0, 18.0, 14.0}, 0}, {{44.0, 40.0, 10.0, 24.0}, 1}};
    TargetAssignment t = assign_targets(gts, model.anchors(), 64);

    auto loss_fn = [&]() {
        Rng drop(1);
        std::array<Tensor, kNumScales> raw = model.forward(image, false, drop);
        return detection_loss(raw, {t}, model.anchors(), 64).total;
    };
    GradCheckResult res = check_gradients(loss_fn, leaves, 1e-5, 2, 3);
    CHECK(res.checks > 50);
    CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("adam matches a scalar oracle over five steps") {
    ParamMap pm;
    Tensor p = pm.add_param("w", Tensor::from_data({1, 1, 1, 1}, {0.7}, true));
    Adam opt;
    const double grads[5] = {0.3, -0.2, 0.1, 0.05, -0.4};

    double w = 0.7, m = 0.0, v = 0.0;
    for (int i = 0; i < 5; ++i) {
        p.zero_grad();
        p.impl()->ensure_grad();
        p.impl()->grad[0] = grads[i];
        opt.step(pm, 1e-2);

        m = 0.9 * m + 0.1 * grads[i];
        v = 0.999 * v + 0.001 * grads[i] * grads[i];
        const double mh = m / (1.0 - std::pow(0.9, i + 1));
        const double vh = v / (1.0 - std::pow(0.999, i + 1));
        w -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(p.data()[0] == doctest::Approx(w).epsilon(1e-14));
    }
}

TEST_CASE("adam leaves zero-gradient params unchanged") {
    ParamMap pm;
    Tensor p = pm.add_param("w", Tensor::from_data({1, 1, 1, 2}, {1.5, -2.0}, true));
    Adam opt;
    p.zero_grad();
    opt.step(pm, 0.1);
    CHECK(p.data()[0] == 1.5);
    CHECK(p.data()[1] == -2.0);
}

TEST_CASE("adam step size approaches lr under a constant gradient") {
    ParamMap pm;
    Tensor p = pm.add_param("w", Tensor::from_data({1, 1, 1, 1}, {0.0}, true));
    Adam opt;
    double prev = 0.0;
    double delta = 0.0;
    for (int i = 0; i < 300; ++i) {
        p.zero_grad();
        p.impl()->ensure_grad();
        p.impl()->grad[0] = 0.37;
        prev = p.data()[0];
        opt.step(pm, 1e-3);
        delta = prev - p.data()[0];
    }
    CHECK(delta == doctest::Approx(1e-3).epsilon(1e-4));
}

namespace {

std::vector<Sample> tiny_dataset(int image_size, Rng& rng) {
    std::vector<Sample> data;
    for (int i = 0; i < 2; ++i) {
        Tensor img = Tensor::zeros({1, 3, image_size, image_size});
        for (long long j = 0; j < img.numel(); ++j) img.data()[j] = rng.uniform(0.0, 1.0);
        Sample s;
        s.image = img;
        s.gts = {{{20.0 + 6 * i, 24.0, 14.0, 18.0}, i % 2}};
        data.push_back(std::move(s));
    }
    return data;
}

std::map<std::string, std::vector<double>> snapshot(const ParamMap& pm,
                                                    const std::string& prefix) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, p] : pm.params)
        if (name.rfind(prefix, 0) == 0)
            out[name] = std::vector<double>(p.data(), p.data() + p.numel());
    return out;
}

}  // namespace

TEST_CASE("zero learning rate leaves every param at initialization") {
    ModelConfig mc = micro_model_config();
    Model model(mc, nine_anchors());
    Rng rng(12);
    std::vector<Sample> data = tiny_dataset(64, rng);
    auto before = snapshot(model.params(), "");

    TrainConfig tc;
    tc.phase1 = {1, 2, 0.0, true};
    tc.phase2 = {1, 1, 0.0, false};
    train(model, data, tc);
    auto after = snapshot(model.params(), "");
    CHECK(before == after);
}

TEST_CASE("phase 1 freezes the backbone exactly, phase 2 thaws it") {
    ModelConfig mc = micro_model_config();
    Model model(mc, nine_anchors());
    Rng rng(13);
    std::vector<Sample> data = tiny_dataset(64, rng);

    auto backbone0 = snapshot(model.params(), "dbfen.");
    auto neck0 = snapshot(model.params(), "ccfpn.");
    std::map<std::string, std::vector<double>> backbone_after_p1;
    TrainConfig tc;
    tc.phase1 = {2, 2, 1e-3, true};
    tc.phase2 = {1, 1, 1e-3, false};
    TrainResult r = train(model, data, tc, [&](int phase) {
        if (phase == 1) backbone_after_p1 = snapshot(model.params(), "dbfen.");
    });

    CHECK(backbone_after_p1 == backbone0);                       // bit-identical
    CHECK(snapshot(model.params(), "dbfen.") != backbone0);      // phase 2 moved it
    CHECK(snapshot(model.params(), "ccfpn.") != neck0);          // phase 1 trained the neck
    for (const auto& [name, p] : model.params().params) CHECK(p.requires_grad());

    REQUIRE(r.log.size() == 3);
    CHECK(r.log[0].phase == 1);
    CHECK(r.log[1].phase == 1);
    CHECK(r.log[2].phase == 2);
    CHECK(r.log[0].epoch == 1);
    CHECK(r.log[2].epoch == 3);
    for (const EpochRow& row : r.log)
        CHECK(row.total == doctest::Approx(row.loc + row.conf + row.cls).epsilon(1e-9));
}

TEST_CASE("training validates inputs and aborts on non-finite loss") {
    ModelConfig mc = micro_model_config();
    Model model(mc, nine_anchors());
    TrainConfig tc;
    tc.phase1 = {1, 1, 1e-3, true};
    tc.phase2 = {1, 1, 1e-3, false};
    CHECK_THROWS_AS(train(model, {}, tc), InputError);

    TrainConfig bad = tc;
    bad.phase1.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = tc;
    bad.phase2.lr = -1.0;
    CHECK_THROWS_AS(bad.validate(), InputError);

    Rng rng(14);
    std::vector<Sample> data = tiny_dataset(64, rng);
    model.params().params.at("head.s0.c2.w").data()[0] = std::nan("");
    CHECK_THROWS_AS(train(model, data, tc), NumericalError);
}

TEST_CASE("loss log renders as csv") {
    std::vector<EpochRow> rows{{1, 1, 0.5, 2.0, 0.25, 2.75}, {2, 2, 0.25, 1.0, 0.125, 1.375}};
    std::string csv = loss_log_csv(rows);
    CHECK(csv == "epoch,phase,loc_loss,conf_loss,cls_loss,total\n"
                 "1,1,0.5,2,0.25,2.75\n"
                 "2,2,0.25,1,0.125,1.375\n");
}
