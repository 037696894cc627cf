#include "active/model.hpp"

#include <string>

#include "active/errors.hpp"
#include "active/ops.hpp"

namespace active {

void ModelConfig::validate() const {
    dbfen.validate();
    ccfpn.validate();
    if (image_size <= 0 || image_size % kStrides[0] != 0)
        throw InputError("image size must be a positive multiple of " +
                         std::to_string(kStrides[0]));
    if (num_classes < 1) throw InputError("num_classes must be positive");
}

namespace {
const ModelConfig& checked(const ModelConfig& cfg) {
    cfg.validate();
    return cfg;
}
}  // namespace

Model::Model(const ModelConfig& cfg, const std::vector<AnchorWh>& anchors9)
    : cfg_(checked(cfg)),
      dbfen_(pm_, "dbfen", cfg.dbfen, cfg.init_seed),
      ccfpn_(pm_, "ccfpn", cfg.ccfpn,
             {cfg.dbfen.stage_width(2), cfg.dbfen.stage_width(1), cfg.dbfen.stage_width(0)},
             cfg.init_seed) {
    const int pw = cfg.ccfpn.pyramid_width;
    const int out_ch = kAnchorsPerScale * (5 + cfg.num_classes);
    for (int k = 0; k < kNumScales; ++k) {
        const std::string p = "head.s" + std::to_string(k);
        head_wide_[k] = ConvLayer(pm_, p + ".c1", pw, 2 * pw, 3, 1, 1, true, cfg.init_seed);
        head_out_[k] = ConvLayer(pm_, p + ".c2", 2 * pw, out_ch, 1, 1, 0, true, cfg.init_seed);
    }
    anchors_ = split_anchors(anchors9);
    std::vector<double> flat;
    for (int k = 0; k < kNumScales; ++k)
        for (int a = 0; a < kAnchorsPerScale; ++a) {
            flat.push_back(anchors_[k][a].first);
            flat.push_back(anchors_[k][a].second);
        }
    pm_.add_buffer("head.anchors",
                   Tensor::from_data({1, 1, kNumScales * kAnchorsPerScale, 2}, flat));
}

void Model::refresh_anchors() {
    const Tensor& t = pm_.buffers.at("head.anchors");
    if (t.shape() != Shape{1, 1, kNumScales * kAnchorsPerScale, 2})
        throw ShapeError("anchor buffer must be 1x1x9x2, got " + t.shape().str());
    for (int k = 0; k < kNumScales; ++k)
        for (int a = 0; a < kAnchorsPerScale; ++a) {
            anchors_[k][a].first = t.at(0, 0, k * kAnchorsPerScale + a, 0);
            anchors_[k][a].second = t.at(0, 0, k * kAnchorsPerScale + a, 1);
        }
}

std::array<Tensor, kNumScales> Model::forward(const Tensor& images, bool training,
                                              Rng& rng) const {
    if (!images.defined() || images.shape().h != cfg_.image_size ||
        images.shape().w != cfg_.image_size)
        throw InputError("model expects " + std::to_string(cfg_.image_size) + "x" +
                         std::to_string(cfg_.image_size) + " input");
    PyramidSet pyr = dbfen_.forward(images, training, rng);
    Ccfpn::Result fused = ccfpn_.forward(pyr);
    std::array<Tensor, kNumScales> raw;
    for (int k = 0; k < kNumScales; ++k)
        raw[k] = head_out_[k].forward(leaky_relu(head_wide_[k].forward(fused.out[k])));
    return raw;
}

std::vector<Detection> Model::detect(const std::array<Tensor, kNumScales>& raw,
                                     int image_index, double conf_thresh,
                                     double diou_thresh) const {
    NoGradGuard guard;
    std::vector<Detection> dets;
    for (int k = 0; k < kNumScales; ++k) {
        std::vector<AnchorWh> scale_anchors(anchors_[k].begin(), anchors_[k].end());
        std::vector<Detection> d =
            decode_scale(raw[k], image_index, scale_anchors, kStrides[k], cfg_.image_size,
                         cfg_.num_classes);
        dets.insert(dets.end(), d.begin(), d.end());
    }
    return diou_nms(dets, conf_thresh, diou_thresh);
}

}  // namespace active
