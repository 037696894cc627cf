#pragma once

#include <array>
#include <vector>

#include "active/ccfpn.hpp"
#include "active/dbfen.hpp"
#include "active/head.hpp"
#include "active/loss.hpp"
#include "active/params.hpp"

namespace active {

struct ModelConfig {
    DbfenConfig dbfen;
    CcfpnConfig ccfpn;
    int image_size = 416;
    int num_classes = 2;
    uint64_t init_seed = 1;

    void validate() const;
};

// Full detector: double-branch backbone, fusion neck, and one two-conv head
// per scale emitting 3*(5+num_classes) channels of logits.
class Model {
  public:
    Model(const ModelConfig& cfg, const std::vector<AnchorWh>& anchors9);

    // Raw head logits per scale, 0 coarsest. `training` enables
    // drop-connect, drawing from rng.
    std::array<Tensor, kNumScales> forward(const Tensor& images, bool training, Rng& rng) const;

    // Decode + per-class suppression for one batch image, gradients off.
    std::vector<Detection> detect(const std::array<Tensor, kNumScales>& raw, int image_index,
                                  double conf_thresh, double diou_thresh) const;

    ParamMap& params() { return pm_; }
    const ParamMap& params() const { return pm_; }
    const AnchorGrid& anchors() const { return anchors_; }
    const ModelConfig& config() const { return cfg_; }

    // Re-reads the anchor buffer (after a checkpoint load replaced it).
    void refresh_anchors();

  private:
    ModelConfig cfg_;
    ParamMap pm_;
    Dbfen dbfen_;
    Ccfpn ccfpn_;
    std::array<ConvLayer, kNumScales> head_wide_;
    std::array<ConvLayer, kNumScales> head_out_;
    AnchorGrid anchors_{};
};

}  // namespace active
