#pragma once

#include <array>
#include <string>
#include <vector>

#include "active/params.hpp"
#include "active/rng.hpp"
#include "active/tensor.hpp"

namespace active {

struct DbfenConfig {
    int stem_channels = 16;
    std::array<int, 3> blocks_per_stage_branch1{1, 1, 1};
    std::array<int, 3> blocks_per_stage_branch2{1, 1, 1};
    int expansion_ratio = 4;
    double drop_prob = 0.0;
    int se_reduction = 4;

    // Stage widths double per level: 4s at the finest tap, 16s at the
    // coarsest, continuing the stem's s -> 2s chain.
    int stage_width(int stage) const { return stem_channels * 4 * (1 << stage); }
    void validate() const;
};

// "DBFENa-b": a,b are the per-branch block totals.
std::string dbfen_name(const DbfenConfig& cfg);

// Six backbone features. in[i][j]: branch i (0: residual, 1: MBCB),
// level j (0 coarsest .. 2 finest); level extents double with j.
struct PyramidSet {
    std::array<std::array<Tensor, 3>, 2> in;
};

// Stage-entry form: d = conv3x3_s2(x), y = concat(d, conv3x3(conv1x1(d))),
// doubling channels and halving extents. Repeat form: stride 1, the conv
// chain returns to the input width and merges by elementwise add.
class ResidualBlock {
  public:
    ResidualBlock(ParamMap& pm, const std::string& prefix, int cin, int cout, bool downsample,
                  uint64_t seed);
    Tensor forward(const Tensor& x) const;

  private:
    ConvLayer c1_, c2_, c3_;
    bool down_;
};

// Channel gate: x * sigmoid(fc2(silu(fc1(gap(x))))), reduced width
// max(1, C/reduction).
class SeBlock {
  public:
    SeBlock(ParamMap& pm, const std::string& prefix, int channels, int reduction, uint64_t seed);
    Tensor forward(const Tensor& x) const;

  private:
    ConvLayer fc1_, fc2_;
};

// Mobile inverted bottleneck with SE: [1x1 expand (omitted at ratio 1)] ->
// 3x3 depthwise -> SE -> 1x1 project, with drop-connect + skip when the
// input and output shapes match.
class MbcbBlock {
  public:
    MbcbBlock(ParamMap& pm, const std::string& prefix, int cin, int cout, int stride,
              int expansion_ratio, int se_reduction, double drop_prob, uint64_t seed);
    Tensor forward(const Tensor& x, bool training, Rng& rng) const;
    bool has_skip() const { return skip_; }

  private:
    ConvLayer expand_;  // undefined weights when ratio == 1
    Tensor dw_w_, dw_b_;
    SeBlock se_;
    ConvLayer project_;
    int stride_;
    bool skip_;
    bool expanded_;
    double drop_prob_;
};

// The double-branch backbone: a shared two-block stem (x4 downsample), then
// per branch three stages, each downsampling at entry and tapped as a
// pyramid level.
class Dbfen {
  public:
    Dbfen(ParamMap& pm, const std::string& prefix, const DbfenConfig& cfg, uint64_t seed);

    // image: N x 3 x S x S with S a positive multiple of 32.
    PyramidSet forward(const Tensor& image, bool training, Rng& rng) const;

    const DbfenConfig& config() const { return cfg_; }

  private:
    DbfenConfig cfg_;
    std::vector<ResidualBlock> stem_;
    std::array<std::vector<ResidualBlock>, 3> branch1_;
    std::array<std::vector<MbcbBlock>, 3> branch2_;
};

}  // namespace active
