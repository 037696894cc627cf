#include "active/dbfen.hpp"

#include <algorithm>

#include "active/errors.hpp"
#include "active/ops.hpp"

namespace active {

void DbfenConfig::validate() const {
    if (stem_channels < 2 || stem_channels % 2 != 0)
        throw InputError("dbfen: stem_channels must be a positive even number, got " +
                         std::to_string(stem_channels));
    for (int b : blocks_per_stage_branch1)
        if (b < 1) throw InputError("dbfen: branch-1 stages need at least one block each");
    for (int b : blocks_per_stage_branch2)
        if (b < 1) throw InputError("dbfen: branch-2 stages need at least one block each");
    if (expansion_ratio < 1) throw InputError("dbfen: expansion_ratio must be >= 1");
    if (drop_prob < 0.0 || drop_prob >= 1.0)
        throw InputError("dbfen: drop_prob must lie in [0,1)");
    if (se_reduction < 1) throw InputError("dbfen: se_reduction must be >= 1");
}

std::string dbfen_name(const DbfenConfig& cfg) {
    const int a = cfg.blocks_per_stage_branch1[0] + cfg.blocks_per_stage_branch1[1] +
                  cfg.blocks_per_stage_branch1[2];
    const int b = cfg.blocks_per_stage_branch2[0] + cfg.blocks_per_stage_branch2[1] +
                  cfg.blocks_per_stage_branch2[2];
    return "DBFEN" + std::to_string(a) + "-" + std::to_string(b);
}

namespace {

int half_width(int c) { return std::max(1, c / 2); }
int quarter_width(int c) { return std::max(1, c / 4); }

}  // namespace

// --- ResidualBlock ----------------------------------------------------------

ResidualBlock::ResidualBlock(ParamMap& pm, const std::string& prefix, int cin, int cout,
                             bool downsample, uint64_t seed)
    : down_(downsample) {
    if (downsample) {
        // concat(d, inner) must land exactly on cout
        if (cout % 2 != 0)
            throw InputError("residual_block: downsampling block needs an even output width, got " +
                             std::to_string(cout));
        const int half = cout / 2;
        c1_ = ConvLayer(pm, prefix + ".c1", cin, half, 3, 2, 1, true, seed);
        c2_ = ConvLayer(pm, prefix + ".c2", half, quarter_width(cout), 1, 1, 0, true, seed);
        c3_ = ConvLayer(pm, prefix + ".c3", quarter_width(cout), half, 3, 1, 1, true, seed);
    } else {
        if (cin != cout)
            throw InputError("residual_block: stride-1 repeats keep their width (" +
                             std::to_string(cin) + " vs " + std::to_string(cout) + ")");
        c1_ = ConvLayer(pm, prefix + ".c1", cin, half_width(cout), 3, 1, 1, true, seed);
        c2_ = ConvLayer(pm, prefix + ".c2", half_width(cout), quarter_width(cout), 1, 1, 0, true, seed);
        c3_ = ConvLayer(pm, prefix + ".c3", quarter_width(cout), cout, 3, 1, 1, true, seed);
    }
}

Tensor ResidualBlock::forward(const Tensor& x) const {
    if (down_) {
        if (x.shape().h % 2 != 0 || x.shape().w % 2 != 0)
            throw ShapeError("residual_block: stride-2 block requires even extents, got " +
                             x.shape().str());
        Tensor d = leaky_relu(c1_.forward(x));
        Tensor inner = leaky_relu(c3_.forward(leaky_relu(c2_.forward(d))));
        return concat_channels({d, inner});
    }
    Tensor t = leaky_relu(c1_.forward(x));
    t = leaky_relu(c2_.forward(t));
    t = leaky_relu(c3_.forward(t));
    return add2(x, t);
}

// --- SeBlock ----------------------------------------------------------------

SeBlock::SeBlock(ParamMap& pm, const std::string& prefix, int channels, int reduction,
                 uint64_t seed) {
    const int reduced = std::max(1, channels / reduction);
    fc1_ = ConvLayer(pm, prefix + ".fc1", channels, reduced, 1, 1, 0, true, seed);
    fc2_ = ConvLayer(pm, prefix + ".fc2", reduced, channels, 1, 1, 0, true, seed);
}

Tensor SeBlock::forward(const Tensor& x) const {
    Tensor gate = sigmoid(fc2_.forward(silu(fc1_.forward(global_avg_pool(x)))));
    return mul_broadcast(x, gate);
}

// --- MbcbBlock ----------------------------------------------------------------

MbcbBlock::MbcbBlock(ParamMap& pm, const std::string& prefix, int cin, int cout, int stride,
                     int expansion_ratio, int se_reduction, double drop_prob, uint64_t seed)
    : se_(pm, prefix + ".se", cin * std::max(1, expansion_ratio), se_reduction, seed),
      stride_(stride),
      skip_(stride == 1 && cin == cout),
      expanded_(expansion_ratio > 1),
      drop_prob_(drop_prob) {
    const int mid = cin * std::max(1, expansion_ratio);
    if (expanded_) expand_ = ConvLayer(pm, prefix + ".expand", cin, mid, 1, 1, 0, true, seed);
    dw_w_ = pm.add_param(prefix + ".dw.w", depthwise_weight_init(mid, 3, 3, prefix + ".dw.w", seed));
    dw_b_ = pm.add_param(prefix + ".dw.b", bias_init(mid));
    project_ = ConvLayer(pm, prefix + ".project", mid, cout, 1, 1, 0, true, seed);
}

Tensor MbcbBlock::forward(const Tensor& x, bool training, Rng& rng) const {
    Tensor t = x;
    if (expanded_) t = silu(expand_.forward(t));
    t = silu(bias_add(depthwise_conv2d(t, dw_w_, stride_, 1), dw_b_));
    t = se_.forward(t);
    t = project_.forward(t);  // linear projection
    if (!skip_) return t;
    t = drop_connect(t, drop_prob_, training, rng);
    return add2(x, t);
}

// --- Dbfen --------------------------------------------------------------------

Dbfen::Dbfen(ParamMap& pm, const std::string& prefix, const DbfenConfig& cfg, uint64_t seed)
    : cfg_(cfg) {
    cfg.validate();
    const int s = cfg.stem_channels;
    stem_.emplace_back(pm, prefix + ".stem.0", 3, s, true, seed);
    stem_.emplace_back(pm, prefix + ".stem.1", s, 2 * s, true, seed);

    int cin1 = 2 * s, cin2 = 2 * s;
    for (int stage = 0; stage < 3; ++stage) {
        const int width = cfg.stage_width(stage);
        const std::string s1 = prefix + ".branch1.s" + std::to_string(stage);
        branch1_[stage].emplace_back(pm, s1 + ".b0", cin1, width, true, seed);
        for (int b = 1; b < cfg.blocks_per_stage_branch1[stage]; ++b)
            branch1_[stage].emplace_back(pm, s1 + ".b" + std::to_string(b), width, width, false, seed);
        cin1 = width;

        const std::string s2 = prefix + ".branch2.s" + std::to_string(stage);
        branch2_[stage].emplace_back(pm, s2 + ".b0", cin2, width, 2, cfg.expansion_ratio,
                                     cfg.se_reduction, cfg.drop_prob, seed);
        for (int b = 1; b < cfg.blocks_per_stage_branch2[stage]; ++b)
            branch2_[stage].emplace_back(pm, s2 + ".b" + std::to_string(b), width, width, 1,
                                         cfg.expansion_ratio, cfg.se_reduction, cfg.drop_prob, seed);
        cin2 = width;
    }
}

PyramidSet Dbfen::forward(const Tensor& image, bool training, Rng& rng) const {
    const Shape& s = image.shape();
    if (s.c != 3)
        throw InputError("dbfen: expected a 3-channel image, got " + s.str());
    if (s.h != s.w || s.h <= 0 || s.h % 32 != 0)
        throw InputError("dbfen: image extents must be a square multiple of 32, got " + s.str());

    Tensor t = image;
    for (const ResidualBlock& blk : stem_) t = blk.forward(t);

    PyramidSet pyr;
    // stage 0 yields the finest tap (j index 2), stage 2 the coarsest (0)
    Tensor t1 = t;
    for (int stage = 0; stage < 3; ++stage) {
        for (const ResidualBlock& blk : branch1_[stage]) t1 = blk.forward(t1);
        pyr.in[0][2 - stage] = t1;
    }
    Tensor t2 = t;
    for (int stage = 0; stage < 3; ++stage) {
        for (const MbcbBlock& blk : branch2_[stage]) t2 = blk.forward(t2, training, rng);
        pyr.in[1][2 - stage] = t2;
    }
    return pyr;
}

}  // namespace active
