#include "active/ccfpn.hpp"

#include <iomanip>
#include <sstream>

#include "active/errors.hpp"
#include "active/ops.hpp"

namespace active {

void CcfpnConfig::validate() const {
    if (variant < 1 || variant > 4)
        throw InputError("ccfpn variant must be 1..4, got " + std::to_string(variant));
    if (pyramid_width < 1)
        throw InputError("ccfpn pyramid_width must be positive");
}

int FusionGraph::count(FusionOp op) const {
    int n = 0;
    for (const FusionNode& node : nodes)
        if (node.op == op) ++n;
    return n;
}

namespace {

struct Builder {
    FusionGraph g;
    int next_lateral = 0;
    int next_conv = 0;

    int push(FusionNode node) {
        g.nodes.push_back(std::move(node));
        return static_cast<int>(g.nodes.size()) - 1;
    }
    int input(int branch, int level) {
        FusionNode n{FusionOp::Input,
                     "p" + std::to_string(branch + 1) + std::to_string(level + 1),
                     {}};
        n.branch = branch;
        n.level = level;
        return push(std::move(n));
    }
    int lateral(int arg) {
        FusionNode n{FusionOp::Lateral, "lat" + g.nodes[arg].name.substr(1), {arg}};
        n.conv_index = next_lateral++;
        return push(std::move(n));
    }
    int add(std::vector<int> args) { return push({FusionOp::Add, "", std::move(args)}); }
    int up(int arg) { return push({FusionOp::Up, "", {arg}}); }
    int down(int arg) { return push({FusionOp::Down, "", {arg}}); }
    int conv(const std::string& name, int arg) {
        FusionNode n{FusionOp::Conv, name, {arg}};
        n.conv_index = next_conv++;
        return push(std::move(n));
    }
};

// Inputs then laterals in a fixed order; lat[branch][level] receives the
// lateral node ids.
void build_entry(Builder& b, int lat[2][3]) {
    int in[2][3];
    for (int level = 0; level < 3; ++level)
        for (int branch = 0; branch < 2; ++branch)
            in[branch][level] = b.input(branch, level);
    for (int level = 0; level < 3; ++level)
        for (int branch = 0; branch < 2; ++branch)
            lat[branch][level] = b.lateral(in[branch][level]);
}

// Coarse-to-fine pass fusing both branches at each level.
std::array<int, 3> build_topdown(Builder& b, const int lat[2][3]) {
    int o1 = b.conv("out1", b.add({lat[0][0], lat[1][0]}));
    int o2 = b.conv("out2", b.add({lat[0][1], lat[1][1], b.up(o1)}));
    int o3 = b.conv("out3", b.add({lat[0][2], lat[1][2], b.up(o2)}));
    return {o1, o2, o3};
}

// Pre-chain over branch 1 alone, then the fused coarse-to-fine pass.
std::array<int, 3> build_prechain_topdown(Builder& b, const int lat[2][3],
                                          bool literal) {
    int t1 = b.conv("pre1", lat[0][0]);
    int t2 = b.conv("pre2", b.add({lat[0][1], b.up(t1)}));
    int t3 = literal
                 ? b.conv("pre3", b.add({b.up(lat[0][1]), b.up(t2)}))
                 : b.conv("pre3", b.add({lat[0][2], b.up(t2)}));
    int o1 = b.conv("out1", b.add({t1, lat[1][0]}));
    int o2 = b.conv("out2", b.add({t2, lat[1][1], b.up(o1)}));
    int o3 = b.conv("out3", b.add({t3, lat[1][2], b.up(o2)}));
    return {o1, o2, o3};
}

// Fine-to-coarse refit over an earlier pass's outputs. Evaluated finest
// level first since each coarser level consumes the previous refit.
std::array<int, 3> build_refit(Builder& b, const std::array<int, 3>& base) {
    int r3 = b.conv("refit3", base[2]);
    int r2 = b.conv("refit2", b.add({base[1], b.down(r3)}));
    int r1 = b.conv("refit1", b.add({base[0], b.down(r2)}));
    return {r1, r2, r3};
}

}  // namespace

FusionGraph build_fusion_graph(int variant, bool eq3_literal) {
    if (variant < 1 || variant > 4)
        throw InputError("ccfpn variant must be 1..4, got " + std::to_string(variant));
    Builder b;
    b.g.variant = variant;
    b.g.eq3_literal = variant >= 3 && eq3_literal;
    int lat[2][3];
    build_entry(b, lat);
    std::array<int, 3> out = variant <= 2
                                 ? build_topdown(b, lat)
                                 : build_prechain_topdown(b, lat, b.g.eq3_literal);
    if (variant == 2 || variant == 4) out = build_refit(b, out);
    b.g.outputs = out;
    return b.g;
}

namespace {

const char* op_label(FusionOp op) {
    switch (op) {
        case FusionOp::Input: return "input";
        case FusionOp::Lateral: return "lateral";
        case FusionOp::Conv: return "conv";
        case FusionOp::Add: return "add";
        case FusionOp::Up: return "up";
        case FusionOp::Down: return "down";
    }
    return "?";
}

}  // namespace

std::string ccfpn_graph_dump(const FusionGraph& g) {
    static const char* roman[4] = {"I", "II", "III", "IV"};
    std::ostringstream os;
    os << "ccfpn variant " << roman[g.variant - 1];
    if (g.variant >= 3)
        os << " eq3_literal=" << (g.eq3_literal ? "true" : "false");
    os << "\n";
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const FusionNode& n = g.nodes[i];
        os << std::setw(3) << i << ' ' << std::left << std::setw(7)
           << op_label(n.op) << std::right;
        if (!n.name.empty()) os << ' ' << n.name;
        if (n.op == FusionOp::Input)
            os << " [branch " << n.branch + 1 << " level " << n.level + 1 << "]";
        if (!n.args.empty()) {
            os << " <-";
            for (int a : n.args) os << ' ' << a;
        }
        os << '\n';
    }
    os << "outputs " << g.outputs[0] << ' ' << g.outputs[1] << ' '
       << g.outputs[2] << '\n';
    os << "counts lateral=" << g.count(FusionOp::Lateral)
       << " conv=" << g.count(FusionOp::Conv)
       << " add=" << g.count(FusionOp::Add)
       << " up=" << g.count(FusionOp::Up)
       << " down=" << g.count(FusionOp::Down) << '\n';
    return os.str();
}

Ccfpn::Ccfpn(ParamMap& pm, const std::string& prefix, const CcfpnConfig& cfg,
             const std::array<int, 3>& branch_widths, uint64_t seed)
    : cfg_(cfg), graph_(build_fusion_graph(cfg.variant, cfg.eq3_literal)) {
    cfg_.validate();
    for (const FusionNode& n : graph_.nodes) {
        if (n.op == FusionOp::Lateral) {
            const FusionNode& src = graph_.nodes[n.args[0]];
            laterals_.emplace_back(pm, prefix + "." + n.name,
                                   branch_widths[src.level], cfg.pyramid_width,
                                   1, 1, 0, true, seed);
        } else if (n.op == FusionOp::Conv) {
            convs_.emplace_back(pm, prefix + "." + n.name, cfg.pyramid_width,
                                cfg.pyramid_width, 3, 1, 1, true, seed);
        }
    }
}

Ccfpn::Result Ccfpn::forward(const PyramidSet& pin) const {
    for (int branch = 0; branch < 2; ++branch)
        for (int level = 0; level < 3; ++level)
            if (!pin.in[branch][level].defined())
                throw InputError("ccfpn: pyramid input [" + std::to_string(branch) +
                                 "][" + std::to_string(level) + "] is missing");
    const Shape& s0 = pin.in[0][0].shape();
    for (int branch = 0; branch < 2; ++branch)
        for (int level = 0; level < 3; ++level) {
            const Shape& s = pin.in[branch][level].shape();
            if (s.n != s0.n || s.h != s0.h << level || s.w != s0.w << level)
                throw ShapeError("ccfpn: pyramid extents must double per level, got " +
                                 s.str() + " at level " + std::to_string(level));
        }

    Result r;
    r.nodes.resize(graph_.nodes.size());
    for (size_t i = 0; i < graph_.nodes.size(); ++i) {
        const FusionNode& n = graph_.nodes[i];
        switch (n.op) {
            case FusionOp::Input:
                r.nodes[i] = pin.in[n.branch][n.level];
                break;
            case FusionOp::Lateral:
                r.nodes[i] = laterals_[n.conv_index].forward(r.nodes[n.args[0]]);
                break;
            case FusionOp::Conv:
                r.nodes[i] = leaky_relu(convs_[n.conv_index].forward(r.nodes[n.args[0]]));
                break;
            case FusionOp::Add: {
                std::vector<Tensor> terms;
                terms.reserve(n.args.size());
                for (int a : n.args) terms.push_back(r.nodes[a]);
                r.nodes[i] = add(terms);
                break;
            }
            case FusionOp::Up:
                r.nodes[i] = upsample2x(r.nodes[n.args[0]]);
                break;
            case FusionOp::Down:
                r.nodes[i] = downsample2x(r.nodes[n.args[0]]);
                break;
        }
    }
    for (int k = 0; k < 3; ++k) r.out[k] = r.nodes[graph_.outputs[k]];
    return r;
}

}  // namespace active
