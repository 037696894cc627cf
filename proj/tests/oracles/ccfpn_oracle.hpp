#pragma once

// Straight-line transcription of the four fusion variants, written directly
// from the equations with no graph machinery. Sums are associated pairwise
// left-to-right, unlike the graph's n-ary add, so agreement is numeric
// (<= 1e-12), not bitwise.

#include <array>
#include <string>

#include "active/dbfen.hpp"
#include "active/ops.hpp"
#include "active/params.hpp"

namespace active::oracle {

inline Tensor lat_conv(const ParamMap& pm, const std::string& prefix,
                       const std::string& name, const Tensor& x) {
    return conv2d(x, pm.params.at(prefix + "." + name + ".w"),
                  pm.params.at(prefix + "." + name + ".b"), 1, 0);
}

inline Tensor fuse_conv(const ParamMap& pm, const std::string& prefix,
                        const std::string& name, const Tensor& x) {
    return leaky_relu(conv2d(x, pm.params.at(prefix + "." + name + ".w"),
                             pm.params.at(prefix + "." + name + ".b"), 1, 1));
}

inline std::array<Tensor, 3> ccfpn_forward(int variant, bool eq3_literal,
                                           const ParamMap& pm,
                                           const std::string& prefix,
                                           const PyramidSet& pin) {
    auto L = [&](int branch, int level) {
        std::string name = "lat" + std::to_string(branch + 1) + std::to_string(level + 1);
        return lat_conv(pm, prefix, name, pin.in[branch][level]);
    };
    auto C = [&](const char* name, const Tensor& x) { return fuse_conv(pm, prefix, name, x); };

    Tensor l11 = L(0, 0), l21 = L(1, 0);
    Tensor l12 = L(0, 1), l22 = L(1, 1);
    Tensor l13 = L(0, 2), l23 = L(1, 2);

    Tensor o1, o2, o3;
    if (variant <= 2) {
        o1 = C("out1", add2(l11, l21));
        o2 = C("out2", add2(add2(l12, l22), upsample2x(o1)));
        o3 = C("out3", add2(add2(l13, l23), upsample2x(o2)));
    } else {
        Tensor t1 = C("pre1", l11);
        Tensor t2 = C("pre2", add2(l12, upsample2x(t1)));
        Tensor t3 = eq3_literal
                        ? C("pre3", add2(upsample2x(l12), upsample2x(t2)))
                        : C("pre3", add2(l13, upsample2x(t2)));
        o1 = C("out1", add2(t1, l21));
        o2 = C("out2", add2(add2(t2, l22), upsample2x(o1)));
        o3 = C("out3", add2(add2(t3, l23), upsample2x(o2)));
    }
    if (variant == 2 || variant == 4) {
        Tensor r3 = C("refit3", o3);
        Tensor r2 = C("refit2", add2(o2, downsample2x(r3)));
        Tensor r1 = C("refit1", add2(o1, downsample2x(r2)));
        return {r1, r2, r3};
    }
    return {o1, o2, o3};
}

}  // namespace active::oracle
