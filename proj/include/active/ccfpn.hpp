#pragma once

#include <array>
#include <string>
#include <vector>

#include "active/dbfen.hpp"
#include "active/params.hpp"
#include "active/tensor.hpp"

namespace active {

struct CcfpnConfig {
    int variant = 4;  // 1..4
    int pyramid_width = 64;
    // The third pre-chain line as printed adds a feature to an upsample of
    // its own level, which cannot type-check; false substitutes the
    // next-finer input (the pattern of the first two lines), true keeps the
    // printed operand list and upsamples it for resolution matching.
    bool eq3_literal = false;

    void validate() const;
};

enum class FusionOp { Input, Lateral, Conv, Add, Up, Down };

// One step of the fusion dataflow. args index earlier nodes only, so the
// node list is its own topological order.
struct FusionNode {
    FusionOp op;
    std::string name;       // stable label; empty for add/up/down
    std::vector<int> args;
    int branch = 0;         // Input only: 0 or 1
    int level = 0;          // Input only: 0 coarsest .. 2 finest
    int conv_index = -1;    // Conv/Lateral: index into the owning weight list
};

struct FusionGraph {
    int variant = 1;
    bool eq3_literal = false;
    std::vector<FusionNode> nodes;
    std::array<int, 3> outputs{};  // node ids of the coarse..fine outputs

    int count(FusionOp op) const;
};

// Builds the dataflow for one variant. Variant 2's node list starts with
// variant 1's entire list; likewise 4 with 3.
FusionGraph build_fusion_graph(int variant, bool eq3_literal);

// Deterministic textual rendering, one node per line plus edge counts.
std::string ccfpn_graph_dump(const FusionGraph& g);

class Ccfpn {
  public:
    // branch_widths: input channels per level (0 coarsest .. 2 finest),
    // identical for both branches by backbone construction.
    Ccfpn(ParamMap& pm, const std::string& prefix, const CcfpnConfig& cfg,
          const std::array<int, 3>& branch_widths, uint64_t seed);

    struct Result {
        std::array<Tensor, 3> out;   // 0 coarsest .. 2 finest
        std::vector<Tensor> nodes;   // value of every graph node
    };
    Result forward(const PyramidSet& pin) const;

    const FusionGraph& graph() const { return graph_; }
    const CcfpnConfig& config() const { return cfg_; }

  private:
    CcfpnConfig cfg_;
    FusionGraph graph_;
    std::vector<ConvLayer> laterals_;  // 6, by lateral conv_index
    std::vector<ConvLayer> convs_;     // fusion convs, by conv_index
};

}  // namespace active
