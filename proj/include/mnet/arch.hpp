#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mnet/common.hpp"

// Declarative description of the mesh segmentation architecture: an n-by-n
// grid of modules mixing 2D (1x3x3) and 3D (3x3x3) convolution blocks, with
// pooling edges in the encoder half, upsampling plus mirror skips in the
// decoder half, and feature merging at every junction.

namespace mnet {

enum class NodeKind { TwoD, ThreeD, Both };
enum class Region { Encoder, Decoder };
enum class FmuMode { Sub, Sum };

// Resolution change carried by an edge, expressed as pooling/upsampling
// factors over (z, y, x).
enum class Transition { Pool122, Pool222, Up122, Up222, SkipIdentity };

// Which output of the source node the edge carries.
enum class SourcePort { TwoDOut, ThreeDOut, SoleOut };

// Receiver-side role: (1,2,2) edges feed the 2D stream, (2,2,2) edges the
// 3D stream.
enum class StreamRole { TwoDStream, ThreeDStream };

struct GridPos {
    int i = 0; // row, 1-based
    int j = 0; // column, 1-based
    bool operator==(const GridPos& o) const { return i == o.i && j == o.j; }
    bool operator!=(const GridPos& o) const { return !(*this == o); }
};

inline std::string pos_str(GridPos p)
{
    return str_cat("(", p.i, ",", p.j, ")");
}

struct MNetConfig {
    int grid_n = 5;
    int base_channels = 32;
    int channel_growth = 16;
    FmuMode fmu_mode = FmuMode::Sub;
    int in_channels = 1;
    int num_classes = 2;
    double leaky_slope = 0.01;

    void validate() const;
};

struct EdgeSpec {
    GridPos source;
    SourcePort port = SourcePort::SoleOut;
    Transition transition = Transition::SkipIdentity;
    StreamRole role = StreamRole::TwoDStream;
};

struct NodeSpec {
    GridPos pos;
    NodeKind kind = NodeKind::Both;
    Region region = Region::Encoder;
    int a = 0;     // z downsampling exponent
    int b = 0;     // in-plane downsampling exponent
    int depth = 1; // b + 1
    int in_channels = 0;  // channels entering each block (after FMU/concat)
    int out_channels = 0; // channels each present block emits
    std::vector<EdgeSpec> incoming;       // stream edges, 2D stream first
    std::optional<GridPos> skip_source;   // decoder only: mirror encoder node

    bool has_2d() const { return kind != NodeKind::ThreeD; }
    bool has_3d() const { return kind != NodeKind::TwoD; }
};

struct GridArch {
    MNetConfig config;
    std::vector<NodeSpec> nodes; // row-major, (1,1) first

    const NodeSpec& at(int i, int j) const;
    const NodeSpec& at(GridPos p) const { return at(p.i, p.j); }

    // Deep-supervision branch positions in fixed order:
    // (2,n)..(n-1,n), then (n,2)..(n,n-1).
    std::vector<GridPos> aux_branches() const;

    // Eq-weights for the aux losses: branch index k (the non-border row or
    // column coordinate) gets (1/2)^(n-k).
    double aux_weight(GridPos branch) const;
};

// K(depth) = base + growth * (depth - 1); valid depths are 1..grid_n.
int channels_at_depth(int depth, const MNetConfig& config);

GridArch build_grid(const MNetConfig& config);

// Per-step transitions of a monotone right/down staircase path.
struct SerialPath {
    std::vector<GridPos> nodes;          // 2n-1 nodes, (1,1) .. (n,n)
    std::vector<Transition> transitions; // 2n-2 steps
    std::string moves;                   // e.g. "RRRRDDDD"
};

// All monotone staircase paths (1,1) -> (n,n), lexicographic in move string
// (D before R).
std::vector<SerialPath> enumerate_serial_subnets(const MNetConfig& config);

// Builds the path for an explicit move string ('R'/'D'); accepts the
// aliases "2d" (all-right-then-down) and "3d" (all-down-then-right).
SerialPath path_from_moves(const MNetConfig& config, std::string_view moves);

// Standalone serial encoder-decoder extracted from the mesh: one block per
// visited node, classic skip concatenation where the mirror encoder node
// lies on the path.
struct SubnetSpec {
    struct Stage {
        GridPos pos;
        bool three_d = false; // block kind used at this stage
        Region region = Region::Encoder;
        int a = 0, b = 0;
        int in_channels = 0;
        int out_channels = 0;
        std::optional<Transition> incoming;  // absent for the first stage
        std::optional<int> skip_stage;       // index of the mirror stage
    };
    MNetConfig config;
    SerialPath path;
    std::vector<Stage> stages;
};

SubnetSpec extract_subnet(const MNetConfig& config, const SerialPath& path);

// Voxel spacing after each transition, plus an isotropy flag. Entry 0 is
// the input spacing itself.
struct SpacingState {
    std::array<double, 3> spacing_mm{1, 1, 1}; // (z, y, x)
    bool isotropic = false;
};
std::vector<SpacingState> physical_spacing_along_path(
    std::array<double, 3> input_spacing_mm, const std::vector<Transition>& transitions);

// Analytic trainable-parameter counts (conv weights/biases + IN affine
// terms + prediction heads). The model implementation must agree exactly.
int64_t node_param_count(const NodeSpec& node, const MNetConfig& config);
int64_t param_count(const GridArch& arch);
int64_t param_count(const SubnetSpec& subnet);

const char* node_kind_name(NodeKind k);
const char* transition_name(Transition t);
const char* fmu_mode_name(FmuMode m);
FmuMode fmu_mode_from_name(std::string_view name);

} // namespace mnet
