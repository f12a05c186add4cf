#include "mnet/arch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>

namespace mnet {

void MNetConfig::validate() const
{
    check(grid_n >= 3 && grid_n % 2 == 1, ErrorKind::Config,
          "grid_n must be an odd integer >= 3, got ", grid_n);
    check(base_channels >= 1, ErrorKind::Config, "base_channels must be >= 1");
    check(channel_growth >= 1, ErrorKind::Config, "channel_growth must be >= 1");
    check(in_channels >= 1, ErrorKind::Config, "in_channels must be >= 1");
    check(num_classes >= 2, ErrorKind::Config, "num_classes must be >= 2");
    check(leaky_slope >= 0.0 && leaky_slope < 1.0, ErrorKind::Config,
          "leaky_slope must be in [0, 1)");
}

int channels_at_depth(int depth, const MNetConfig& config)
{
    check(depth >= 1 && depth <= config.grid_n, ErrorKind::Config, "depth ", depth,
          " out of range 1..", config.grid_n);
    return config.base_channels + config.channel_growth * (depth - 1);
}

const NodeSpec& GridArch::at(int i, int j) const
{
    const int n = config.grid_n;
    check(i >= 1 && i <= n && j >= 1 && j <= n, ErrorKind::Logic, "node (", i, ",", j,
          ") outside ", n, "x", n, " grid");
    return nodes[static_cast<size_t>((i - 1) * n + (j - 1))];
}

std::vector<GridPos> GridArch::aux_branches() const
{
    const int n = config.grid_n;
    std::vector<GridPos> out;
    for (int i = 2; i <= n - 1; ++i)
        out.push_back({i, n});
    for (int j = 2; j <= n - 1; ++j)
        out.push_back({n, j});
    return out;
}

double GridArch::aux_weight(GridPos branch) const
{
    const int n = config.grid_n;
    check((branch.i == n) != (branch.j == n), ErrorKind::Logic, "position ",
          pos_str(branch), " is not an aux branch");
    const int k = branch.i == n ? branch.j : branch.i;
    check(k >= 2 && k <= n - 1, ErrorKind::Logic, "position ", pos_str(branch),
          " is not an aux branch");
    return std::pow(0.5, n - k);
}

namespace {

NodeKind kind_at(int i, int j, int n)
{
    if (i == 1 && j == 1)
        return NodeKind::Both;
    if (i == n && j == n)
        return NodeKind::Both;
    if (i == 1)
        return NodeKind::TwoD; // first row
    if (j == n)
        return NodeKind::TwoD; // last column
    if (j == 1)
        return NodeKind::ThreeD; // first column
    if (i == n)
        return NodeKind::ThreeD; // last row
    return NodeKind::Both;
}

SourcePort port_for(const NodeSpec& source, StreamRole role)
{
    if (source.kind != NodeKind::Both)
        return SourcePort::SoleOut;
    return role == StreamRole::TwoDStream ? SourcePort::TwoDOut : SourcePort::ThreeDOut;
}

void transition_delta(Transition t, int& da, int& db)
{
    switch (t) {
    case Transition::Pool122: da = 0, db = 1; break;
    case Transition::Pool222: da = 1, db = 1; break;
    case Transition::Up122: da = 0, db = -1; break;
    case Transition::Up222: da = -1, db = -1; break;
    case Transition::SkipIdentity: da = 0, db = 0; break;
    }
}

void validate_grid(const GridArch& arch)
{
    const MNetConfig& cfg = arch.config;
    const int n = cfg.grid_n;
    int n2d = 0, n3d = 0, nboth = 0;
    for (const NodeSpec& node : arch.nodes) {
        switch (node.kind) {
        case NodeKind::TwoD: ++n2d; break;
        case NodeKind::ThreeD: ++n3d; break;
        case NodeKind::Both: ++nboth; break;
        }
        check(node.a >= 0 && node.a <= node.b && node.b <= n - 1, ErrorKind::Logic,
              "node ", pos_str(node.pos), " has invalid exponents a=", node.a,
              " b=", node.b);

        // edge transitions must equal the resolution-exponent delta
        std::vector<int> stream_bs;
        for (const EdgeSpec& e : node.incoming) {
            const NodeSpec& src = arch.at(e.source);
            int da = 0, db = 0;
            transition_delta(e.transition, da, db);
            check(src.a + da == node.a && src.b + db == node.b, ErrorKind::Logic,
                  "edge ", pos_str(e.source), " -> ", pos_str(node.pos), " (",
                  transition_name(e.transition), ") breaks the exponent invariant");
            if (e.transition != Transition::SkipIdentity)
                stream_bs.push_back(src.b);
        }
        // both stream parents sit at the same in-plane level, so the FMU
        // always merges equal channel counts
        for (size_t k = 1; k < stream_bs.size(); ++k)
            check(stream_bs[k] == stream_bs[0], ErrorKind::Logic, "node ",
                  pos_str(node.pos), " has stream parents at different levels");

        if (node.region == Region::Decoder) {
            check(node.skip_source.has_value(), ErrorKind::Logic, "decoder node ",
                  pos_str(node.pos), " lacks a skip source");
            const NodeSpec& mirror = arch.at(*node.skip_source);
            check(mirror.region == Region::Encoder, ErrorKind::Logic,
                  "skip source of ", pos_str(node.pos), " is not an encoder node");
            check(mirror.a == node.a && mirror.b == node.b, ErrorKind::Logic,
                  "mirror of ", pos_str(node.pos), " sits at different exponents");
            // involution: mirror of the mirror comes back
            GridPos back{n + 1 - node.pos.j, n + 1 - node.pos.i};
            check(back == mirror.pos, ErrorKind::Logic, "mirror map is not consistent");
        }
    }
    const int border = 2 * n - 3;
    check(n2d == border && n3d == border &&
              nboth == (n - 2) * (n - 2) + 2,
          ErrorKind::Logic, "node kind histogram is off: ", n2d, "/", n3d, "/", nboth);
}

} // namespace

GridArch build_grid(const MNetConfig& config)
{
    config.validate();
    const int n = config.grid_n;
    GridArch arch;
    arch.config = config;
    arch.nodes.resize(static_cast<size_t>(n) * n);

    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j) {
            NodeSpec node;
            node.pos = {i, j};
            node.kind = kind_at(i, j, n);
            node.region = (i + j <= n + 1) ? Region::Encoder : Region::Decoder;
            if (node.region == Region::Encoder) {
                node.a = i - 1;
                node.b = i + j - 2;
            } else {
                node.a = n - j;
                node.b = 2 * n - i - j;
            }
            node.depth = node.b + 1;
            node.out_channels = channels_at_depth(node.depth, config);

            if (node.region == Region::Encoder) {
                if (i == 1 && j == 1) {
                    node.in_channels = config.in_channels;
                } else {
                    node.in_channels = channels_at_depth(node.b, config);
                    if (j > 1) {
                        GridPos src{i, j - 1};
                        node.incoming.push_back({src, SourcePort::SoleOut,
                                                 Transition::Pool122,
                                                 StreamRole::TwoDStream});
                    }
                    if (i > 1) {
                        GridPos src{i - 1, j};
                        node.incoming.push_back({src, SourcePort::SoleOut,
                                                 Transition::Pool222,
                                                 StreamRole::ThreeDStream});
                    }
                }
            } else {
                // decoder: 2D stream upsampled from above, 3D stream from the
                // left, skip from the mirror encoder node
                node.in_channels = channels_at_depth(node.b + 2, config) +
                                   channels_at_depth(node.b + 1, config);
                node.incoming.push_back({GridPos{i - 1, j}, SourcePort::SoleOut,
                                         Transition::Up122, StreamRole::TwoDStream});
                node.incoming.push_back({GridPos{i, j - 1}, SourcePort::SoleOut,
                                         Transition::Up222, StreamRole::ThreeDStream});
                node.skip_source = GridPos{n + 1 - j, n + 1 - i};
            }
            arch.nodes[static_cast<size_t>((i - 1) * n + (j - 1))] = node;
        }

    // resolve source ports now that all kinds are known
    for (NodeSpec& node : arch.nodes)
        for (EdgeSpec& e : node.incoming) {
            const NodeSpec& src = arch.at(e.source);
            e.port = port_for(src, e.role);
        }

    validate_grid(arch);
    return arch;
}

std::vector<SerialPath> enumerate_serial_subnets(const MNetConfig& config)
{
    config.validate();
    const int steps = 2 * (config.grid_n - 1);
    const int downs = config.grid_n - 1;
    std::vector<SerialPath> out;
    std::string moves(static_cast<size_t>(steps), 'R');

    // lexicographic generation, 'D' < 'R'
    std::function<void(int, int)> rec = [&](int idx, int used_d) {
        if (idx == steps) {
            out.push_back(path_from_moves(config, moves));
            return;
        }
        const int remaining = steps - idx;
        const int need_d = downs - used_d;
        if (need_d > 0) {
            moves[static_cast<size_t>(idx)] = 'D';
            rec(idx + 1, used_d + 1);
        }
        if (remaining > need_d) {
            moves[static_cast<size_t>(idx)] = 'R';
            rec(idx + 1, used_d);
        }
        moves[static_cast<size_t>(idx)] = 'R';
    };
    rec(0, 0);
    return out;
}

SerialPath path_from_moves(const MNetConfig& config, std::string_view moves_in)
{
    const int n = config.grid_n;
    std::string moves;
    if (moves_in == "2d") {
        moves = std::string(static_cast<size_t>(n - 1), 'R') +
                std::string(static_cast<size_t>(n - 1), 'D');
    } else if (moves_in == "3d") {
        moves = std::string(static_cast<size_t>(n - 1), 'D') +
                std::string(static_cast<size_t>(n - 1), 'R');
    } else {
        moves.assign(moves_in.begin(), moves_in.end());
        for (char& c : moves)
            c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    check(static_cast<int>(moves.size()) == 2 * (n - 1), ErrorKind::Config,
          "path must have ", 2 * (n - 1), " moves for a ", n, "x", n, " grid, got \"",
          moves, "\"");
    int downs = 0, rights = 0;
    for (char c : moves) {
        check(c == 'R' || c == 'D', ErrorKind::Config, "path moves must be R or D, got '",
              c, "'");
        c == 'D' ? ++downs : ++rights;
    }
    check(downs == n - 1 && rights == n - 1, ErrorKind::Config,
          "path needs exactly ", n - 1, " downs and ", n - 1, " rights, got ", downs,
          "/", rights);

    SerialPath path;
    path.moves = moves;
    GridPos pos{1, 1};
    path.nodes.push_back(pos);
    for (char c : moves) {
        if (c == 'D')
            ++pos.i;
        else
            ++pos.j;
        const bool encoder = pos.i + pos.j <= n + 1;
        Transition t;
        if (encoder)
            t = (c == 'R') ? Transition::Pool122 : Transition::Pool222;
        else
            t = (c == 'R') ? Transition::Up222 : Transition::Up122;
        path.nodes.push_back(pos);
        path.transitions.push_back(t);
    }
    return path;
}

SubnetSpec extract_subnet(const MNetConfig& config, const SerialPath& path)
{
    config.validate();
    const int n = config.grid_n;
    check(path.nodes.size() == static_cast<size_t>(2 * n - 1) &&
              path.transitions.size() == path.nodes.size() - 1 &&
              path.nodes.front() == GridPos{1, 1} && path.nodes.back() == GridPos{n, n},
          ErrorKind::Config, "invalid serial path");

    GridArch grid = build_grid(config);
    SubnetSpec spec;
    spec.config = config;
    spec.path = path;
    spec.stages.resize(path.nodes.size());

    for (size_t k = 0; k < path.nodes.size(); ++k) {
        SubnetSpec::Stage& st = spec.stages[k];
        const NodeSpec& mesh_node = grid.at(path.nodes[k]);
        st.pos = path.nodes[k];
        st.region = mesh_node.region;
        st.a = mesh_node.a;
        st.b = mesh_node.b;
        st.out_channels = mesh_node.out_channels;
        if (k > 0)
            st.incoming = path.transitions[k - 1];

        // block kind: single-block mesh nodes use their only block; Both
        // nodes follow the stream dimension of the outgoing step (incoming
        // step for the terminal node)
        if (mesh_node.kind == NodeKind::TwoD) {
            st.three_d = false;
        } else if (mesh_node.kind == NodeKind::ThreeD) {
            st.three_d = true;
        } else {
            const Transition ref = (k + 1 < path.nodes.size()) ? path.transitions[k]
                                                               : path.transitions[k - 1];
            st.three_d = (ref == Transition::Pool222 || ref == Transition::Up222);
        }

        if (k == 0) {
            st.in_channels = config.in_channels;
        } else if (st.region == Region::Encoder) {
            st.in_channels = channels_at_depth(st.b, config);
        } else {
            st.in_channels = channels_at_depth(st.b + 2, config);
            // classic U-Net skip when the mirror encoder node lies on the path
            const GridPos mirror{n + 1 - st.pos.j, n + 1 - st.pos.i};
            for (size_t m = 0; m < k; ++m)
                if (path.nodes[m] == mirror) {
                    st.skip_stage = static_cast<int>(m);
                    st.in_channels += channels_at_depth(st.b + 1, config);
                    break;
                }
        }
    }
    return spec;
}

std::vector<SpacingState> physical_spacing_along_path(
    std::array<double, 3> input_spacing_mm, const std::vector<Transition>& transitions)
{
    for (double s : input_spacing_mm)
        check(s > 0.0, ErrorKind::Config, "spacing components must be positive");

    auto isotropic = [](const std::array<double, 3>& s) {
        const double mx = std::max({s[0], s[1], s[2]});
        const double mn = std::min({s[0], s[1], s[2]});
        return (mx - mn) <= 1e-9 * mx;
    };

    std::vector<SpacingState> out;
    SpacingState cur{input_spacing_mm, isotropic(input_spacing_mm)};
    out.push_back(cur);
    for (Transition t : transitions) {
        switch (t) {
        case Transition::Pool122:
            cur.spacing_mm[1] *= 2.0;
            cur.spacing_mm[2] *= 2.0;
            break;
        case Transition::Pool222:
            cur.spacing_mm[0] *= 2.0;
            cur.spacing_mm[1] *= 2.0;
            cur.spacing_mm[2] *= 2.0;
            break;
        case Transition::Up122:
            cur.spacing_mm[1] /= 2.0;
            cur.spacing_mm[2] /= 2.0;
            break;
        case Transition::Up222:
            cur.spacing_mm[0] /= 2.0;
            cur.spacing_mm[1] /= 2.0;
            cur.spacing_mm[2] /= 2.0;
            break;
        case Transition::SkipIdentity:
            break;
        }
        cur.isotropic = isotropic(cur.spacing_mm);
        out.push_back(cur);
    }
    return out;
}

namespace {

int64_t block_param_count(int64_t in_ch, int64_t out_ch, bool three_d)
{
    const int64_t k = three_d ? 27 : 9;
    const int64_t conv1 = in_ch * out_ch * k + out_ch;
    const int64_t conv2 = out_ch * out_ch * k + out_ch;
    const int64_t norms = 2 * 2 * out_ch; // gamma + beta per conv
    return conv1 + conv2 + norms;
}

int64_t head_param_count(int64_t in_ch, int64_t classes)
{
    return in_ch * classes + classes;
}

} // namespace

int64_t node_param_count(const NodeSpec& node, const MNetConfig&)
{
    int64_t total = 0;
    if (node.has_2d())
        total += block_param_count(node.in_channels, node.out_channels, false);
    if (node.has_3d())
        total += block_param_count(node.in_channels, node.out_channels, true);
    return total;
}

int64_t param_count(const GridArch& arch)
{
    int64_t total = 0;
    for (const NodeSpec& node : arch.nodes)
        total += node_param_count(node, arch.config);
    // main head consumes the concatenated 2D+3D outputs of the (n,n) node
    const int k1 = channels_at_depth(1, arch.config);
    total += head_param_count(2 * k1, arch.config.num_classes);
    for (GridPos p : arch.aux_branches())
        total += head_param_count(arch.at(p).out_channels, arch.config.num_classes);
    return total;
}

int64_t param_count(const SubnetSpec& subnet)
{
    int64_t total = 0;
    for (const auto& st : subnet.stages)
        total += block_param_count(st.in_channels, st.out_channels, st.three_d);
    total += head_param_count(subnet.stages.back().out_channels,
                              subnet.config.num_classes);
    return total;
}

const char* node_kind_name(NodeKind k)
{
    switch (k) {
    case NodeKind::TwoD: return "2d";
    case NodeKind::ThreeD: return "3d";
    case NodeKind::Both: return "both";
    }
    return "?";
}

const char* transition_name(Transition t)
{
    switch (t) {
    case Transition::Pool122: return "pool(1,2,2)";
    case Transition::Pool222: return "pool(2,2,2)";
    case Transition::Up122: return "up(1,2,2)";
    case Transition::Up222: return "up(2,2,2)";
    case Transition::SkipIdentity: return "skip";
    }
    return "?";
}

const char* fmu_mode_name(FmuMode m)
{
    return m == FmuMode::Sub ? "sub" : "sum";
}

FmuMode fmu_mode_from_name(std::string_view name)
{
    if (name == "sub" || name == "Sub")
        return FmuMode::Sub;
    if (name == "sum" || name == "Sum")
        return FmuMode::Sum;
    fail(ErrorKind::Config, "unknown FMU mode \"", name, "\" (expected sub|sum)");
}

} // namespace mnet
