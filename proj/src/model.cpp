#include "mnet/model.hpp"

#include <cmath>

#include "mnet/rng.hpp"

namespace mnet {

template <typename T>
Tensor<T> fmu_merge(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>* b, FmuMode mode)
{
    if (b == nullptr)
        return a;
    if (mode == FmuMode::Sum)
        return ops::add(tape, a, *b);
    return ops::abs(tape, ops::sub(tape, a, *b));
}

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
class ParamBuilder {
public:
    ParamBuilder(std::vector<NamedParam<T>>& params, uint64_t seed, double leaky_slope)
        : params_(params), rng_(make_rng(seed, 0)),
          gain_(std::sqrt(2.0 / (1.0 + leaky_slope * leaky_slope)))
    {
    }

    Tensor<T> he_normal(const std::string& name, Shape shape, int64_t fan_in)
    {
        Tensor<T> t(shape, /*requires_grad=*/true);
        std::normal_distribution<double> dist(0.0, gain_ / std::sqrt(double(fan_in)));
        for (int64_t i = 0; i < t.numel(); ++i)
            t.data()[i] = static_cast<T>(dist(rng_));
        params_.push_back({name, t});
        return t;
    }

    Tensor<T> constant(const std::string& name, Shape shape, T value)
    {
        Tensor<T> t(shape, /*requires_grad=*/true);
        std::fill(t.values().begin(), t.values().end(), value);
        params_.push_back({name, t});
        return t;
    }

private:
    std::vector<NamedParam<T>>& params_;
    Rng rng_;
    double gain_;
};

template <typename T>
detail::ConvBlock<T> build_block(ParamBuilder<T>& pb, const std::string& prefix,
                                 int in_ch, int out_ch, bool three_d)
{
    detail::ConvBlock<T> blk;
    blk.three_d = three_d;
    blk.in_ch = in_ch;
    blk.out_ch = out_ch;
    const int64_t kd = three_d ? 3 : 1;
    blk.pad = three_d ? std::array<int64_t, 3>{1, 1, 1} : std::array<int64_t, 3>{0, 1, 1};
    blk.w1 = pb.he_normal(prefix + ".conv1.weight", Shape{out_ch, in_ch, kd, 3, 3},
                          int64_t(in_ch) * kd * 9);
    blk.b1 = pb.constant(prefix + ".conv1.bias", Shape{out_ch}, T(0));
    blk.g1 = pb.constant(prefix + ".norm1.gamma", Shape{out_ch}, T(1));
    blk.be1 = pb.constant(prefix + ".norm1.beta", Shape{out_ch}, T(0));
    blk.w2 = pb.he_normal(prefix + ".conv2.weight", Shape{out_ch, out_ch, kd, 3, 3},
                          int64_t(out_ch) * kd * 9);
    blk.b2 = pb.constant(prefix + ".conv2.bias", Shape{out_ch}, T(0));
    blk.g2 = pb.constant(prefix + ".norm2.gamma", Shape{out_ch}, T(1));
    blk.be2 = pb.constant(prefix + ".norm2.beta", Shape{out_ch}, T(0));
    return blk;
}

// Prediction heads start at zero so the initial class distribution is
// uniform. Randomly scaled 1x1x1 heads hand one class most of the early
// probability mass, and the momentum-amplified correction that follows
// drives rare classes into saturation they cannot recover from within a
// short run.
template <typename T>
detail::PredHead<T> build_head(ParamBuilder<T>& pb, const std::string& prefix, int in_ch,
                               int classes)
{
    detail::PredHead<T> head;
    head.w = pb.constant(prefix + ".weight", Shape{classes, in_ch, 1, 1, 1}, T(0));
    head.b = pb.constant(prefix + ".bias", Shape{classes}, T(0));
    return head;
}

template <typename T>
Tensor<T> block_forward(Tape<T>& tape, const detail::ConvBlock<T>& blk,
                        const Tensor<T>& input, T slope)
{
    check(input.shape()[1] == blk.in_ch, ErrorKind::Shape,
          "block input carries ", input.shape()[1],
          " channels but the channel schedule expects ", blk.in_ch);
    Tensor<T> h = ops::conv3d(tape, input, blk.w1, blk.b1, blk.pad);
    h = ops::instance_norm(tape, h, blk.g1, blk.be1, static_cast<T>(kNormEps));
    h = ops::leaky_relu(tape, h, slope);
    h = ops::conv3d(tape, h, blk.w2, blk.b2, blk.pad);
    h = ops::instance_norm(tape, h, blk.g2, blk.be2, static_cast<T>(kNormEps));
    return ops::leaky_relu(tape, h, slope);
}

template <typename T>
Tensor<T> head_forward(Tape<T>& tape, const detail::PredHead<T>& head,
                       const Tensor<T>& input)
{
    return ops::conv3d(tape, input, head.w, head.b, {0, 0, 0});
}

template <typename T>
struct NodeOut {
    Tensor<T> out2d, out3d;
};

// Output of `src` carried by an edge with the given port.
template <typename T>
const Tensor<T>& port_output(const NodeOut<T>& out, SourcePort port, const NodeSpec& src)
{
    switch (port) {
    case SourcePort::TwoDOut:
        return out.out2d;
    case SourcePort::ThreeDOut:
        return out.out3d;
    case SourcePort::SoleOut:
    default:
        return src.has_2d() ? out.out2d : out.out3d;
    }
}

void validate_batch_shape(const Shape& shape, const MNetConfig& cfg)
{
    check(shape.rank() == 5, ErrorKind::Shape, "model input must be rank 5 [N,C,z,y,x]");
    check(shape[1] == cfg.in_channels, ErrorKind::Shape, "model input has ", shape[1],
          " channels, config expects ", cfg.in_channels);
    const int64_t min_extent = int64_t(1) << (cfg.grid_n - 1);
    for (int axis = 2; axis < 5; ++axis)
        check(shape[axis] >= min_extent, ErrorKind::Shape, "spatial extent ", shape[axis],
              " cannot survive ", cfg.grid_n - 1, " poolings (needs >= ", min_extent,
              ")");
}

ops::Extent3 shape_at(const Shape& batch, int a, int b)
{
    return {batch[2] >> a, batch[3] >> b, batch[4] >> b};
}

} // namespace

// ---- MeshModel ----

template <typename T>
MeshModel<T>::MeshModel(const MNetConfig& config, uint64_t seed)
    : arch_(build_grid(config))
{
    ParamBuilder<T> pb(params_, seed, config.leaky_slope);
    nodes_.resize(arch_.nodes.size());
    for (size_t idx = 0; idx < arch_.nodes.size(); ++idx) {
        const NodeSpec& node = arch_.nodes[idx];
        const std::string prefix = "node" + pos_str(node.pos);
        if (node.has_2d())
            nodes_[idx].b2d = build_block(pb, prefix + ".2d", node.in_channels,
                                          node.out_channels, false);
        if (node.has_3d())
            nodes_[idx].b3d = build_block(pb, prefix + ".3d", node.in_channels,
                                          node.out_channels, true);
    }
    const int k1 = channels_at_depth(1, config);
    main_head_ = build_head(pb, "head.main", 2 * k1, config.num_classes);
    for (GridPos p : arch_.aux_branches())
        aux_heads_.push_back(build_head(pb, "head.aux" + pos_str(p),
                                        arch_.at(p).out_channels, config.num_classes));
}

template <typename T>
typename Model<T>::Outputs MeshModel<T>::forward(Tape<T>& tape, const Tensor<T>& batch)
{
    const MNetConfig& cfg = arch_.config;
    validate_batch_shape(batch.shape(), cfg);
    const int n = cfg.grid_n;
    const T slope = static_cast<T>(cfg.leaky_slope);

    std::vector<NodeOut<T>> outs(arch_.nodes.size());
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j) {
            const size_t idx = static_cast<size_t>((i - 1) * n + (j - 1));
            const NodeSpec& node = arch_.nodes[idx];

            Tensor<T> block_in;
            if (node.pos == GridPos{1, 1}) {
                block_in = batch;
            } else if (node.region == Region::Encoder) {
                std::vector<Tensor<T>> streams;
                for (const EdgeSpec& e : node.incoming) {
                    const size_t src_idx =
                        static_cast<size_t>((e.source.i - 1) * n + (e.source.j - 1));
                    const Tensor<T>& src = port_output(outs[src_idx], e.port,
                                                       arch_.nodes[src_idx]);
                    const ops::Extent3 window = e.transition == Transition::Pool122
                                                    ? ops::Extent3{1, 2, 2}
                                                    : ops::Extent3{2, 2, 2};
                    streams.push_back(ops::maxpool3d(tape, src, window));
                }
                block_in = fmu_merge(tape, streams[0],
                                     streams.size() > 1 ? &streams[1] : nullptr,
                                     cfg.fmu_mode);
            } else {
                const ops::Extent3 target = shape_at(batch.shape(), node.a, node.b);
                std::vector<Tensor<T>> streams;
                for (const EdgeSpec& e : node.incoming) {
                    const size_t src_idx =
                        static_cast<size_t>((e.source.i - 1) * n + (e.source.j - 1));
                    const Tensor<T>& src = port_output(outs[src_idx], e.port,
                                                       arch_.nodes[src_idx]);
                    streams.push_back(ops::upsample_trilinear(tape, src, target));
                }
                Tensor<T> merged = fmu_merge(tape, streams[0],
                                             streams.size() > 1 ? &streams[1] : nullptr,
                                             cfg.fmu_mode);

                const NodeSpec& mirror = arch_.at(*node.skip_source);
                const size_t mirror_idx =
                    static_cast<size_t>((mirror.pos.i - 1) * n + (mirror.pos.j - 1));
                const NodeOut<T>& mo = outs[mirror_idx];
                Tensor<T> skip;
                if (mirror.kind == NodeKind::Both)
                    skip = fmu_merge(tape, mo.out2d, &mo.out3d, cfg.fmu_mode);
                else
                    skip = mirror.has_2d() ? mo.out2d : mo.out3d;
                block_in = ops::concat_channels(tape, skip, merged);
            }

            if (nodes_[idx].b2d)
                outs[idx].out2d = block_forward(tape, *nodes_[idx].b2d, block_in, slope);
            if (nodes_[idx].b3d)
                outs[idx].out3d = block_forward(tape, *nodes_[idx].b3d, block_in, slope);
        }

    typename Model<T>::Outputs result;
    const size_t last = static_cast<size_t>(n * n - 1);
    Tensor<T> final_features =
        ops::concat_channels(tape, outs[last].out2d, outs[last].out3d);
    result.main = head_forward(tape, main_head_, final_features);

    const auto branches = arch_.aux_branches();
    for (size_t k = 0; k < branches.size(); ++k) {
        const NodeSpec& node = arch_.at(branches[k]);
        const size_t idx =
            static_cast<size_t>((branches[k].i - 1) * n + (branches[k].j - 1));
        const Tensor<T>& feat = node.has_2d() ? outs[idx].out2d : outs[idx].out3d;
        result.aux.emplace_back(branches[k], head_forward(tape, aux_heads_[k], feat));
    }
    return result;
}

// ---- SubnetModel ----

template <typename T>
SubnetModel<T>::SubnetModel(const MNetConfig& config, const SerialPath& path,
                            uint64_t seed)
    : spec_(extract_subnet(config, path))
{
    ParamBuilder<T> pb(params_, seed, config.leaky_slope);
    for (size_t k = 0; k < spec_.stages.size(); ++k) {
        const auto& st = spec_.stages[k];
        const std::string prefix = "stage" + std::to_string(k) + pos_str(st.pos);
        blocks_.push_back(
            build_block(pb, prefix, st.in_channels, st.out_channels, st.three_d));
    }
    head_ = build_head(pb, "head.main", spec_.stages.back().out_channels,
                       config.num_classes);
}

template <typename T>
typename Model<T>::Outputs SubnetModel<T>::forward(Tape<T>& tape, const Tensor<T>& batch)
{
    const MNetConfig& cfg = spec_.config;
    validate_batch_shape(batch.shape(), cfg);
    const T slope = static_cast<T>(cfg.leaky_slope);

    std::vector<Tensor<T>> stage_out(spec_.stages.size());
    Tensor<T> cur = batch;
    for (size_t k = 0; k < spec_.stages.size(); ++k) {
        const auto& st = spec_.stages[k];
        Tensor<T> block_in = cur;
        if (st.incoming) {
            switch (*st.incoming) {
            case Transition::Pool122:
                block_in = ops::maxpool3d(tape, cur, {1, 2, 2});
                break;
            case Transition::Pool222:
                block_in = ops::maxpool3d(tape, cur, {2, 2, 2});
                break;
            case Transition::Up122:
            case Transition::Up222:
                block_in = ops::upsample_trilinear(tape, cur,
                                                   shape_at(batch.shape(), st.a, st.b));
                break;
            default:
                fail(ErrorKind::Logic, "unexpected transition in subnet path");
            }
        }
        if (st.skip_stage)
            block_in = ops::concat_channels(
                tape, stage_out[static_cast<size_t>(*st.skip_stage)], block_in);
        cur = block_forward(tape, blocks_[k], block_in, slope);
        stage_out[k] = cur;
    }

    typename Model<T>::Outputs result;
    result.main = head_forward(tape, head_, cur);
    return result;
}

template <typename T>
std::unique_ptr<Model<T>> make_model(const MNetConfig& config, const std::string& arch_id,
                                     uint64_t seed)
{
    config.validate();
    if (arch_id == "mesh" || arch_id.empty())
        return std::make_unique<MeshModel<T>>(config, seed);
    const std::string prefix = "subnet:";
    if (arch_id.rfind(prefix, 0) == 0) {
        SerialPath path = path_from_moves(config, arch_id.substr(prefix.size()));
        return std::make_unique<SubnetModel<T>>(config, path, seed);
    }
    fail(ErrorKind::Config, "unknown arch \"", arch_id, "\" (expected mesh|subnet:<moves>)");
}

template class MeshModel<float>;
template class MeshModel<double>;
template class SubnetModel<float>;
template class SubnetModel<double>;

template Tensor<float> fmu_merge<float>(Tape<float>&, const Tensor<float>&,
                                        const Tensor<float>*, FmuMode);
template Tensor<double> fmu_merge<double>(Tape<double>&, const Tensor<double>&,
                                          const Tensor<double>*, FmuMode);
template std::unique_ptr<Model<float>> make_model<float>(const MNetConfig&,
                                                         const std::string&, uint64_t);
template std::unique_ptr<Model<double>> make_model<double>(const MNetConfig&,
                                                           const std::string&, uint64_t);

} // namespace mnet
