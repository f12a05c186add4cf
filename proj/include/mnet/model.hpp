#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mnet/arch.hpp"
#include "mnet/ops.hpp"
#include "mnet/tape.hpp"
#include "mnet/tensor.hpp"

namespace mnet {

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

// Feature merging unit: Sub -> abs(a - b), Sum -> a + b. A single present
// input passes through untouched (border skips whose mirror node has one
// block).
template <typename T>
Tensor<T> fmu_merge(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>* b, FmuMode mode);

namespace detail {

// Two conv layers, each followed by instance norm and LeakyReLU.
template <typename T>
struct ConvBlock {
    Tensor<T> w1, b1, g1, be1;
    Tensor<T> w2, b2, g2, be2;
    std::array<int64_t, 3> pad{0, 1, 1};
    bool three_d = false;
    int in_ch = 0, out_ch = 0;
};

// 1x1x1 prediction head.
template <typename T>
struct PredHead {
    Tensor<T> w, b;
};

template <typename T>
struct MeshNodeModule {
    std::optional<ConvBlock<T>> b2d, b3d;
};

} // namespace detail

template <typename T>
class Model {
public:
    struct Outputs {
        Tensor<T> main;
        std::vector<std::pair<GridPos, Tensor<T>>> aux; // empty for subnets
    };

    virtual ~Model() = default;
    virtual Outputs forward(Tape<T>& tape, const Tensor<T>& batch) = 0;
    virtual const std::vector<NamedParam<T>>& parameters() const = 0;
    virtual const MNetConfig& config() const = 0;
    virtual std::string arch_id() const = 0;

    int64_t parameter_count() const
    {
        int64_t total = 0;
        for (const auto& p : parameters())
            total += p.tensor.numel();
        return total;
    }
};

// The full mesh: grid of 2D/3D conv blocks, feature merging at every node,
// mirror skips in the decoder, one main head plus deep-supervision heads.
template <typename T>
class MeshModel : public Model<T> {
public:
    MeshModel(const MNetConfig& config, uint64_t seed);

    typename Model<T>::Outputs forward(Tape<T>& tape, const Tensor<T>& batch) override;
    const std::vector<NamedParam<T>>& parameters() const override { return params_; }
    const MNetConfig& config() const override { return arch_.config; }
    std::string arch_id() const override { return "mesh"; }

    const GridArch& grid() const { return arch_; }

private:
    GridArch arch_;
    std::vector<detail::MeshNodeModule<T>> nodes_; // row-major
    detail::PredHead<T> main_head_;
    std::vector<detail::PredHead<T>> aux_heads_; // branch order
    std::vector<NamedParam<T>> params_;
};

// Standalone serial encoder-decoder built from one staircase path.
template <typename T>
class SubnetModel : public Model<T> {
public:
    SubnetModel(const MNetConfig& config, const SerialPath& path, uint64_t seed);

    typename Model<T>::Outputs forward(Tape<T>& tape, const Tensor<T>& batch) override;
    const std::vector<NamedParam<T>>& parameters() const override { return params_; }
    const MNetConfig& config() const override { return spec_.config; }
    std::string arch_id() const override { return "subnet:" + spec_.path.moves; }

    const SubnetSpec& spec() const { return spec_; }

private:
    SubnetSpec spec_;
    std::vector<detail::ConvBlock<T>> blocks_;
    detail::PredHead<T> head_;
    std::vector<NamedParam<T>> params_;
};

// arch_id is "mesh" or "subnet:<moves>" where <moves> also accepts the
// aliases 2d and 3d.
template <typename T>
std::unique_ptr<Model<T>> make_model(const MNetConfig& config, const std::string& arch_id,
                                     uint64_t seed);

} // namespace mnet
