#include "mnet/inference.hpp"

#include <algorithm>
#include <cmath>

#include "mnet/ops.hpp"

namespace mnet {

namespace {

std::vector<int64_t> tile_starts(int64_t extent, int64_t patch, double overlap)
{
    const int64_t stride =
        std::max<int64_t>(1, std::llround(static_cast<double>(patch) * (1.0 - overlap)));
    std::vector<int64_t> starts;
    for (int64_t s = 0; s + patch < extent; s += stride)
        starts.push_back(s);
    starts.push_back(extent - patch); // end-aligned final tile
    return starts;
}

} // namespace

template <typename T>
LabelVolume sliding_window_predict(Model<T>& model, const Volume& vol,
                                   std::array<int64_t, 3> patch, double overlap)
{
    vol.validate();
    check(overlap >= 0.0 && overlap < 1.0, ErrorKind::Config,
          "overlap must be in [0, 1)");
    check(vol.c == model.config().in_channels, ErrorKind::Shape, "volume has ", vol.c,
          " channels, model expects ", model.config().in_channels);

    // pad up to the patch size so every tile is a full patch
    const std::array<int64_t, 3> ext{std::max(vol.d, patch[0]), std::max(vol.h, patch[1]),
                                     std::max(vol.w, patch[2])};
    std::vector<float> padded(static_cast<size_t>(vol.c * ext[0] * ext[1] * ext[2]), 0.0f);
    for (int64_t c = 0; c < vol.c; ++c)
        for (int64_t z = 0; z < vol.d; ++z)
            for (int64_t y = 0; y < vol.h; ++y) {
                const float* src =
                    vol.voxels.data() + ((c * vol.d + z) * vol.h + y) * vol.w;
                float* dst = padded.data() +
                             ((c * ext[0] + z) * ext[1] + y) * ext[2];
                std::copy(src, src + vol.w, dst);
            }

    // every class shares the voxel's tile count, so the argmax of summed
    // probabilities equals the argmax of tile-averaged ones
    const int classes = model.config().num_classes;
    std::vector<double> prob_acc(
        static_cast<size_t>(classes * ext[0] * ext[1] * ext[2]), 0.0);

    const auto zs = tile_starts(ext[0], patch[0], overlap);
    const auto ys = tile_starts(ext[1], patch[1], overlap);
    const auto xs = tile_starts(ext[2], patch[2], overlap);

    const int64_t pm = patch[0] * patch[1] * patch[2];
    Tape<T> tape;
    NoGradGuard<T> no_grad(tape);
    for (int64_t z0 : zs)
        for (int64_t y0 : ys)
            for (int64_t x0 : xs) {
                Tensor<T> input(Shape{1, vol.c, patch[0], patch[1], patch[2]});
                for (int64_t c = 0; c < vol.c; ++c)
                    for (int64_t z = 0; z < patch[0]; ++z)
                        for (int64_t y = 0; y < patch[1]; ++y) {
                            const float* src =
                                padded.data() +
                                ((c * ext[0] + z0 + z) * ext[1] + y0 + y) * ext[2] + x0;
                            T* dst = input.data() +
                                     ((c * patch[0] + z) * patch[1] + y) * patch[2];
                            for (int64_t x = 0; x < patch[2]; ++x)
                                dst[x] = static_cast<T>(src[x]);
                        }

                auto outputs = model.forward(tape, input);
                Tensor<T> probs = ops::softmax_channels(tape, outputs.main);

                for (int64_t c = 0; c < classes; ++c)
                    for (int64_t z = 0; z < patch[0]; ++z)
                        for (int64_t y = 0; y < patch[1]; ++y) {
                            const T* src = probs.data() + c * pm +
                                           (z * patch[1] + y) * patch[2];
                            double* dst = prob_acc.data() +
                                          ((c * ext[0] + z0 + z) * ext[1] + y0 + y) *
                                              ext[2] +
                                          x0;
                            for (int64_t x = 0; x < patch[2]; ++x)
                                dst[x] += static_cast<double>(src[x]);
                        }
            }

    LabelVolume out;
    out.d = vol.d;
    out.h = vol.h;
    out.w = vol.w;
    out.spacing_mm = vol.spacing_mm;
    out.labels.resize(static_cast<size_t>(vol.d * vol.h * vol.w));
    const int64_t em = ext[0] * ext[1] * ext[2];
    size_t o = 0;
    for (int64_t z = 0; z < vol.d; ++z)
        for (int64_t y = 0; y < vol.h; ++y)
            for (int64_t x = 0; x < vol.w; ++x, ++o) {
                const int64_t v = (z * ext[1] + y) * ext[2] + x;
                int best = 0;
                double best_p = -1.0;
                for (int c = 0; c < classes; ++c) {
                    const double p = prob_acc[static_cast<size_t>(c * em + v)];
                    if (p > best_p) {
                        best_p = p;
                        best = c;
                    }
                }
                out.labels[o] = static_cast<uint8_t>(best);
            }
    return out;
}

template LabelVolume sliding_window_predict<float>(Model<float>&, const Volume&,
                                                   std::array<int64_t, 3>, double);
template LabelVolume sliding_window_predict<double>(Model<double>&, const Volume&,
                                                    std::array<int64_t, 3>, double);

} // namespace mnet
