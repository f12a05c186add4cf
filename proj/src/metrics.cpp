#include "mnet/metrics.hpp"

namespace mnet {

double dice_score(std::span<const uint8_t> pred, std::span<const uint8_t> gt, int cls)
{
    check(pred.size() == gt.size(), ErrorKind::Shape, "dice_score mask sizes differ: ",
          pred.size(), " vs ", gt.size());
    int64_t p = 0, g = 0, both = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool in_p = pred[i] == cls;
        const bool in_g = gt[i] == cls;
        p += in_p;
        g += in_g;
        both += in_p && in_g;
    }
    if (p + g == 0)
        return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double dice_score(const LabelVolume& pred, const LabelVolume& gt, int cls)
{
    check(pred.d == gt.d && pred.h == gt.h && pred.w == gt.w, ErrorKind::Shape,
          "dice_score volume shapes differ");
    return dice_score(std::span<const uint8_t>(pred.labels),
                      std::span<const uint8_t>(gt.labels), cls);
}

} // namespace mnet
