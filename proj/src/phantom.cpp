#include "mnet/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "mnet/rng.hpp"

namespace mnet {

void PhantomSpec::validate() const
{
    for (int64_t e : shape)
        check(e >= 1, ErrorKind::Config, "phantom shape extents must be >= 1");
    for (double s : spacing_mm)
        check(s > 0.0, ErrorKind::Config, "phantom spacing must be positive");
    check(organ_radius_mm[0] > 0.0 && organ_radius_mm[1] >= organ_radius_mm[0],
          ErrorKind::Config, "organ radius range must be positive and ordered");
    check(tumor_count[0] >= 0 && tumor_count[1] >= tumor_count[0], ErrorKind::Config,
          "tumor count range must be ordered and non-negative");
    check(tumor_radius_mm[0] > 0.0 && tumor_radius_mm[1] >= tumor_radius_mm[0],
          ErrorKind::Config, "tumor radius range must be positive and ordered");
    check(noise_std >= 0.0, ErrorKind::Config, "noise_std must be >= 0");
}

namespace {

struct Vec3 {
    double z, y, x;
};

double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

} // namespace

std::pair<Volume, LabelVolume> generate_phantom(const PhantomSpec& spec)
{
    spec.validate();

    // geometry stream: draws depend only on the seed and the physical size,
    // never on voxel counts
    Rng geom = make_rng(spec.seed, 0);
    const Vec3 size{spec.shape[0] * spec.spacing_mm[0], spec.shape[1] * spec.spacing_mm[1],
                    spec.shape[2] * spec.spacing_mm[2]};

    Vec3 radii{uniform(geom, spec.organ_radius_mm[0], spec.organ_radius_mm[1]),
               uniform(geom, spec.organ_radius_mm[0], spec.organ_radius_mm[1]),
               uniform(geom, spec.organ_radius_mm[0], spec.organ_radius_mm[1])};
    check(2.0 * radii.z <= size.z && 2.0 * radii.y <= size.y && 2.0 * radii.x <= size.x,
          ErrorKind::Config, "organ cannot fit: diameters (", 2 * radii.z, ",",
          2 * radii.y, ",", 2 * radii.x, ") mm exceed the volume (", size.z, ",", size.y,
          ",", size.x, ") mm");

    const Vec3 center{uniform(geom, radii.z, size.z - radii.z),
                      uniform(geom, radii.y, size.y - radii.y),
                      uniform(geom, radii.x, size.x - radii.x)};

    std::normal_distribution<double> bg_dist(spec.background.mean, spec.background.stddev);
    std::normal_distribution<double> organ_dist(spec.organ.mean, spec.organ.stddev);
    std::normal_distribution<double> tumor_dist(spec.tumor.mean, spec.tumor.stddev);
    const double bg_value = bg_dist(geom);
    const double organ_value = organ_dist(geom);
    const double tumor_value = tumor_dist(geom);

    const int tumor_n =
        std::uniform_int_distribution<int>(spec.tumor_count[0], spec.tumor_count[1])(geom);
    struct Sphere {
        Vec3 c;
        double r;
    };
    std::vector<Sphere> tumors;
    for (int t = 0; t < tumor_n; ++t) {
        const double r = uniform(geom, spec.tumor_radius_mm[0], spec.tumor_radius_mm[1]);
        // keep the sphere center well inside the organ; the rasterizer clips
        // to the organ anyway
        const Vec3 margin{std::max(radii.z - r, 0.1 * radii.z),
                          std::max(radii.y - r, 0.1 * radii.y),
                          std::max(radii.x - r, 0.1 * radii.x)};
        Vec3 pos = center;
        for (int attempt = 0; attempt < 64; ++attempt) {
            const Vec3 u{uniform(geom, -1.0, 1.0), uniform(geom, -1.0, 1.0),
                         uniform(geom, -1.0, 1.0)};
            const double norm = u.z * u.z + u.y * u.y + u.x * u.x;
            if (norm <= 1.0) {
                pos = Vec3{center.z + u.z * margin.z, center.y + u.y * margin.y,
                           center.x + u.x * margin.x};
                break;
            }
        }
        tumors.push_back({pos, r});
    }

    // rasterization + voxel noise use a separate stream so geometry draws
    // stay aligned across different voxel grids
    Rng noise = make_rng(spec.seed, 1);
    std::normal_distribution<double> noise_dist(0.0, 1.0);

    const int64_t d = spec.shape[0], h = spec.shape[1], w = spec.shape[2];
    Volume img;
    img.c = 1;
    img.d = d;
    img.h = h;
    img.w = w;
    img.spacing_mm = spec.spacing_mm;
    img.voxels.resize(static_cast<size_t>(d * h * w));
    LabelVolume lab;
    lab.d = d;
    lab.h = h;
    lab.w = w;
    lab.spacing_mm = spec.spacing_mm;
    lab.labels.resize(static_cast<size_t>(d * h * w));

    const double class_value[3] = {bg_value, organ_value, tumor_value};
    size_t idx = 0;
    for (int64_t iz = 0; iz < d; ++iz)
        for (int64_t iy = 0; iy < h; ++iy)
            for (int64_t ix = 0; ix < w; ++ix, ++idx) {
                const Vec3 p{(iz + 0.5) * spec.spacing_mm[0],
                             (iy + 0.5) * spec.spacing_mm[1],
                             (ix + 0.5) * spec.spacing_mm[2]};
                const double ez = (p.z - center.z) / radii.z;
                const double ey = (p.y - center.y) / radii.y;
                const double ex = (p.x - center.x) / radii.x;
                uint8_t cls = 0;
                if (ez * ez + ey * ey + ex * ex <= 1.0) {
                    cls = 1;
                    for (const Sphere& s : tumors) {
                        const double dz = p.z - s.c.z, dy = p.y - s.c.y, dx = p.x - s.c.x;
                        if (dz * dz + dy * dy + dx * dx <= s.r * s.r) {
                            cls = 2;
                            break;
                        }
                    }
                }
                lab.labels[idx] = cls;
                img.voxels[idx] = static_cast<float>(class_value[cls] +
                                                     spec.noise_std * noise_dist(noise));
            }

    return {std::move(img), std::move(lab)};
}

} // namespace mnet
