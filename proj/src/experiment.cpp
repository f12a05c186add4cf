#include "mnet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "mnet/dataset.hpp"
#include "mnet/inference.hpp"
#include "mnet/metrics.hpp"
#include "mnet/model.hpp"
#include "mnet/resample.hpp"
#include "mnet/rng.hpp"
#include "mnet/sampling.hpp"

namespace mnet {

namespace fs = std::filesystem;

namespace {

Dataset resample_cases(const Dataset& cases, std::array<double, 3> spacing)
{
    Dataset out;
    for (const Case& c : cases) {
        Case r;
        r.id = c.id;
        r.image = resample_volume(c.image, spacing, ResampleMode::Trilinear);
        r.labels = resample_volume(c.labels, spacing);
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace

AnisotropyResult run_anisotropy_experiment(const RunConfig& cfg, const fs::path& out_dir)
{
    cfg.validate();
    check(std::fabs(cfg.phantom.spacing_mm[0] - 1.0) < 1e-9, ErrorKind::Config,
          "the anisotropy experiment needs the phantom generated at 1mm inter-slice "
          "spacing, got ",
          cfg.phantom.spacing_mm[0]);

    const fs::path base_dir = out_dir / "base_dataset";
    const auto ids = write_phantom_dataset(base_dir, cfg.phantom, cfg.phantom_count);
    auto [train_ids, test_ids] = split_dataset(ids, cfg.split_seed, cfg.train_fraction);
    const Dataset train_base = load_dataset(base_dir, train_ids);
    const Dataset test_base = load_dataset(base_dir, test_ids);

    AnisotropyResult result;
    for (size_t arch_idx = 0; arch_idx < cfg.exp_archs.size(); ++arch_idx) {
        const std::string& arch = cfg.exp_archs[arch_idx];
        for (size_t z_idx = 0; z_idx < cfg.exp_z_spacings_mm.size(); ++z_idx) {
            const double z = cfg.exp_z_spacings_mm[z_idx];
            const std::array<double, 3> spacing{z, cfg.phantom.spacing_mm[1],
                                                cfg.phantom.spacing_mm[2]};
            Dataset train_set = resample_cases(train_base, spacing);
            Dataset test_set = resample_cases(test_base, spacing);

            TrainConfig tc = cfg.train;
            tc.seed = derive_seed(cfg.train.seed,
                                  arch_idx * cfg.exp_z_spacings_mm.size() + z_idx);
            auto model = make_model<float>(cfg.model, arch, tc.seed);
            train_loop(*model, train_set, nullptr, tc);

            AnisotropyPoint point;
            point.arch = arch;
            point.z_spacing_mm = z;
            point.y_spacing_mm = spacing[1];
            point.x_spacing_mm = spacing[2];
            point.dice_per_class.assign(
                static_cast<size_t>(cfg.model.num_classes), 0.0);
            for (const Case& c : test_set) {
                LabelVolume pred = sliding_window_predict(*model, c.image,
                                                          tc.patch_size, cfg.eval_overlap);
                for (int cls = 0; cls < cfg.model.num_classes; ++cls)
                    point.dice_per_class[static_cast<size_t>(cls)] +=
                        dice_score(pred, c.labels, cls);
            }
            double fg = 0.0;
            for (int cls = 0; cls < cfg.model.num_classes; ++cls) {
                point.dice_per_class[static_cast<size_t>(cls)] /=
                    static_cast<double>(test_set.size());
                if (cls >= 1)
                    fg += point.dice_per_class[static_cast<size_t>(cls)];
            }
            point.mean_fg_dice = fg / static_cast<double>(cfg.model.num_classes - 1);
            result.points.push_back(std::move(point));
        }
    }
    return result;
}

void write_anisotropy_csv(const AnisotropyResult& result, const fs::path& path)
{
    check(!result.points.empty(), ErrorKind::Logic, "empty experiment result");
    std::ofstream out(path, std::ios::trunc);
    check(out.good(), ErrorKind::Io, "cannot write ", path.string());
    const size_t classes = result.points.front().dice_per_class.size();
    out << "arch,z_spacing_mm,y_spacing_mm,x_spacing_mm";
    for (size_t c = 0; c < classes; ++c)
        out << ",dice_" << c;
    out << ",mean_fg_dice\n";
    for (const auto& p : result.points) {
        out << p.arch << "," << fmt_g6(p.z_spacing_mm) << "," << fmt_g6(p.y_spacing_mm)
            << "," << fmt_g6(p.x_spacing_mm);
        for (double d : p.dice_per_class)
            out << "," << fmt_g6(d);
        out << "," << fmt_g6(p.mean_fg_dice) << "\n";
    }
}

void write_anisotropy_svg(const AnisotropyResult& result, const fs::path& path)
{
    check(!result.points.empty(), ErrorKind::Logic, "empty experiment result");

    std::map<std::string, std::vector<const AnisotropyPoint*>> by_arch;
    std::vector<std::string> arch_order;
    double z_min = 1e300, z_max = -1e300;
    for (const auto& p : result.points) {
        if (by_arch.find(p.arch) == by_arch.end())
            arch_order.push_back(p.arch);
        by_arch[p.arch].push_back(&p);
        z_min = std::min(z_min, p.z_spacing_mm);
        z_max = std::max(z_max, p.z_spacing_mm);
    }
    if (z_max <= z_min)
        z_max = z_min + 1.0;

    const double width = 640, height = 420;
    const double left = 60, right = 610, top = 30, bottom = 370;
    auto sx = [&](double z) {
        return left + (z - z_min) / (z_max - z_min) * (right - left);
    };
    auto sy = [&](double dice) { return bottom - dice * (bottom - top); };

    static const char* palette[] = {"#c0392b", "#2471a3", "#1e8449",
                                    "#8e44ad", "#b7950b", "#34495e"};

    std::ofstream out(path, std::ios::trunc);
    check(out.good(), ErrorKind::Io, "cannot write ", path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
        << "\">\n";
    out << "  <rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";

    // axes and gridlines
    out << "  <line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
        << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
        << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 10; i += 2) {
        const double dice = i / 10.0;
        out << "  <line x1=\"" << left << "\" y1=\"" << sy(dice) << "\" x2=\"" << right
            << "\" y2=\"" << sy(dice) << "\" stroke=\"#dddddd\"/>\n";
        out << "  <text x=\"" << left - 8 << "\" y=\"" << sy(dice) + 4
            << "\" font-size=\"12\" text-anchor=\"end\">" << fmt_g6(dice) << "</text>\n";
    }
    for (const auto& p : by_arch.begin()->second) {
        out << "  <text x=\"" << sx(p->z_spacing_mm) << "\" y=\"" << bottom + 18
            << "\" font-size=\"12\" text-anchor=\"middle\">" << fmt_g6(p->z_spacing_mm)
            << "</text>\n";
    }
    out << "  <text x=\"" << (left + right) / 2 << "\" y=\"" << bottom + 36
        << "\" font-size=\"13\" text-anchor=\"middle\">inter-slice spacing (mm)"
        << "</text>\n";
    out << "  <text x=\"16\" y=\"" << (top + bottom) / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << (top + bottom) / 2 << ")\">mean foreground Dice</text>\n";

    // one polyline per architecture plus legend entry
    int color = 0;
    double legend_y = top + 6;
    for (const auto& arch : arch_order) {
        auto pts = by_arch[arch];
        std::sort(pts.begin(), pts.end(), [](const auto* a, const auto* b) {
            return a->z_spacing_mm < b->z_spacing_mm;
        });
        out << "  <polyline fill=\"none\" stroke=\"" << palette[color % 6]
            << "\" stroke-width=\"2\" points=\"";
        for (const auto* p : pts)
            out << sx(p->z_spacing_mm) << "," << sy(p->mean_fg_dice) << " ";
        out << "\"/>\n";
        for (const auto* p : pts)
            out << "  <circle cx=\"" << sx(p->z_spacing_mm) << "\" cy=\""
                << sy(p->mean_fg_dice) << "\" r=\"3\" fill=\"" << palette[color % 6]
                << "\"/>\n";
        out << "  <text x=\"" << right - 150 << "\" y=\"" << legend_y + 4
            << "\" font-size=\"12\" fill=\"" << palette[color % 6] << "\">" << arch
            << "</text>\n";
        legend_y += 16;
        ++color;
    }
    out << "</svg>\n";
}

} // namespace mnet
