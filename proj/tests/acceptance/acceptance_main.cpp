// Acceptance suite: one line per criterion, nonzero exit if any fails.
//
// Usage: acceptance --cli <path-to-mnet-binary> [--out <scratch-dir>]
//                   [--criterion <n>]... (default: all)

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "mnet/arch.hpp"
#include "mnet/dataset.hpp"
#include "mnet/gradcheck.hpp"
#include "mnet/inference.hpp"
#include "mnet/kernels.hpp"
#include "mnet/loss.hpp"
#include "mnet/metrics.hpp"
#include "mnet/model.hpp"
#include "mnet/ops.hpp"
#include "mnet/phantom.hpp"
#include "mnet/sampling.hpp"
#include "mnet/train.hpp"
#include "support/naive_conv.hpp"

using namespace mnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_out;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = g_cli + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---- criterion 1: gradient suite -----------------------------------------

Outcome criterion_gradients()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto ops = run_op_gradchecks(/*seeds=*/10);
    double worst_op = 0.0;
    bool pass = true;
    for (const auto& r : ops) {
        worst_op = std::max(worst_op, r.max_rel_err);
        pass = pass && r.pass && r.max_rel_err <= 1e-4;
    }

    MNetConfig tiny;
    tiny.base_channels = 4;
    tiny.channel_growth = 2;
    tiny.num_classes = 3;
    const auto model = run_model_gradcheck(tiny, {16, 16, 16}, /*param_samples=*/32,
                                           /*seed=*/123, /*rel_tol=*/1e-3);
    pass = pass && model.pass;
    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < 300.0;
    return {pass, str_cat("op max rel err ", fmt_g6(worst_op), ", model ",
                          fmt_g6(model.max_rel_err), ", ", fmt_g6(elapsed), "s")};
}

// ---- criterion 2: convolution oracle --------------------------------------

Outcome criterion_conv_oracle()
{
    Rng rng = make_rng(2024, 2);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        testing::NaiveConvDims g{};
        g.n = 1 + static_cast<int64_t>(rng() % 2);
        g.cin = 1 + static_cast<int64_t>(rng() % 3);
        g.cout = 1 + static_cast<int64_t>(rng() % 3);
        g.d = 1 + static_cast<int64_t>(rng() % 4);
        g.h = 3 + static_cast<int64_t>(rng() % 4);
        g.w = 3 + static_cast<int64_t>(rng() % 4);
        const bool three_d = rng() % 2 == 0;
        g.kd = three_d ? 3 : 1;
        g.kh = g.kw = 3;
        g.pz = three_d ? 1 : 0;
        g.py = g.px = 1;

        std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
        std::vector<float> x(static_cast<size_t>(g.n * g.cin * g.d * g.h * g.w));
        std::vector<float> w(static_cast<size_t>(g.cout * g.cin * g.kd * g.kh * g.kw));
        std::vector<float> b(static_cast<size_t>(g.cout));
        for (auto& v : x)
            v = dist(rng);
        for (auto& v : w)
            v = dist(rng);
        for (auto& v : b)
            v = dist(rng);

        const auto ref = testing::naive_conv3d(x, w, b, g);

        Tape<float> tape;
        tape.set_enabled(false);
        auto xt = Tensor<float>::from(Shape{g.n, g.cin, g.d, g.h, g.w}, x);
        auto wt = Tensor<float>::from(Shape{g.cout, g.cin, g.kd, g.kh, g.kw}, w);
        auto bt = Tensor<float>::from(Shape{g.cout}, b);
        auto y = ops::conv3d(tape, xt, wt, bt, {g.pz, g.py, g.px});

        for (size_t i = 0; i < ref.size(); ++i) {
            const double a = y.data()[i], r = ref[i];
            worst = std::max(worst, std::fabs(a - r) /
                                        std::max({std::fabs(a), std::fabs(r), 1.0}));
        }
    }
    return {worst <= 1e-5, str_cat("100 shapes, max rel err ", fmt_g6(worst),
                                   " (simd=", simd_level_name(
                                                  kernels::active_simd_level()),
                                   ")")};
}

// ---- criterion 3: architecture invariants ----------------------------------

Outcome criterion_architecture()
{
    MNetConfig cfg;
    cfg.num_classes = 3;
    const GridArch arch = build_grid(cfg);

    bool pass = arch.nodes.size() == 25;
    int histogram[3] = {0, 0, 0};
    for (const auto& node : arch.nodes)
        histogram[static_cast<int>(node.kind)]++;
    pass = pass && histogram[0] == 7 && histogram[1] == 7 && histogram[2] == 11;

    // delta-exponent invariant on every edge
    auto delta = [](Transition t) -> std::pair<int, int> {
        switch (t) {
        case Transition::Pool122: return {0, 1};
        case Transition::Pool222: return {1, 1};
        case Transition::Up122: return {0, -1};
        case Transition::Up222: return {-1, -1};
        default: return {0, 0};
        }
    };
    int edges = 0;
    for (const auto& node : arch.nodes)
        for (const auto& e : node.incoming) {
            const auto [da, db] = delta(e.transition);
            const NodeSpec& src = arch.at(e.source);
            pass = pass && src.a + da == node.a && src.b + db == node.b;
            ++edges;
        }
    pass = pass && edges > 0;

    const auto paths = enumerate_serial_subnets(cfg);
    pass = pass && paths.size() == 70;
    for (const auto& p : paths) {
        int pools = 0, ups = 0, a = 0, b = 0;
        for (Transition t : p.transitions) {
            const auto [da, db] = delta(t);
            a += da;
            b += db;
            if (t == Transition::Pool122 || t == Transition::Pool222)
                ++pools;
            else
                ++ups;
        }
        pass = pass && pools == 4 && ups == 4 && a == 0 && b == 0;
    }

    const int expected[5] = {32, 48, 64, 80, 96};
    for (int d = 1; d <= 5; ++d)
        pass = pass && channels_at_depth(d, cfg) == expected[d - 1];

    return {pass, str_cat("25 nodes 7/7/11, ", edges, " edges, 70 subnets, K=32..96")};
}

// ---- criterion 4: shape contract -------------------------------------------

Outcome criterion_shapes()
{
    MNetConfig cfg;
    cfg.base_channels = 2;
    cfg.channel_growth = 1;
    cfg.num_classes = 3;
    MeshModel<float> model(cfg, 1);
    const GridArch& grid = model.grid();

    bool pass = true;
    std::string detail;
    for (const auto extents :
         {std::array<int64_t, 3>{32, 64, 64}, std::array<int64_t, 3>{48, 80, 80}}) {
        Tensor<float> batch(Shape{1, 1, extents[0], extents[1], extents[2]});
        Rng rng = make_rng(4, 0);
        std::uniform_real_distribution<float> dist(0.0f, 1.0f);
        for (int64_t i = 0; i < batch.numel(); ++i)
            batch.data()[i] = dist(rng);

        Tape<float> tape;
        NoGradGuard<float> guard(tape);
        auto out = model.forward(tape, batch);
        pass = pass &&
               out.main.shape() ==
                   Shape{1, 3, extents[0], extents[1], extents[2]};
        pass = pass && out.aux.size() == 6;
        for (const auto& [pos, logits] : out.aux) {
            const NodeSpec& node = grid.at(pos);
            pass = pass && logits.shape() == Shape{1, 3, extents[0] >> node.a,
                                                   extents[1] >> node.b,
                                                   extents[2] >> node.b};
        }
        detail += str_cat("(", extents[0], ",", extents[1], ",", extents[2], ") ok; ");
    }
    return {pass, detail + "main at input resolution, aux at (a,b) scales"};
}

// ---- criterion 5: loss identities -------------------------------------------

Outcome criterion_loss()
{
    Tape<double> tape;
    LabelGrid labels;
    labels.n = 1;
    labels.d = 4;
    labels.h = 6;
    labels.w = 6;
    labels.v.resize(static_cast<size_t>(labels.numel()));
    Rng rng = make_rng(5, 0);
    std::uniform_int_distribution<int32_t> ldist(0, 2);
    for (auto& v : labels.v)
        v = ldist(rng);
    auto onehot = one_hot<double>(labels, 3);

    const double perfect = hybrid_loss(tape, onehot, onehot, 1e-5).item();
    bool pass = std::fabs(perfect - (-1.0)) <= 1e-3;

    // deep-supervision weights and exact recombination on a real model
    MNetConfig cfg;
    cfg.base_channels = 2;
    cfg.channel_growth = 1;
    cfg.num_classes = 3;
    MeshModel<double> model(cfg, 2);
    Tensor<double> batch(Shape{1, 1, 16, 16, 16});
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int64_t i = 0; i < batch.numel(); ++i)
        batch.data()[i] = dist(rng);
    LabelGrid big;
    big.n = 1;
    big.d = 16;
    big.h = 16;
    big.w = 16;
    big.v.resize(static_cast<size_t>(big.numel()));
    for (auto& v : big.v)
        v = ldist(rng);

    Tape<double> model_tape;
    auto outputs = model.forward(model_tape, batch);
    auto loss = deep_supervision_loss(model_tape, outputs, big, cfg, 1e-5);

    std::multiset<double> weights;
    for (const auto& aux : loss.report.aux)
        weights.insert(aux.weight);
    pass = pass && weights == std::multiset<double>{0.125, 0.125, 0.25,
                                                    0.25,  0.5,   0.5};

    double recombined = loss.report.main;
    for (const auto& aux : loss.report.aux)
        recombined += aux.weight * aux.value;
    const double drift = std::fabs(loss.report.total - recombined);
    pass = pass && drift <= 1e-12;

    return {pass, str_cat("perfect one-hot ", fmt_g6(perfect),
                          ", weights {1/8,1/4,1/2}, recombination drift ",
                          fmt_g6(drift))};
}

// ---- criterion 6: spacing analysis ------------------------------------------

Outcome criterion_spacing()
{
    const auto states = physical_spacing_along_path(
        {4.0, 1.0, 1.0}, {Transition::Pool122, Transition::Pool122});
    const bool pass = states.size() == 3 && !states[0].isotropic &&
                      states[2].spacing_mm == std::array<double, 3>{4.0, 4.0, 4.0} &&
                      states[2].isotropic;
    return {pass, "spacing (4,1,1) + 2x pool(1,2,2) -> (4,4,4) isotropic"};
}

// ---- criteria 7 and 8: phantom overfit and FMU ablation ----------------------

struct OverfitResult {
    double organ = 0.0, tumor = 0.0, seconds = 0.0;
};

OverfitResult run_overfit(FmuMode mode)
{
    const auto t0 = std::chrono::steady_clock::now();

    PhantomSpec spec;
    spec.shape = {32, 64, 64};
    spec.spacing_mm = {5.0, 1.0, 1.0};
    spec.organ_radius_mm = {18.0, 26.0};
    spec.tumor_count = {2, 4};
    spec.tumor_radius_mm = {6.0, 12.0};
    spec.seed = 21;

    const fs::path dir = g_out / (std::string("overfit_") + fmu_mode_name(mode));
    const auto ids = write_phantom_dataset(dir, spec, 8);
    auto [train_ids, test_ids] = split_dataset(ids, 4);
    Dataset train_set = load_dataset(dir, train_ids);

    MNetConfig mc;
    mc.base_channels = 8;
    mc.channel_growth = 4;
    mc.num_classes = 3;
    mc.fmu_mode = mode;

    TrainConfig tc;
    tc.max_epochs = 15;
    tc.iterations_per_epoch = 20; // 300 iterations total
    tc.batch_size = 1;
    tc.patch_size = {32, 64, 64}; // full-volume views
    tc.initial_lr = 0.03;
    tc.momentum = 0.9;
    tc.seed = 77;

    MeshModel<float> model(mc, tc.seed);
    train_loop(model, train_set, nullptr, tc);

    OverfitResult result;
    for (const Case& c : train_set) {
        LabelVolume pred = sliding_window_predict(model, c.image, tc.patch_size, 0.5);
        result.organ += dice_score(pred, c.labels, 1);
        result.tumor += dice_score(pred, c.labels, 2);
    }
    result.organ /= static_cast<double>(train_set.size());
    result.tumor /= static_cast<double>(train_set.size());
    result.seconds = seconds_since(t0);
    return result;
}

std::map<FmuMode, OverfitResult> g_overfit_cache;

const OverfitResult& overfit(FmuMode mode)
{
    auto it = g_overfit_cache.find(mode);
    if (it == g_overfit_cache.end())
        it = g_overfit_cache.emplace(mode, run_overfit(mode)).first;
    return it->second;
}

Outcome criterion_overfit()
{
    const OverfitResult& r = overfit(FmuMode::Sub);
    const bool pass = r.organ >= 0.90 && r.tumor >= 0.60 && r.seconds < 1800.0;
    return {pass, str_cat("organ ", fmt_g6(r.organ), ", tumor ", fmt_g6(r.tumor), ", ",
                          fmt_g6(r.seconds), "s")};
}

Outcome criterion_fmu_ablation()
{
    const OverfitResult& sub = overfit(FmuMode::Sub);
    const OverfitResult& sum = overfit(FmuMode::Sum);
    const bool pass = sub.organ >= 0.85 && sum.organ >= 0.85;
    return {pass, str_cat("organ dice: sub ", fmt_g6(sub.organ), ", sum ",
                          fmt_g6(sum.organ))};
}

// ---- criterion 9: anisotropy sweep harness -----------------------------------

Outcome criterion_anisotropy()
{
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = g_out / "anisotropy";
    fs::create_directories(dir);

    json cfg = {
        {"model", {{"base_channels", 2}, {"channel_growth", 1}, {"num_classes", 3}}},
        {"train",
         {{"max_epochs", 2},
          {"iterations_per_epoch", 8},
          {"batch_size", 1},
          {"patch_size", {16, 16, 16}},
          {"seed", 31},
          {"fg_oversample_prob", 0.7}}},
        {"phantom",
         {{"count", 5},
          {"shape", {48, 32, 32}},
          {"spacing_mm", {1.0, 1.0, 1.0}},
          {"organ_radius_mm", {10.0, 13.0}},
          {"tumor_count", {1, 2}},
          {"tumor_radius_mm", {3.0, 5.0}},
          {"seed", 13}}},
        {"data", {{"dataset_dir", (dir / "unused").string()}, {"split_seed", 6}}},
        {"evaluate", {{"overlap", 0.0}}},
        {"experiment",
         {{"z_spacings_mm", {1, 2, 3, 4, 5}},
          {"archs", {"mesh", "subnet:2d", "subnet:3d"}}}},
        {"out_dir", (dir / "out").string()}};
    std::ofstream cfg_out(dir / "cfg.json");
    cfg_out << cfg.dump(2);
    cfg_out.close();

    const int rc = run_cli("experiment-anisotropy --config " +
                               (dir / "cfg.json").string(),
                           dir / "log.txt");
    if (rc != 0)
        return {false, str_cat("CLI exit code ", rc, "; see ",
                               (dir / "log.txt").string())};

    // CSV: 5 rows per architecture, spacing column 1..5, in-plane constant
    std::ifstream csv(dir / "out" / "anisotropy.csv");
    if (!csv.good())
        return {false, "missing anisotropy.csv"};
    std::string line;
    std::getline(csv, line); // header
    std::map<std::string, std::vector<double>> spacings;
    std::set<std::string> inplane;
    while (std::getline(csv, line)) {
        std::stringstream row(line);
        std::string arch, z, y, x;
        std::getline(row, arch, ',');
        std::getline(row, z, ',');
        std::getline(row, y, ',');
        std::getline(row, x, ',');
        spacings[arch].push_back(std::stod(z));
        inplane.insert(y + "," + x);
    }
    bool pass = spacings.size() == 3 && inplane.size() == 1;
    for (const auto& [arch, zs] : spacings) {
        pass = pass && zs.size() == 5;
        for (size_t i = 0; i < zs.size(); ++i)
            pass = pass && std::fabs(zs[i] - double(i + 1)) < 1e-9;
    }

    const std::string svg = read_file(dir / "out" / "anisotropy.svg");
    size_t polylines = 0;
    for (size_t p = svg.find("<polyline"); p != std::string::npos;
         p = svg.find("<polyline", p + 1))
        ++polylines;
    pass = pass && polylines == 3;

    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < 7200.0;
    return {pass, str_cat("15 micro runs, CSV 3x5 rows, ", polylines, " polylines, ",
                          fmt_g6(elapsed), "s")};
}

// ---- criterion 10: training determinism ---------------------------------------

Outcome criterion_determinism()
{
    const fs::path dir = g_out / "determinism";
    fs::create_directories(dir);
    json cfg = {
        {"model", {{"base_channels", 2}, {"channel_growth", 1}, {"num_classes", 3}}},
        {"train",
         {{"max_epochs", 2},
          {"iterations_per_epoch", 3},
          {"batch_size", 1},
          {"patch_size", {16, 16, 16}},
          {"seed", 17}}},
        {"phantom",
         {{"count", 3},
          {"shape", {18, 28, 28}},
          {"spacing_mm", {2.0, 1.0, 1.0}},
          {"organ_radius_mm", {8.0, 11.0}},
          {"tumor_radius_mm", {2.5, 4.0}},
          {"seed", 23}}},
        {"data", {{"dataset_dir", (dir / "ds").string()}, {"split_seed", 3}}},
        {"out_dir", (dir / "ds").string()}};
    std::ofstream cfg_out(dir / "cfg.json");
    cfg_out << cfg.dump(2);
    cfg_out.close();

    if (run_cli("phantom --config " + (dir / "cfg.json").string(), dir / "log0.txt") != 0)
        return {false, "phantom generation failed"};
    for (const char* run : {"r1", "r2"})
        if (run_cli("train --config " + (dir / "cfg.json").string() + " --out " +
                        (dir / run).string() + " --threads 2",
                    dir / "log.txt") != 0)
            return {false, "training run failed"};

    auto strip_timing = [](const fs::path& p) {
        std::ifstream in(p);
        std::string line, out;
        while (std::getline(in, line))
            out += line.substr(0, line.rfind(',')) + "\n";
        return out;
    };
    const std::string a = strip_timing(dir / "r1" / "metrics.csv");
    const std::string b = strip_timing(dir / "r2" / "metrics.csv");
    const bool pass = !a.empty() && a == b;
    return {pass, str_cat("metrics.csv identical over ",
                          std::count(a.begin(), a.end(), '\n'),
                          " lines (timing column excluded)")};
}

} // namespace

int main(int argc, char** argv)
{
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc)
            g_cli = argv[++i];
        else if (arg == "--out" && i + 1 < argc)
            g_out = argv[++i];
        else if (arg == "--criterion" && i + 1 < argc)
            only.insert(std::atoi(argv[++i]));
        else {
            std::cerr << "usage: acceptance --cli <mnet binary> [--out dir] "
                         "[--criterion n]...\n";
            return 1;
        }
    }
    if (g_out.empty())
        g_out = fs::temp_directory_path() /
                ("mnet_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(g_out);

    struct Entry {
        int id;
        const char* name;
        Outcome (*run)();
        bool needs_cli;
    };
    const Entry entries[] = {
        {1, "gradient suite", criterion_gradients, false},
        {2, "convolution oracle", criterion_conv_oracle, false},
        {3, "architecture invariants", criterion_architecture, false},
        {4, "shape contract", criterion_shapes, false},
        {5, "loss identities", criterion_loss, false},
        {6, "spacing analysis", criterion_spacing, false},
        {7, "phantom overfit", criterion_overfit, false},
        {8, "FMU ablation", criterion_fmu_ablation, false},
        {9, "anisotropy sweep harness", criterion_anisotropy, true},
        {10, "training determinism", criterion_determinism, true},
    };

    int failures = 0;
    for (const auto& entry : entries) {
        if (!only.empty() && only.count(entry.id) == 0)
            continue;
        Outcome outcome;
        if (entry.needs_cli && g_cli.empty()) {
            outcome = {false, "needs --cli <path>"};
        } else {
            try {
                outcome = entry.run();
            } catch (const std::exception& e) {
                outcome = {false, str_cat("exception: ", e.what())};
            }
        }
        std::cout << "CRITERION " << entry.id << " [" << (outcome.pass ? "PASS" : "FAIL")
                  << "] " << entry.name << ": " << outcome.detail << std::endl;
        failures += outcome.pass ? 0 : 1;
    }
    std::cout << (failures == 0 ? "acceptance: all criteria passed"
                                : str_cat("acceptance: ", failures, " criteria FAILED"))
              << std::endl;
    return failures == 0 ? 0 : 1;
}
