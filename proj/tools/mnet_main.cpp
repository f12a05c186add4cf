// mnet command-line runner: phantom | train | evaluate | inspect-arch |
// gradcheck | experiment-anisotropy.
//
// Exit codes: 0 success, 1 usage/config error, 2 verification failure,
// 3 numerical divergence.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mnet/checkpoint.hpp"
#include "mnet/dataset.hpp"
#include "mnet/experiment.hpp"
#include "mnet/gradcheck.hpp"
#include "mnet/inference.hpp"
#include "mnet/metrics.hpp"
#include "mnet/model.hpp"
#include "mnet/runconfig.hpp"
#include "mnet/sampling.hpp"
#include "mnet/simd.hpp"
#include "mnet/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mnet;

namespace {

struct CliOverrides {
    std::string config_path;
    std::string out_dir;
    std::string arch;
    std::string precision;
    int threads = -1;
    int64_t seed = -1;
};

RunConfig effective_config(const CliOverrides& cli, bool config_required)
{
    RunConfig cfg;
    if (!cli.config_path.empty())
        cfg = load_run_config(cli.config_path);
    else
        check(!config_required, ErrorKind::Config,
              "this command needs --config <path>");
    if (!cli.out_dir.empty())
        cfg.out_dir = cli.out_dir;
    if (!cli.arch.empty())
        cfg.arch = cli.arch;
    if (!cli.precision.empty())
        cfg.precision = cli.precision;
    if (cli.threads >= 0)
        cfg.threads = cli.threads;
    if (cli.seed >= 0) {
        cfg.train.seed = static_cast<uint64_t>(cli.seed);
        cfg.phantom.seed = static_cast<uint64_t>(cli.seed);
        cfg.split_seed = static_cast<uint64_t>(cli.seed);
    }
    cfg.validate();
    set_num_threads(cfg.threads == 0 ? -1 : cfg.threads);
    return cfg;
}

fs::path prepare_out_dir(const RunConfig& cfg)
{
    fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    check(fs::is_directory(dir), ErrorKind::Io, "cannot create output dir ",
          dir.string());
    return dir;
}

void write_resolved_config(const RunConfig& cfg, const fs::path& dir)
{
    std::ofstream out(dir / "resolved_config.json", std::ios::trunc);
    check(out.good(), ErrorKind::Io, "cannot write resolved config in ", dir.string());
    out << run_config_to_json(cfg).dump(2) << "\n";
}

void write_metrics_csv(const std::vector<MetricsRow>& history, int num_classes,
                       const fs::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    check(out.good(), ErrorKind::Io, "cannot write ", path.string());
    out << "epoch,lr,loss_total,loss_main";
    for (int c = 0; c < num_classes; ++c)
        out << ",dice_" << c;
    out << ",wall_seconds\n";
    for (const auto& row : history) {
        out << row.epoch << "," << fmt_g6(row.lr) << "," << fmt_g6(row.loss_total) << ","
            << fmt_g6(row.loss_main);
        for (int c = 0; c < num_classes; ++c) {
            out << ",";
            if (row.has_dice)
                out << fmt_g6(row.dice[static_cast<size_t>(c)]);
        }
        out << "," << fmt_g6(row.wall_seconds) << "\n";
    }
}

std::pair<Dataset, Dataset> load_split_dataset(const RunConfig& cfg)
{
    check(!cfg.dataset_dir.empty(), ErrorKind::Config, "data.dataset_dir is not set");
    const fs::path dir(cfg.dataset_dir);
    const auto ids = read_manifest_ids(dir);
    auto [train_ids, test_ids] = split_dataset(ids, cfg.split_seed, cfg.train_fraction);
    return {load_dataset(dir, train_ids), load_dataset(dir, test_ids)};
}

int cmd_phantom(const RunConfig& cfg)
{
    const fs::path dir = prepare_out_dir(cfg);
    const auto ids = write_phantom_dataset(dir, cfg.phantom, cfg.phantom_count);
    write_resolved_config(cfg, dir);
    std::cout << "wrote " << ids.size() << " cases to " << dir.string() << "\n";
    return 0;
}

template <typename T>
int run_train(const RunConfig& cfg)
{
    const fs::path dir = prepare_out_dir(cfg);
    auto [train_set, test_set] = load_split_dataset(cfg);
    auto model = make_model<T>(cfg.model, cfg.arch, cfg.train.seed);

    auto history = train_loop(*model, train_set,
                              cfg.train.eval_every > 0 ? &test_set : nullptr, cfg.train);

    write_metrics_csv(history, cfg.model.num_classes, dir / "metrics.csv");
    save_checkpoint(dir / "checkpoint.mnet", *model, run_config_to_json(cfg));
    write_resolved_config(cfg, dir);
    std::cout << "trained " << model->arch_id() << " for " << history.size()
              << " epochs; outputs in " << dir.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg)
{
    return cfg.precision == "f64" ? run_train<double>(cfg) : run_train<float>(cfg);
}

template <typename T>
int run_evaluate(const RunConfig& cfg)
{
    const fs::path dir = prepare_out_dir(cfg);
    auto [train_set, test_set] = load_split_dataset(cfg);
    Dataset cases;
    if (cfg.eval_split == "train")
        cases = std::move(train_set);
    else if (cfg.eval_split == "test")
        cases = std::move(test_set);
    else {
        cases = std::move(train_set);
        for (auto& c : test_set)
            cases.push_back(std::move(c));
    }
    check(!cases.empty(), ErrorKind::Config, "evaluation split \"", cfg.eval_split,
          "\" is empty");

    std::unique_ptr<Model<T>> model;
    std::array<int64_t, 3> patch = cfg.train.patch_size;
    int num_classes = cfg.model.num_classes;
    if (!cfg.eval_identity_model) {
        check(!cfg.eval_checkpoint.empty(), ErrorKind::Config,
              "evaluate.checkpoint is not set");
        model = load_checkpoint_model<T>(cfg.eval_checkpoint);
        const json header = read_checkpoint_header(cfg.eval_checkpoint);
        if (header.contains("run_config") && header["run_config"].is_object()) {
            const RunConfig saved = parse_run_config(header["run_config"]);
            patch = saved.train.patch_size;
        }
        num_classes = model->config().num_classes;
    }

    std::ofstream out(dir / "evaluation.csv", std::ios::trunc);
    check(out.good(), ErrorKind::Io, "cannot write evaluation.csv");
    out << "case";
    for (int c = 0; c < num_classes; ++c)
        out << ",dice_" << c;
    out << ",mean_fg_dice\n";

    std::vector<double> mean(static_cast<size_t>(num_classes), 0.0);
    double mean_fg = 0.0;
    for (const Case& c : cases) {
        LabelVolume pred;
        if (cfg.eval_identity_model)
            pred = c.labels; // harness self-test: the oracle predictor
        else
            pred = sliding_window_predict(*model, c.image, patch, cfg.eval_overlap);
        out << c.id;
        double fg = 0.0;
        for (int cls = 0; cls < num_classes; ++cls) {
            const double d = dice_score(pred, c.labels, cls);
            mean[static_cast<size_t>(cls)] += d;
            if (cls >= 1)
                fg += d;
            out << "," << fmt_g6(d);
        }
        fg /= std::max(1, num_classes - 1);
        mean_fg += fg;
        out << "," << fmt_g6(fg) << "\n";
    }
    out << "mean";
    for (int cls = 0; cls < num_classes; ++cls)
        out << "," << fmt_g6(mean[static_cast<size_t>(cls)] / double(cases.size()));
    out << "," << fmt_g6(mean_fg / double(cases.size())) << "\n";
    out.close();

    write_resolved_config(cfg, dir);
    std::cout << "evaluated " << cases.size() << " cases; mean foreground dice "
              << fmt_g6(mean_fg / double(cases.size())) << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg)
{
    return cfg.precision == "f64" ? run_evaluate<double>(cfg) : run_evaluate<float>(cfg);
}

int cmd_inspect_arch(const RunConfig& cfg, bool as_json)
{
    const GridArch arch = build_grid(cfg.model);
    const auto subnets = enumerate_serial_subnets(cfg.model);
    int histogram[3] = {0, 0, 0};
    for (const auto& node : arch.nodes)
        histogram[static_cast<int>(node.kind)]++;

    if (as_json) {
        json nodes = json::array();
        for (const auto& node : arch.nodes) {
            json entry = {{"i", node.pos.i},
                          {"j", node.pos.j},
                          {"kind", node_kind_name(node.kind)},
                          {"region", node.region == Region::Encoder ? "encoder"
                                                                    : "decoder"},
                          {"a", node.a},
                          {"b", node.b},
                          {"depth", node.depth},
                          {"in_channels", node.in_channels},
                          {"out_channels", node.out_channels},
                          {"params", node_param_count(node, cfg.model)}};
            if (node.skip_source)
                entry["skip_source"] = {node.skip_source->i, node.skip_source->j};
            nodes.push_back(entry);
        }
        json doc = {{"grid_n", cfg.model.grid_n},
                    {"nodes", nodes},
                    {"kind_histogram",
                     {{"2d", histogram[0]}, {"3d", histogram[1]}, {"both", histogram[2]}}},
                    {"total_params", param_count(arch)},
                    {"subnet_count", subnets.size()},
                    {"channels_at_depth", [&] {
                         json v = json::array();
                         for (int d = 1; d <= cfg.model.grid_n; ++d)
                             v.push_back(channels_at_depth(d, cfg.model));
                         return v;
                     }()}};
        std::cout << doc.dump(2) << "\n";
        return 0;
    }

    std::cout << "node  kind  region   (a,b)  in->out    params\n";
    for (const auto& node : arch.nodes) {
        char line[128];
        std::snprintf(line, sizeof(line), "(%d,%d)  %-4s  %-7s  (%d,%d)  %4d->%-4d %9lld",
                      node.pos.i, node.pos.j, node_kind_name(node.kind),
                      node.region == Region::Encoder ? "encoder" : "decoder", node.a,
                      node.b, node.in_channels, node.out_channels,
                      static_cast<long long>(node_param_count(node, cfg.model)));
        std::cout << line << "\n";
    }
    std::cout << "kinds: 2d=" << histogram[0] << " 3d=" << histogram[1]
              << " both=" << histogram[2] << "\n";
    std::cout << "total params: " << param_count(arch) << "\n";
    std::cout << "serial subnets: " << subnets.size() << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& perturb_op)
{
    // the full finite-difference sweep runs in double precision
    const auto op_results = run_op_gradchecks(/*seeds=*/10, perturb_op);

    MNetConfig tiny;
    tiny.base_channels = 4;
    tiny.channel_growth = 2;
    tiny.num_classes = 3;
    auto model_result = run_model_gradcheck(tiny, {16, 16, 16}, /*param_samples=*/24,
                                            /*seed=*/123);

    bool all_pass = true;
    auto print = [&](const GradCheckCase& r) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.op << "  max_rel_err="
                  << fmt_g6(r.max_rel_err) << " tol=" << fmt_g6(r.tol) << "\n";
        all_pass = all_pass && r.pass;
    };
    for (const auto& r : op_results)
        print(r);
    print(model_result);
    std::cout << (all_pass ? "gradcheck: all checks passed\n"
                           : "gradcheck: FAILURES detected\n");
    return all_pass ? 0 : 2;
}

int cmd_experiment(const RunConfig& cfg)
{
    const fs::path dir = prepare_out_dir(cfg);
    const AnisotropyResult result = run_anisotropy_experiment(cfg, dir);
    write_anisotropy_csv(result, dir / "anisotropy.csv");
    write_anisotropy_svg(result, dir / "anisotropy.svg");
    write_resolved_config(cfg, dir);
    std::cout << "swept " << cfg.exp_z_spacings_mm.size() << " spacings over "
              << cfg.exp_archs.size() << " architectures; outputs in " << dir.string()
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"mesh segmentation engine"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand

    CliOverrides cli;
    app.add_option("--config", cli.config_path, "run configuration JSON")
        ->expected(1);
    app.add_option("--out", cli.out_dir, "output directory override");
    app.add_option("--seed", cli.seed, "seed override (train/phantom/split)");
    app.add_option("--arch", cli.arch, "architecture: mesh|subnet:<moves>|subnet:2d|3d");
    app.add_option("--precision", cli.precision, "f32|f64");
    app.add_option("--threads", cli.threads, "worker threads (0 = all cores)");

    auto* phantom = app.add_subcommand("phantom", "generate a phantom dataset");
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
    bool inspect_json = false;
    auto* inspect = app.add_subcommand("inspect-arch", "describe the mesh architecture");
    inspect->add_flag("--json", inspect_json, "machine-readable output");
    std::string perturb_op;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification");
    gradcheck->add_option("--perturb", perturb_op,
                          "corrupt one op's analytic gradient (harness self-test)");
    auto* experiment =
        app.add_subcommand("experiment-anisotropy", "inter-slice spacing sweep");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gradcheck->parsed()) {
            effective_config(cli, /*config_required=*/false);
            return cmd_gradcheck(perturb_op);
        }
        if (inspect->parsed())
            return cmd_inspect_arch(effective_config(cli, false), inspect_json);
        if (phantom->parsed())
            return cmd_phantom(effective_config(cli, true));
        if (train->parsed())
            return cmd_train(effective_config(cli, true));
        if (evaluate->parsed())
            return cmd_evaluate(effective_config(cli, true));
        if (experiment->parsed())
            return cmd_experiment(effective_config(cli, true));
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::Numeric ? 3 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
