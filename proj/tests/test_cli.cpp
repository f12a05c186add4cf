// Drives the built binary end to end: dataset generation determinism,
// config strictness, architecture reports and checkpoint semantics.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mnet/checkpoint.hpp"
#include "mnet/model.hpp"

using namespace mnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

#ifndef MNET_CLI
#error "MNET_CLI must point at the built binary"
#endif

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args)
{
    const fs::path log = fs::temp_directory_path() /
                         ("mnet_cli_log_" + std::to_string(::getpid()) + ".txt");
    const std::string cmd =
        std::string(MNET_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream buf;
    buf << in.rdbuf();
    fs::remove(log);
    return {WEXITSTATUS(rc), buf.str()};
}

struct TempDir {
    fs::path path;
    TempDir()
    {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("mnet_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_config(const fs::path& path, const json& doc)
{
    std::ofstream out(path);
    out << doc.dump(2);
}

json micro_config(const fs::path& dataset_dir)
{
    return json{
        {"model", {{"base_channels", 2}, {"channel_growth", 1}, {"num_classes", 3}}},
        {"train",
         {{"max_epochs", 2},
          {"iterations_per_epoch", 2},
          {"batch_size", 1},
          {"patch_size", {16, 16, 16}},
          {"seed", 5}}},
        {"phantom",
         {{"count", 3},
          {"shape", {18, 28, 28}},
          {"spacing_mm", {2.0, 1.0, 1.0}},
          {"organ_radius_mm", {8.0, 11.0}},
          {"tumor_radius_mm", {2.5, 4.0}},
          {"seed", 9}}},
        {"data", {{"dataset_dir", dataset_dir.string()}, {"split_seed", 3}}},
        {"out_dir", dataset_dir.string()}};
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// metrics.csv with the wall-clock column stripped
std::string metrics_without_timing(const fs::path& p)
{
    std::ifstream in(p);
    std::string line, out;
    while (std::getline(in, line)) {
        const auto cut = line.rfind(',');
        out += line.substr(0, cut) + "\n";
    }
    return out;
}

} // namespace

TEST_CASE("phantom runs are byte-identical and list every case")
{
    TempDir a, b;
    json cfg = micro_config(a.path / "ds");
    write_config(a.path / "cfg.json", cfg);
    REQUIRE(run_cli("phantom --config " + (a.path / "cfg.json").string() + " --out " +
                    (a.path / "ds").string())
                .exit_code == 0);
    REQUIRE(run_cli("phantom --config " + (a.path / "cfg.json").string() + " --out " +
                    (b.path / "ds").string())
                .exit_code == 0);

    int files = 0;
    for (const auto& entry : fs::directory_iterator(a.path / "ds")) {
        const auto name = entry.path().filename();
        if (name == "resolved_config.json")
            continue; // embeds the differing output path by design
        CHECK(read_file(entry.path()) == read_file(b.path / "ds" / name));
        ++files;
    }
    CHECK(files == 3 * 4 + 1); // per case: img/lbl json+raw; plus the manifest

    json manifest;
    std::ifstream in(a.path / "ds" / "manifest.json");
    in >> manifest;
    CHECK(manifest.at("cases").size() == 3);
}

TEST_CASE("zero-count phantom request fails with a config error")
{
    TempDir tmp;
    json cfg = micro_config(tmp.path / "ds");
    cfg["phantom"]["count"] = 0;
    write_config(tmp.path / "cfg.json", cfg);
    const auto r = run_cli("phantom --config " + (tmp.path / "cfg.json").string());
    CHECK(r.exit_code == 1);
}

TEST_CASE("unknown config keys are rejected")
{
    TempDir tmp;
    json cfg = micro_config(tmp.path / "ds");
    cfg["train"]["learning_rate"] = 0.1; // not a key of this schema
    write_config(tmp.path / "cfg.json", cfg);
    const auto r = run_cli("phantom --config " + (tmp.path / "cfg.json").string());
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("unknown key") != std::string::npos);
    CHECK(r.output.find("train.learning_rate") != std::string::npos);
}

TEST_CASE("inspect-arch emits both table and JSON reports")
{
    const auto table = run_cli("inspect-arch");
    CHECK(table.exit_code == 0);
    CHECK(table.output.find("serial subnets: 70") != std::string::npos);

    const auto machine = run_cli("inspect-arch --json");
    REQUIRE(machine.exit_code == 0);
    const json doc = json::parse(machine.output);
    CHECK(doc.at("nodes").size() == 25);
    CHECK(doc.at("subnet_count") == 70);
    CHECK(doc.at("kind_histogram").at("both") == 11);
}

TEST_CASE("training is deterministic and honors lr 0")
{
    TempDir tmp;
    const fs::path ds = tmp.path / "ds";
    json cfg = micro_config(ds);
    write_config(tmp.path / "cfg.json", cfg);
    REQUIRE(run_cli("phantom --config " + (tmp.path / "cfg.json").string()).exit_code ==
            0);

    SUBCASE("identical config and seed reproduce metrics.csv without the timing column")
    {
        for (const char* run : {"r1", "r2"})
            REQUIRE(run_cli("train --config " + (tmp.path / "cfg.json").string() +
                            " --out " + (tmp.path / run).string())
                        .exit_code == 0);
        CHECK(metrics_without_timing(tmp.path / "r1" / "metrics.csv") ==
              metrics_without_timing(tmp.path / "r2" / "metrics.csv"));
        CHECK(!metrics_without_timing(tmp.path / "r1" / "metrics.csv").empty());
    }

    SUBCASE("lr 0 leaves the checkpoint at initialization")
    {
        json zero = cfg;
        zero["train"]["initial_lr"] = 0.0;
        write_config(tmp.path / "zero.json", zero);
        REQUIRE(run_cli("train --config " + (tmp.path / "zero.json").string() +
                        " --out " + (tmp.path / "z").string())
                    .exit_code == 0);

        auto trained = load_checkpoint_model<float>(tmp.path / "z" / "checkpoint.mnet");
        MNetConfig mc;
        mc.base_channels = 2;
        mc.channel_growth = 1;
        mc.num_classes = 3;
        MeshModel<float> fresh(mc, 5); // train.seed of the config
        REQUIRE(trained->parameters().size() == fresh.parameters().size());
        for (size_t i = 0; i < fresh.parameters().size(); ++i)
            CHECK(trained->parameters()[i].tensor.values() ==
                  fresh.parameters()[i].tensor.values());
    }
}

TEST_CASE("evaluate: identity hook scores one and the mean row averages the cases")
{
    TempDir tmp;
    const fs::path ds = tmp.path / "ds";
    json cfg = micro_config(ds);
    cfg["evaluate"] = {{"split", "all"}, {"identity_model", true}, {"overlap", 0.0}};
    write_config(tmp.path / "cfg.json", cfg);
    REQUIRE(run_cli("phantom --config " + (tmp.path / "cfg.json").string()).exit_code ==
            0);
    REQUIRE(run_cli("evaluate --config " + (tmp.path / "cfg.json").string() + " --out " +
                    (tmp.path / "eval").string())
                .exit_code == 0);

    std::ifstream in(tmp.path / "eval" / "evaluation.csv");
    std::string line;
    std::getline(in, line); // header
    int rows = 0;
    std::string last;
    while (std::getline(in, line)) {
        ++rows;
        last = line;
    }
    CHECK(rows == 3 + 1);
    CHECK(last == "mean,1,1,1,1");
}

TEST_CASE("gradcheck subcommand: clean pass, corrupted rule fails with exit 2")
{
    const auto ok = run_cli("gradcheck");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("all checks passed") != std::string::npos);

    const auto bad = run_cli("gradcheck --perturb conv3d_133");
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("FAIL  conv3d_133") != std::string::npos);
}
