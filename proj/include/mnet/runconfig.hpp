#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mnet/arch.hpp"
#include "mnet/phantom.hpp"
#include "mnet/train.hpp"

namespace mnet {

// One JSON document drives every command. Unknown keys are rejected at
// every level; the fully resolved document (defaults filled in) is written
// next to each run's outputs.
struct RunConfig {
    MNetConfig model;
    TrainConfig train;

    PhantomSpec phantom;
    int phantom_count = 8;

    std::string dataset_dir;
    uint64_t split_seed = 13;
    double train_fraction = 0.8;

    std::string eval_checkpoint;
    std::string eval_split = "test"; // train|test|all
    double eval_overlap = 0.5;
    bool eval_identity_model = false; // harness hook: predict the ground truth

    std::vector<double> exp_z_spacings_mm{1, 2, 3, 4, 5};
    std::vector<std::string> exp_archs{"mesh", "subnet:2d", "subnet:3d"};

    std::string out_dir = "out";
    std::string arch = "mesh";
    std::string precision = "f32"; // f32|f64
    int threads = 0;               // 0 = all hardware threads

    void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

nlohmann::json model_config_to_json(const MNetConfig& cfg);
MNetConfig model_config_from_json(const nlohmann::json& j);

} // namespace mnet
