#include "mnet/runconfig.hpp"

#include <fstream>
#include <set>

namespace mnet {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& path)
{
    check(j.is_object(), ErrorKind::Config, "config section \"", path,
          "\" must be a JSON object");
}

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& path)
{
    for (const auto& item : j.items())
        check(allowed.count(item.key()) == 1, ErrorKind::Config, "unknown key \"",
              path.empty() ? item.key() : path + "." + item.key(), "\" in config");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback)
{
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, "bad value for config key \"", key, "\": ", e.what());
    }
}

template <typename T, size_t N>
std::array<T, N> get_array(const json& j, const char* key, std::array<T, N> fallback,
                           const std::string& path)
{
    if (!j.contains(key))
        return fallback;
    const json& a = j.at(key);
    check(a.is_array() && a.size() == N, ErrorKind::Config, "config key \"", path, ".",
          key, "\" must be an array of ", N, " numbers");
    std::array<T, N> out;
    for (size_t i = 0; i < N; ++i)
        out[i] = a[i].get<T>();
    return out;
}

PhantomSpec::ClassIntensity intensity_from(const json& j, const char* key,
                                           PhantomSpec::ClassIntensity fallback,
                                           const std::string& path)
{
    if (!j.contains(key))
        return fallback;
    const json& c = j.at(key);
    require_object(c, path + "." + key);
    reject_unknown(c, {"mean", "std"}, path + "." + key);
    return {get_or(c, "mean", fallback.mean), get_or(c, "std", fallback.stddev)};
}

} // namespace

json model_config_to_json(const MNetConfig& cfg)
{
    return json{{"grid_n", cfg.grid_n},
                {"base_channels", cfg.base_channels},
                {"channel_growth", cfg.channel_growth},
                {"fmu_mode", fmu_mode_name(cfg.fmu_mode)},
                {"in_channels", cfg.in_channels},
                {"num_classes", cfg.num_classes},
                {"leaky_slope", cfg.leaky_slope}};
}

MNetConfig model_config_from_json(const json& j)
{
    require_object(j, "model");
    reject_unknown(j,
                   {"grid_n", "base_channels", "channel_growth", "fmu_mode",
                    "in_channels", "num_classes", "leaky_slope"},
                   "model");
    MNetConfig cfg;
    cfg.grid_n = get_or(j, "grid_n", cfg.grid_n);
    cfg.base_channels = get_or(j, "base_channels", cfg.base_channels);
    cfg.channel_growth = get_or(j, "channel_growth", cfg.channel_growth);
    if (j.contains("fmu_mode"))
        cfg.fmu_mode = fmu_mode_from_name(j.at("fmu_mode").get<std::string>());
    cfg.in_channels = get_or(j, "in_channels", cfg.in_channels);
    cfg.num_classes = get_or(j, "num_classes", cfg.num_classes);
    cfg.leaky_slope = get_or(j, "leaky_slope", cfg.leaky_slope);
    cfg.validate();
    return cfg;
}

namespace {

TrainConfig train_config_from_json(const json& j)
{
    require_object(j, "train");
    reject_unknown(j,
                   {"initial_lr", "momentum", "nesterov", "poly_exponent", "max_epochs",
                    "iterations_per_epoch", "batch_size", "patch_size", "seed",
                    "loss_eps", "fg_oversample_prob", "eval_every", "eval_overlap"},
                   "train");
    TrainConfig cfg;
    cfg.initial_lr = get_or(j, "initial_lr", cfg.initial_lr);
    cfg.momentum = get_or(j, "momentum", cfg.momentum);
    cfg.nesterov = get_or(j, "nesterov", cfg.nesterov);
    cfg.poly_exponent = get_or(j, "poly_exponent", cfg.poly_exponent);
    cfg.max_epochs = get_or(j, "max_epochs", cfg.max_epochs);
    cfg.iterations_per_epoch = get_or(j, "iterations_per_epoch", cfg.iterations_per_epoch);
    cfg.batch_size = get_or(j, "batch_size", cfg.batch_size);
    cfg.patch_size = get_array<int64_t, 3>(j, "patch_size", cfg.patch_size, "train");
    cfg.seed = get_or(j, "seed", cfg.seed);
    cfg.loss_eps = get_or(j, "loss_eps", cfg.loss_eps);
    cfg.fg_oversample_prob = get_or(j, "fg_oversample_prob", cfg.fg_oversample_prob);
    cfg.eval_every = get_or(j, "eval_every", cfg.eval_every);
    cfg.eval_overlap = get_or(j, "eval_overlap", cfg.eval_overlap);
    cfg.validate();
    return cfg;
}

json train_config_to_json(const TrainConfig& cfg)
{
    return json{{"initial_lr", cfg.initial_lr},
                {"momentum", cfg.momentum},
                {"nesterov", cfg.nesterov},
                {"poly_exponent", cfg.poly_exponent},
                {"max_epochs", cfg.max_epochs},
                {"iterations_per_epoch", cfg.iterations_per_epoch},
                {"batch_size", cfg.batch_size},
                {"patch_size", {cfg.patch_size[0], cfg.patch_size[1], cfg.patch_size[2]}},
                {"seed", cfg.seed},
                {"loss_eps", cfg.loss_eps},
                {"fg_oversample_prob", cfg.fg_oversample_prob},
                {"eval_every", cfg.eval_every},
                {"eval_overlap", cfg.eval_overlap}};
}

std::pair<PhantomSpec, int> phantom_from_json(const json& j)
{
    require_object(j, "phantom");
    reject_unknown(j,
                   {"count", "shape", "spacing_mm", "organ_radius_mm", "tumor_count",
                    "tumor_radius_mm", "intensity", "noise_std", "seed"},
                   "phantom");
    PhantomSpec spec;
    int count = 8;
    count = get_or(j, "count", count);
    spec.shape = get_array<int64_t, 3>(j, "shape", spec.shape, "phantom");
    spec.spacing_mm = get_array<double, 3>(j, "spacing_mm", spec.spacing_mm, "phantom");
    spec.organ_radius_mm =
        get_array<double, 2>(j, "organ_radius_mm", spec.organ_radius_mm, "phantom");
    spec.tumor_count = get_array<int, 2>(j, "tumor_count", spec.tumor_count, "phantom");
    spec.tumor_radius_mm =
        get_array<double, 2>(j, "tumor_radius_mm", spec.tumor_radius_mm, "phantom");
    if (j.contains("intensity")) {
        const json& in = j.at("intensity");
        require_object(in, "phantom.intensity");
        reject_unknown(in, {"background", "organ", "tumor"}, "phantom.intensity");
        spec.background =
            intensity_from(in, "background", spec.background, "phantom.intensity");
        spec.organ = intensity_from(in, "organ", spec.organ, "phantom.intensity");
        spec.tumor = intensity_from(in, "tumor", spec.tumor, "phantom.intensity");
    }
    spec.noise_std = get_or(j, "noise_std", spec.noise_std);
    spec.seed = get_or(j, "seed", spec.seed);
    spec.validate();
    return {spec, count};
}

json phantom_to_json(const PhantomSpec& spec, int count)
{
    auto intensity = [](const PhantomSpec::ClassIntensity& c) {
        return json{{"mean", c.mean}, {"std", c.stddev}};
    };
    return json{
        {"count", count},
        {"shape", {spec.shape[0], spec.shape[1], spec.shape[2]}},
        {"spacing_mm", {spec.spacing_mm[0], spec.spacing_mm[1], spec.spacing_mm[2]}},
        {"organ_radius_mm", {spec.organ_radius_mm[0], spec.organ_radius_mm[1]}},
        {"tumor_count", {spec.tumor_count[0], spec.tumor_count[1]}},
        {"tumor_radius_mm", {spec.tumor_radius_mm[0], spec.tumor_radius_mm[1]}},
        {"intensity",
         {{"background", intensity(spec.background)},
          {"organ", intensity(spec.organ)},
          {"tumor", intensity(spec.tumor)}}},
        {"noise_std", spec.noise_std},
        {"seed", spec.seed}};
}

} // namespace

void RunConfig::validate() const
{
    model.validate();
    train.validate();
    phantom.validate();
    check(phantom_count >= 1, ErrorKind::Config, "phantom.count must be >= 1");
    check(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Config,
          "data.train_fraction must be in (0,1)");
    check(eval_split == "train" || eval_split == "test" || eval_split == "all",
          ErrorKind::Config, "evaluate.split must be train|test|all");
    check(eval_overlap >= 0.0 && eval_overlap < 1.0, ErrorKind::Config,
          "evaluate.overlap must be in [0,1)");
    check(!exp_z_spacings_mm.empty(), ErrorKind::Config,
          "experiment.z_spacings_mm must not be empty");
    for (double z : exp_z_spacings_mm)
        check(z > 0.0, ErrorKind::Config, "experiment z spacings must be positive");
    check(!exp_archs.empty(), ErrorKind::Config, "experiment.archs must not be empty");
    check(precision == "f32" || precision == "f64", ErrorKind::Config,
          "precision must be f32|f64");
    check(threads >= 0, ErrorKind::Config, "threads must be >= 0");
}

RunConfig parse_run_config(const json& doc)
{
    require_object(doc, "");
    reject_unknown(doc,
                   {"model", "train", "phantom", "data", "evaluate", "experiment",
                    "out_dir", "arch", "precision", "threads"},
                   "");
    RunConfig cfg;
    if (doc.contains("model"))
        cfg.model = model_config_from_json(doc.at("model"));
    if (doc.contains("train"))
        cfg.train = train_config_from_json(doc.at("train"));
    if (doc.contains("phantom"))
        std::tie(cfg.phantom, cfg.phantom_count) = phantom_from_json(doc.at("phantom"));
    if (doc.contains("data")) {
        const json& d = doc.at("data");
        require_object(d, "data");
        reject_unknown(d, {"dataset_dir", "split_seed", "train_fraction"}, "data");
        cfg.dataset_dir = get_or(d, "dataset_dir", cfg.dataset_dir);
        cfg.split_seed = get_or(d, "split_seed", cfg.split_seed);
        cfg.train_fraction = get_or(d, "train_fraction", cfg.train_fraction);
    }
    if (doc.contains("evaluate")) {
        const json& e = doc.at("evaluate");
        require_object(e, "evaluate");
        reject_unknown(e, {"checkpoint", "split", "overlap", "identity_model"},
                       "evaluate");
        cfg.eval_checkpoint = get_or(e, "checkpoint", cfg.eval_checkpoint);
        cfg.eval_split = get_or(e, "split", cfg.eval_split);
        cfg.eval_overlap = get_or(e, "overlap", cfg.eval_overlap);
        cfg.eval_identity_model = get_or(e, "identity_model", cfg.eval_identity_model);
    }
    if (doc.contains("experiment")) {
        const json& e = doc.at("experiment");
        require_object(e, "experiment");
        reject_unknown(e, {"z_spacings_mm", "archs"}, "experiment");
        cfg.exp_z_spacings_mm =
            get_or(e, "z_spacings_mm", cfg.exp_z_spacings_mm);
        cfg.exp_archs = get_or(e, "archs", cfg.exp_archs);
    }
    cfg.out_dir = get_or(doc, "out_dir", cfg.out_dir);
    cfg.arch = get_or(doc, "arch", cfg.arch);
    cfg.precision = get_or(doc, "precision", cfg.precision);
    cfg.threads = get_or(doc, "threads", cfg.threads);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    check(in.good(), ErrorKind::Io, "cannot open config ", path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, "malformed config ", path, ": ", e.what());
    }
    return parse_run_config(doc);
}

json run_config_to_json(const RunConfig& cfg)
{
    return json{{"model", model_config_to_json(cfg.model)},
                {"train", train_config_to_json(cfg.train)},
                {"phantom", phantom_to_json(cfg.phantom, cfg.phantom_count)},
                {"data",
                 {{"dataset_dir", cfg.dataset_dir},
                  {"split_seed", cfg.split_seed},
                  {"train_fraction", cfg.train_fraction}}},
                {"evaluate",
                 {{"checkpoint", cfg.eval_checkpoint},
                  {"split", cfg.eval_split},
                  {"overlap", cfg.eval_overlap},
                  {"identity_model", cfg.eval_identity_model}}},
                {"experiment",
                 {{"z_spacings_mm", cfg.exp_z_spacings_mm}, {"archs", cfg.exp_archs}}},
                {"out_dir", cfg.out_dir},
                {"arch", cfg.arch},
                {"precision", cfg.precision},
                {"threads", cfg.threads}};
}

} // namespace mnet
