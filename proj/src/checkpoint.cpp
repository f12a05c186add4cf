#include "mnet/checkpoint.hpp"

#include <fstream>

#include "mnet/runconfig.hpp"

namespace mnet {

using nlohmann::json;

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const json& run_config)
{
    json manifest = json::array();
    int64_t offset = 0;
    for (const auto& p : model.parameters()) {
        json shape = json::array();
        for (int i = 0; i < p.tensor.shape().rank(); ++i)
            shape.push_back(p.tensor.shape()[i]);
        manifest.push_back({{"name", p.name},
                            {"shape", shape},
                            {"offset_bytes", offset}});
        offset += p.tensor.numel() * static_cast<int64_t>(sizeof(float));
    }
    json header = {{"format_version", 1},
                   {"arch", model.arch_id()},
                   {"model", model_config_to_json(model.config())},
                   {"run_config", run_config},
                   {"params", manifest},
                   {"payload_bytes", offset}};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), ErrorKind::Io, "cannot open checkpoint ", path.string(),
          " for writing");
    out << header.dump() << "\n";
    for (const auto& p : model.parameters()) {
        std::vector<float> buf(static_cast<size_t>(p.tensor.numel()));
        for (int64_t i = 0; i < p.tensor.numel(); ++i)
            buf[static_cast<size_t>(i)] = static_cast<float>(p.tensor.data()[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    check(out.good(), ErrorKind::Io, "write failed for checkpoint ", path.string());
}

json read_checkpoint_header(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    check(in.good(), ErrorKind::Io, "cannot open checkpoint ", path.string());
    std::string line;
    std::getline(in, line);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, "malformed checkpoint header in ", path.string(), ": ",
             e.what());
    }
    check(header.value("format_version", -1) == 1, ErrorKind::Config, "checkpoint ",
          path.string(), " has unsupported format_version");
    return header;
}

template <typename T>
std::unique_ptr<Model<T>> load_checkpoint_model(const std::filesystem::path& path)
{
    const json header = read_checkpoint_header(path);
    const MNetConfig config = model_config_from_json(header.at("model"));
    const std::string arch = header.at("arch").get<std::string>();
    auto model = make_model<T>(config, arch, /*seed=*/0);

    const auto& manifest = header.at("params");
    const auto& params = model->parameters();
    check(manifest.size() == params.size(), ErrorKind::Config, "checkpoint ",
          path.string(), " has ", manifest.size(), " parameters, model expects ",
          params.size());

    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::getline(in, line); // skip header
    const std::streampos payload_start = in.tellg();

    for (size_t k = 0; k < params.size(); ++k) {
        const json& entry = manifest[k];
        check(entry.at("name").get<std::string>() == params[k].name, ErrorKind::Config,
              "checkpoint parameter #", k, " is \"",
              entry.at("name").get<std::string>(), "\", model expects \"",
              params[k].name, "\"");
        Tensor<T> t = params[k].tensor;
        const int64_t count = t.numel();
        const auto& shape = entry.at("shape");
        int64_t declared = 1;
        for (const auto& e : shape)
            declared *= e.get<int64_t>();
        check(declared == count, ErrorKind::Config, "checkpoint shape mismatch for \"",
              params[k].name, "\"");

        in.seekg(payload_start +
                 static_cast<std::streamoff>(entry.at("offset_bytes").get<int64_t>()));
        std::vector<float> buf(static_cast<size_t>(count));
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        check(in.good(), ErrorKind::Config, "checkpoint payload truncated at \"",
              params[k].name, "\"");
        for (int64_t i = 0; i < count; ++i)
            t.data()[i] = static_cast<T>(buf[static_cast<size_t>(i)]);
    }
    return model;
}

template void save_checkpoint<float>(const std::filesystem::path&, const Model<float>&,
                                     const json&);
template void save_checkpoint<double>(const std::filesystem::path&, const Model<double>&,
                                      const json&);
template std::unique_ptr<Model<float>> load_checkpoint_model<float>(
    const std::filesystem::path&);
template std::unique_ptr<Model<double>> load_checkpoint_model<double>(
    const std::filesystem::path&);

} // namespace mnet
