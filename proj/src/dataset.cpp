#include "mnet/dataset.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "mnet/volume.hpp"

namespace mnet {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string> write_phantom_dataset(const fs::path& dir,
                                               const PhantomSpec& spec, int count)
{
    spec.validate();
    check(count >= 1, ErrorKind::Config, "phantom case count must be >= 1, got ", count);
    std::error_code ec;
    fs::create_directories(dir, ec);
    check(!ec && fs::is_directory(dir), ErrorKind::Io, "cannot create dataset dir ",
          dir.string());

    std::vector<std::string> ids;
    json cases = json::array();
    for (int i = 0; i < count; ++i) {
        PhantomSpec case_spec = spec;
        case_spec.seed = spec.seed + static_cast<uint64_t>(i);
        auto [img, lab] = generate_phantom(case_spec);

        std::ostringstream id;
        id << "case_" << std::setw(3) << std::setfill('0') << i;
        save_volume(dir / (id.str() + "_img"), img);
        save_volume(dir / (id.str() + "_lbl"), lab);
        ids.push_back(id.str());
        cases.push_back({{"id", id.str()},
                         {"image", id.str() + "_img"},
                         {"label", id.str() + "_lbl"},
                         {"seed", case_spec.seed}});
    }

    json manifest = {{"format_version", 1}, {"count", count}, {"cases", cases}};
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    check(out.good(), ErrorKind::Io, "cannot write manifest in ", dir.string());
    out << manifest.dump(2) << "\n";
    return ids;
}

std::vector<std::string> read_manifest_ids(const fs::path& dir)
{
    std::ifstream in(dir / "manifest.json");
    check(in.good(), ErrorKind::Io, "cannot open manifest ",
          (dir / "manifest.json").string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, "malformed manifest in ", dir.string(), ": ", e.what());
    }
    check(manifest.value("format_version", -1) == 1, ErrorKind::Config,
          "unsupported manifest format_version in ", dir.string());
    std::vector<std::string> ids;
    for (const auto& c : manifest.at("cases"))
        ids.push_back(c.at("id").get<std::string>());
    check(!ids.empty(), ErrorKind::Config, "manifest in ", dir.string(),
          " lists no cases");
    return ids;
}

Case load_case(const fs::path& dir, const std::string& id)
{
    Case c;
    c.id = id;
    c.image = load_image_volume(dir / (id + "_img"));
    c.labels = load_label_volume(dir / (id + "_lbl"));
    check(c.image.d == c.labels.d && c.image.h == c.labels.h && c.image.w == c.labels.w,
          ErrorKind::Shape, "case ", id, " has mismatched image/label grids");
    return c;
}

Dataset load_dataset(const fs::path& dir, const std::vector<std::string>& ids)
{
    Dataset data;
    for (const auto& id : ids)
        data.push_back(load_case(dir, id));
    return data;
}

} // namespace mnet
