#include "mnet/volume.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "volume payloads are little-endian; big-endian hosts are unsupported");

namespace mnet {

using nlohmann::json;

void Volume::validate() const
{
    check(c >= 1 && d >= 1 && h >= 1 && w >= 1, ErrorKind::Shape,
          "volume extents must be >= 1");
    check(static_cast<int64_t>(voxels.size()) == c * d * h * w, ErrorKind::Shape,
          "volume buffer length ", voxels.size(), " != shape product ", c * d * h * w);
    for (double s : spacing_mm)
        check(s > 0.0, ErrorKind::Shape, "volume spacing must be positive");
}

void LabelVolume::validate() const
{
    check(d >= 1 && h >= 1 && w >= 1, ErrorKind::Shape, "label extents must be >= 1");
    check(static_cast<int64_t>(labels.size()) == d * h * w, ErrorKind::Shape,
          "label buffer length ", labels.size(), " != shape product ", d * h * w);
    for (double s : spacing_mm)
        check(s > 0.0, ErrorKind::Shape, "label spacing must be positive");
}

namespace {

void write_file(const std::filesystem::path& path, const void* data, size_t bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), ErrorKind::Io, "cannot open ", path.string(), " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    check(out.good(), ErrorKind::Io, "write failed for ", path.string());
}

void write_sidecar(const std::filesystem::path& base, const json& sidecar)
{
    const std::string text = sidecar.dump(2) + "\n";
    write_file(std::filesystem::path(base).concat(".json"), text.data(), text.size());
}

json read_sidecar(const std::filesystem::path& base)
{
    const auto path = std::filesystem::path(base).concat(".json");
    std::ifstream in(path, std::ios::binary);
    check(in.good(), ErrorKind::Io, "cannot open sidecar ", path.string());
    json sidecar;
    try {
        in >> sidecar;
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, "malformed sidecar ", path.string(), ": ", e.what());
    }
    check(sidecar.is_object(), ErrorKind::Config, "malformed sidecar ", path.string(),
          ": not a JSON object");
    check(sidecar.value("format_version", -1) == 1, ErrorKind::Config, "sidecar ",
          path.string(), " has unsupported format_version");
    return sidecar;
}

std::vector<char> read_payload(const std::filesystem::path& base, int64_t expected_bytes)
{
    const auto path = std::filesystem::path(base).concat(".raw");
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    check(in.good(), ErrorKind::Io, "cannot open payload ", path.string());
    const int64_t actual = static_cast<int64_t>(in.tellg());
    check(actual == expected_bytes, ErrorKind::Config, "payload ", path.string(),
          " has ", actual, " bytes, sidecar declares ", expected_bytes);
    std::vector<char> buf(static_cast<size_t>(actual));
    in.seekg(0);
    in.read(buf.data(), actual);
    check(in.good(), ErrorKind::Io, "read failed for ", path.string());
    return buf;
}

std::array<double, 3> spacing_from_json(const json& j)
{
    check(j.is_array() && j.size() == 3, ErrorKind::Config,
          "sidecar spacing_mm must have 3 entries");
    std::array<double, 3> s{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    for (double v : s)
        check(v > 0.0, ErrorKind::Config, "sidecar spacing_mm must be positive");
    return s;
}

} // namespace

void save_volume(const std::filesystem::path& base, const Volume& vol)
{
    vol.validate();
    const int64_t bytes = static_cast<int64_t>(vol.voxels.size() * sizeof(float));
    json sidecar = {
        {"format_version", 1},
        {"kind", "image"},
        {"shape", {vol.c, vol.d, vol.h, vol.w}},
        {"spacing_mm", {vol.spacing_mm[0], vol.spacing_mm[1], vol.spacing_mm[2]}},
        {"dtype", "f32le"},
        {"byte_length", bytes},
    };
    write_sidecar(base, sidecar);
    write_file(std::filesystem::path(base).concat(".raw"), vol.voxels.data(),
               static_cast<size_t>(bytes));
}

void save_volume(const std::filesystem::path& base, const LabelVolume& vol)
{
    vol.validate();
    const int64_t bytes = static_cast<int64_t>(vol.labels.size());
    json sidecar = {
        {"format_version", 1},
        {"kind", "label"},
        {"shape", {vol.d, vol.h, vol.w}},
        {"spacing_mm", {vol.spacing_mm[0], vol.spacing_mm[1], vol.spacing_mm[2]}},
        {"dtype", "u8"},
        {"byte_length", bytes},
    };
    write_sidecar(base, sidecar);
    write_file(std::filesystem::path(base).concat(".raw"), vol.labels.data(),
               static_cast<size_t>(bytes));
}

Volume load_image_volume(const std::filesystem::path& base)
{
    const json sidecar = read_sidecar(base);
    check(sidecar.value("kind", "") == "image", ErrorKind::Config, "sidecar ",
          base.string(), ".json is not an image volume");
    check(sidecar.value("dtype", "") == "f32le", ErrorKind::Config, "sidecar ",
          base.string(), ".json has unsupported dtype \"", sidecar.value("dtype", ""),
          "\" for an image");
    const auto& shape = sidecar.at("shape");
    check(shape.is_array() && shape.size() == 4, ErrorKind::Config,
          "image sidecar shape must be [C,D,H,W]");

    Volume vol;
    vol.c = shape[0].get<int64_t>();
    vol.d = shape[1].get<int64_t>();
    vol.h = shape[2].get<int64_t>();
    vol.w = shape[3].get<int64_t>();
    vol.spacing_mm = spacing_from_json(sidecar.at("spacing_mm"));
    const int64_t count = vol.c * vol.d * vol.h * vol.w;
    const int64_t declared = sidecar.at("byte_length").get<int64_t>();
    check(declared == count * static_cast<int64_t>(sizeof(float)), ErrorKind::Config,
          "sidecar byte_length ", declared, " does not match shape (expected ",
          count * sizeof(float), " bytes)");
    const auto payload = read_payload(base, declared);
    vol.voxels.resize(static_cast<size_t>(count));
    std::memcpy(vol.voxels.data(), payload.data(), payload.size());
    vol.validate();
    return vol;
}

LabelVolume load_label_volume(const std::filesystem::path& base)
{
    const json sidecar = read_sidecar(base);
    check(sidecar.value("kind", "") == "label", ErrorKind::Config, "sidecar ",
          base.string(), ".json is not a label volume");
    check(sidecar.value("dtype", "") == "u8", ErrorKind::Config, "sidecar ",
          base.string(), ".json has unsupported dtype \"", sidecar.value("dtype", ""),
          "\" for labels");
    const auto& shape = sidecar.at("shape");
    check(shape.is_array() && shape.size() == 3, ErrorKind::Config,
          "label sidecar shape must be [D,H,W]");

    LabelVolume vol;
    vol.d = shape[0].get<int64_t>();
    vol.h = shape[1].get<int64_t>();
    vol.w = shape[2].get<int64_t>();
    vol.spacing_mm = spacing_from_json(sidecar.at("spacing_mm"));
    const int64_t count = vol.d * vol.h * vol.w;
    const int64_t declared = sidecar.at("byte_length").get<int64_t>();
    check(declared == count, ErrorKind::Config, "sidecar byte_length ", declared,
          " does not match shape (expected ", count, " bytes)");
    const auto payload = read_payload(base, declared);
    vol.labels.assign(payload.begin(), payload.end());
    vol.validate();
    return vol;
}

} // namespace mnet
