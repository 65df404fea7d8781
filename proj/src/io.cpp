#include "svct/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "svct/error.hpp"

namespace svct::io {

namespace {

using nlohmann::json;

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) | (v >> 24);
    }
    return v;
}

std::string encode_f32(std::span<const double> values) {
    std::string out(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
        std::memcpy(out.data() + 4 * i, &bits, 4);
    }
    return out;
}

std::vector<double> decode_f32(const std::string& bytes, std::size_t count, const fs::path& path) {
    require(bytes.size() == 4 * count, ErrorKind::io,
            path.string() + ": expected " + std::to_string(4 * count) + " bytes, found " +
                std::to_string(bytes.size()));
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + 4 * i, 4);
        out[i] = static_cast<double>(std::bit_cast<float>(to_little(bits)));
    }
    return out;
}

json read_sidecar(const fs::path& raw_path, const char* kind) {
    const fs::path side = sidecar_path(raw_path);
    json j;
    try {
        j = json::parse(read_file(side));
    } catch (const json::exception& e) {
        fail(ErrorKind::io, side.string() + ": " + e.what());
    }
    require(j.value("kind", "") == kind, ErrorKind::io,
            side.string() + ": expected kind '" + kind + "'");
    return j;
}

}  // namespace

void atomic_write(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::io, "cannot open " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(static_cast<bool>(out), ErrorKind::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    require(!ec, ErrorKind::io, "rename to " + path.string() + " failed: " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::missing_artifact, "missing file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

fs::path sidecar_path(const fs::path& raw_path) {
    fs::path p = raw_path;
    p.replace_extension(".json");
    return p;
}

void save_image(const fs::path& raw_path, const Image& img) {
    atomic_write(raw_path, encode_f32(img.values()));
    const json j = {{"kind", "image"},
                    {"width", img.size()},
                    {"height", img.size()},
                    {"views", 0},
                    {"detectors", 0}};
    atomic_write(sidecar_path(raw_path), j.dump(2) + "\n");
}

Image load_image(const fs::path& raw_path) {
    const json j = read_sidecar(raw_path, "image");
    const auto w = j.at("width").get<std::size_t>();
    const auto h = j.at("height").get<std::size_t>();
    require(w == h, ErrorKind::io, raw_path.string() + ": only square images are supported");
    return Image(w, decode_f32(read_file(raw_path), w * h, raw_path));
}

void save_sinogram(const fs::path& raw_path, const Sinogram& sino) {
    atomic_write(raw_path, encode_f32(sino.data));
    const json j = {{"kind", "sinogram"},
                    {"width", sino.detectors},
                    {"height", sino.views},
                    {"views", sino.views},
                    {"detectors", sino.detectors},
                    {"detector_spacing", sino.detector_spacing},
                    {"angles", sino.angles}};
    atomic_write(sidecar_path(raw_path), j.dump(2) + "\n");
}

Sinogram load_sinogram(const fs::path& raw_path) {
    const json j = read_sidecar(raw_path, "sinogram");
    const auto views = j.at("views").get<std::size_t>();
    const auto detectors = j.at("detectors").get<std::size_t>();
    std::vector<double> angles;
    if (j.contains("angles")) {
        angles = j.at("angles").get<std::vector<double>>();
    } else {
        for (std::size_t k = 0; k < views; ++k) {
            angles.push_back(M_PI * static_cast<double>(k) / static_cast<double>(views));
        }
    }
    const double spacing = j.value("detector_spacing", 2.0 * std::sqrt(2.0) /
                                                           static_cast<double>(detectors - 1));
    Sinogram s(std::move(angles), detectors, spacing);
    s.data = decode_f32(read_file(raw_path), views * detectors, raw_path);
    s.validate();
    return s;
}

Image float32_round_trip(const Image& img) {
    Image out = img;
    for (double& v : out.values()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

void save_pgm(const fs::path& path, const Image& img, double lo, double hi) {
    require(hi > lo, ErrorKind::config, "PGM window needs hi > lo");
    std::string out = "P5\n" + std::to_string(img.size()) + " " + std::to_string(img.size()) +
                      "\n65535\n";
    for (double v : img.values()) {
        const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        out.push_back(static_cast<char>(q >> 8));
        out.push_back(static_cast<char>(q & 0xff));
    }
    atomic_write(path, out);
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

Csv::Csv(std::vector<std::string> header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
    text_ += "\n";
}

Csv& Csv::row(std::vector<std::string> cells) {
    require(cells.size() == columns_, ErrorKind::shape_mismatch, "CSV row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += "\n";
    ++rows_;
    return *this;
}

}  // namespace svct::io
