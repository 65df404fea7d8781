#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svct/image.hpp"

namespace svct::io {

namespace fs = std::filesystem;

// Writes to a sibling temp file then renames over the target.
void atomic_write(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Sidecar header path for a raw array: "<stem>.json" next to "<stem>.raw".
fs::path sidecar_path(const fs::path& raw_path);

// Flat little-endian float32 row-major data plus a JSON sidecar:
// {kind, width, height, views, detectors[, detector_spacing, angles]}.
void save_image(const fs::path& raw_path, const Image& img);
Image load_image(const fs::path& raw_path);
void save_sinogram(const fs::path& raw_path, const Sinogram& sino);
Sinogram load_sinogram(const fs::path& raw_path);

// Image rounded through float32, i.e. exactly what save_image stores.
Image float32_round_trip(const Image& img);

// 16-bit binary PGM; values in [lo, hi] map linearly onto 0..65535.
void save_pgm(const fs::path& path, const Image& img, double lo, double hi);

// Shortest round-trip text for a double; "inf"/"-inf"/"nan" literals.
std::string format_number(double v);

class Csv {
public:
    explicit Csv(std::vector<std::string> header);

    Csv& row(std::vector<std::string> cells);
    std::size_t rows() const noexcept { return rows_; }
    const std::string& text() const noexcept { return text_; }
    void save(const fs::path& path) const { atomic_write(path, text_); }

private:
    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string text_;
};

}  // namespace svct::io
