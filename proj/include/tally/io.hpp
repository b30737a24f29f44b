#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tally/grid.hpp"
#include "tally/similarity.hpp"

namespace tally {

namespace fs = std::filesystem;

/// Any PNG is converted to 8-bit RGB (gray replicated).
RgbImage read_png_rgb(const fs::path& path);
/// Any PNG is converted to 8-bit gray.
GrayImage read_png_gray(const fs::path& path);
void write_png(const fs::path& path, const RgbImage& img);
void write_png(const fs::path& path, const GrayImage& img);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);
std::string read_file(const fs::path& path);
/// Writes via a temporary file in the same directory, then renames.
void write_file(const fs::path& path, const std::string& content);

/// {"features": [{"name", "lower", "upper", "weight"}, ...]}
nlohmann::ordered_json to_json(const ToleranceSpec& spec);
ToleranceSpec tolerance_spec_from_json(const nlohmann::json& j);
ToleranceSpec read_tolerance_spec(const fs::path& path);
/// SHA-256 of the canonical JSON serialization.
std::string spec_hash(const ToleranceSpec& spec);

/// Rows of named real features; NaN is written as an empty cell.
struct FeatureTable {
    std::vector<std::string> names;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> flags;  // ';'-joined per row
};

std::string format_double(double v);
std::string to_csv(const FeatureTable& t);
FeatureTable feature_table_from_csv(const std::string& text);
FeatureTable read_feature_table(const fs::path& path);

struct ManifestEntry {
    std::string id;
    std::string path;  // relative to the manifest directory
    std::string sha256;
    std::string provenance;
};

struct EnsembleManifest {
    fs::path root;
    std::vector<ManifestEntry> entries;
};

std::string to_csv(const EnsembleManifest& m);

/// A directory holding manifest.csv (checksums verified), a directory of
/// PNGs (ids are file stems in sorted order), or a manifest CSV path.
EnsembleManifest ingest_ensemble(const fs::path& path);

std::vector<RgbImage> load_rgb(const EnsembleManifest& m);

/// Splits on commas; no quoting (ids and names never contain commas).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace tally
