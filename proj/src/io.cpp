#include "tally/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>
#include <png.h>

#include "tally/error.hpp"

namespace tally {

namespace {

std::vector<std::uint8_t> read_png_raw(const fs::path& path, std::uint32_t format, int& rows, int& cols) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        fail(ErrorKind::Data, "cannot read PNG '" + path.string() + "': " + image.message);
    image.format = format;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        fail(ErrorKind::Data, "cannot decode PNG '" + path.string() + "': " + image.message);
    }
    rows = static_cast<int>(image.height);
    cols = static_cast<int>(image.width);
    return buf;
}

void write_png_raw(const fs::path& path, const std::uint8_t* data, int rows, int cols, std::uint32_t format) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(cols);
    image.height = static_cast<png_uint_32>(rows);
    image.format = format;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, data, 0, nullptr))
        fail(ErrorKind::Data, "cannot write PNG '" + path.string() + "': " + image.message);
}

}  // namespace

RgbImage read_png_rgb(const fs::path& path) {
    int rows = 0, cols = 0;
    const auto buf = read_png_raw(path, PNG_FORMAT_RGB, rows, cols);
    RgbImage img(rows, cols);
    for (std::size_t i = 0; i < img.red.size(); ++i) {
        img.red[i] = buf[3 * i];
        img.green[i] = buf[3 * i + 1];
        img.blue[i] = buf[3 * i + 2];
    }
    return img;
}

GrayImage read_png_gray(const fs::path& path) {
    int rows = 0, cols = 0;
    auto buf = read_png_raw(path, PNG_FORMAT_GRAY, rows, cols);
    GrayImage img(rows, cols);
    img.data() = std::move(buf);
    return img;
}

void write_png(const fs::path& path, const RgbImage& img) {
    std::vector<std::uint8_t> buf(img.red.size() * 3);
    for (std::size_t i = 0; i < img.red.size(); ++i) {
        buf[3 * i] = img.red[i];
        buf[3 * i + 1] = img.green[i];
        buf[3 * i + 2] = img.blue[i];
    }
    write_png_raw(path, buf.data(), img.rows(), img.cols(), PNG_FORMAT_RGB);
}

void write_png(const fs::path& path, const GrayImage& img) {
    write_png_raw(path, img.data().data(), img.rows(), img.cols(), PNG_FORMAT_GRAY);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
        fail(ErrorKind::Numerical, "SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Data, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) fail(ErrorKind::Data, "cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) fail(ErrorKind::Data, "write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

nlohmann::ordered_json to_json(const ToleranceSpec& spec) {
    nlohmann::ordered_json j;
    j["features"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < spec.names.size(); ++i) {
        nlohmann::ordered_json f;
        f["name"] = spec.names[i];
        f["lower"] = spec.lower[i];
        f["upper"] = spec.upper[i];
        f["weight"] = spec.weights[i];
        j["features"].push_back(f);
    }
    return j;
}

ToleranceSpec tolerance_spec_from_json(const nlohmann::json& j) {
    ToleranceSpec s;
    try {
        for (const auto& f : j.at("features")) {
            s.names.push_back(f.at("name").get<std::string>());
            s.lower.push_back(f.at("lower").get<double>());
            s.upper.push_back(f.at("upper").get<double>());
            s.weights.push_back(f.contains("weight") ? f.at("weight").get<double>() : 1.0);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Data, std::string("malformed tolerance spec: ") + e.what());
    }
    validate(s);
    return s;
}

ToleranceSpec read_tolerance_spec(const fs::path& path) {
    try {
        return tolerance_spec_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Data, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

std::string spec_hash(const ToleranceSpec& spec) { return sha256_hex(to_json(spec).dump()); }

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string to_csv(const FeatureTable& t) {
    std::string out = "id";
    for (const auto& n : t.names) out += "," + n;
    out += ",flags\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out += t.ids[r];
        for (double v : t.rows[r]) out += "," + format_double(v);
        out += "," + (r < t.flags.size() ? t.flags[r] : std::string{}) + "\n";
    }
    return out;
}

namespace {

double parse_double(const std::string& s, const std::string& context) {
    if (s.empty()) return std::nan("");
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::Data, context + ": '" + s + "' is not a number");
    }
}

}  // namespace

FeatureTable feature_table_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Data, "feature table is empty");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "id") fail(ErrorKind::Data, "feature table header must start with 'id'");
    const bool has_flags = header.back() == "flags";
    FeatureTable t;
    t.names.assign(header.begin() + 1, header.end() - (has_flags ? 1 : 0));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            fail(ErrorKind::Data, "feature table line " + std::to_string(lineno) + " has " +
                                      std::to_string(cells.size()) + " cells, expected " +
                                      std::to_string(header.size()));
        t.ids.push_back(cells[0]);
        std::vector<double> row;
        for (std::size_t i = 0; i < t.names.size(); ++i)
            row.push_back(parse_double(cells[i + 1], "feature table line " + std::to_string(lineno)));
        t.rows.push_back(std::move(row));
        t.flags.push_back(has_flags ? cells.back() : std::string{});
    }
    std::vector<std::string> sorted = t.ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        fail(ErrorKind::Data, "feature table has duplicate ids");
    return t;
}

FeatureTable read_feature_table(const fs::path& path) { return feature_table_from_csv(read_file(path)); }

std::string to_csv(const EnsembleManifest& m) {
    std::string out = "id,path,sha256,provenance\n";
    for (const auto& e : m.entries) out += e.id + "," + e.path + "," + e.sha256 + "," + e.provenance + "\n";
    return out;
}

EnsembleManifest ingest_ensemble(const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorKind::Data, "ensemble path '" + path.string() + "' does not exist");
    EnsembleManifest m;
    fs::path manifest;
    if (fs::is_directory(path)) {
        m.root = path;
        if (fs::exists(path / "manifest.csv")) manifest = path / "manifest.csv";
    } else {
        m.root = path.parent_path();
        manifest = path;
    }
    if (!manifest.empty()) {
        std::istringstream in(read_file(manifest));
        std::string line;
        std::getline(in, line);
        const auto header = split_csv_line(line);
        if (header.size() < 3 || header[0] != "id" || header[1] != "path" || header[2] != "sha256")
            fail(ErrorKind::Data, "manifest '" + manifest.string() + "' has an unexpected header");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto c = split_csv_line(line);
            if (c.size() < 3) fail(ErrorKind::Data, "manifest '" + manifest.string() + "': short row");
            m.entries.push_back({c[0], c[1], c[2], c.size() > 3 ? c[3] : ""});
        }
        for (const auto& e : m.entries) {
            const fs::path file = m.root / e.path;
            if (!fs::exists(file)) fail(ErrorKind::Data, "ensemble file '" + file.string() + "' is missing");
            if (sha256_file(file) != e.sha256)
                fail(ErrorKind::Data, "checksum mismatch for '" + file.string() + "'");
        }
    } else {
        std::vector<fs::path> files;
        for (const auto& de : fs::directory_iterator(path))
            if (de.is_regular_file() && de.path().extension() == ".png") files.push_back(de.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            m.entries.push_back({f.stem().string(), f.filename().string(), sha256_file(f), ""});
    }
    if (m.entries.empty()) fail(ErrorKind::Data, "ensemble '" + path.string() + "' holds no images");
    std::vector<std::string> ids;
    for (const auto& e : m.entries) ids.push_back(e.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        fail(ErrorKind::Data, "ensemble '" + path.string() + "' has duplicate ids");
    return m;
}

std::vector<RgbImage> load_rgb(const EnsembleManifest& m) {
    std::vector<RgbImage> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) out.push_back(read_png_rgb(m.root / e.path));
    return out;
}

}  // namespace tally
