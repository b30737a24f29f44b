#include "doctest.h"

#include <cmath>
#include <fstream>

#include "tally/error.hpp"
#include "tally/io.hpp"

using namespace tally;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("tally-test-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RgbImage pattern(int r, int c, int k) {
    RgbImage img(r, c);
    for (std::size_t i = 0; i < img.red.size(); ++i) {
        img.red[i] = static_cast<std::uint8_t>((i * 7 + k) % 256);
        img.green[i] = static_cast<std::uint8_t>((i * 13 + 2 * k) % 256);
        img.blue[i] = static_cast<std::uint8_t>((i * 29 + 3 * k) % 256);
    }
    return img;
}

}  // namespace

TEST_CASE("sha256 known digests") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("png round trip") {
    TempDir dir("png");
    const RgbImage img = pattern(9, 13, 1);
    write_png(dir.path / "a.png", img);
    CHECK(read_png_rgb(dir.path / "a.png") == img);
    write_png(dir.path / "g.png", img.green);
    CHECK(read_png_gray(dir.path / "g.png") == img.green);
    const RgbImage rep = read_png_rgb(dir.path / "g.png");
    CHECK(rep.red == img.green);
    CHECK(rep.blue == img.green);
    std::ofstream(dir.path / "bad.png") << "not a png";
    CHECK_THROWS_AS(read_png_rgb(dir.path / "bad.png"), Error);
}

TEST_CASE("feature table csv round trip") {
    FeatureTable t;
    t.names = {"a", "b", "c"};
    t.ids = {"x", "y"};
    t.rows = {{0.1, std::nan(""), -3.0}, {1.0 / 3.0, 2e-9, 12345.5}};
    t.flags = {"", "glcm_degenerate;roi_empty"};
    const std::string text = to_csv(t);
    const FeatureTable u = feature_table_from_csv(text);
    CHECK(u.names == t.names);
    CHECK(u.ids == t.ids);
    CHECK(u.flags == t.flags);
    CHECK(std::isnan(u.rows[0][1]));
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            if (!std::isnan(t.rows[r][c])) CHECK(u.rows[r][c] == doctest::Approx(t.rows[r][c]).epsilon(1e-11));
    CHECK(to_csv(u) == text);

    CHECK_THROWS_AS(feature_table_from_csv(""), Error);
    CHECK_THROWS_AS(feature_table_from_csv("name,a\nx,1\n"), Error);
    CHECK_THROWS_AS(feature_table_from_csv("id,a\nx,1,2\n"), Error);
    CHECK_THROWS_AS(feature_table_from_csv("id,a\nx,abc\n"), Error);
    CHECK_THROWS_AS(feature_table_from_csv("id,a\nx,1\nx,2\n"), Error);
}

TEST_CASE("tolerance spec json round trip and hash") {
    ToleranceSpec s = uniform_spec({"f1", "f2"}, {0.0, -1.0}, {1.0, 2.5});
    s.weights = {3.0, 1.0};
    const ToleranceSpec back = tolerance_spec_from_json(nlohmann::json::parse(to_json(s).dump()));
    CHECK(back.names == s.names);
    CHECK(back.lower == s.lower);
    CHECK(back.upper == s.upper);
    CHECK(back.weights == s.weights);
    CHECK(spec_hash(back) == spec_hash(s));
    ToleranceSpec t = s;
    t.upper[1] = 2.6;
    CHECK(spec_hash(t) != spec_hash(s));
    CHECK_THROWS_AS(tolerance_spec_from_json(nlohmann::json::parse(R"({"features": 3})")), Error);
}

TEST_CASE("ensemble ingestion") {
    TempDir dir("ens");
    CHECK_THROWS_AS(ingest_ensemble(dir.path), Error);
    CHECK_THROWS_AS(ingest_ensemble(dir.path / "missing"), Error);
    for (int k : {2, 0, 1}) write_png(dir.path / ("img-" + std::to_string(k) + ".png"), pattern(4, 5, k));
    const EnsembleManifest plain = ingest_ensemble(dir.path);
    REQUIRE(plain.entries.size() == 3u);
    CHECK(plain.entries[0].id == "img-0");
    CHECK(plain.entries[2].id == "img-2");
    CHECK(load_rgb(plain)[1] == pattern(4, 5, 1));

    write_file(dir.path / "manifest.csv", to_csv(plain));
    CHECK(ingest_ensemble(dir.path).entries.size() == 3u);
    CHECK(ingest_ensemble(dir.path / "manifest.csv").entries.size() == 3u);

    write_png(dir.path / "img-1.png", pattern(4, 5, 7));
    try {
        ingest_ensemble(dir.path);
        FAIL("corrupted file must be rejected");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("img-1.png") != std::string::npos);
        CHECK(e.exit_code() == 2);
    }
}

TEST_CASE("csv line splitting") {
    CHECK(split_csv_line("a,,b\r") == std::vector<std::string>{"a", "", "b"});
    CHECK(split_csv_line("") == std::vector<std::string>{""});
}
