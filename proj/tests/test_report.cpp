#include <json.hpp>
#include <regex>

#include "cdmkit/error.hpp"
#include "cdmkit/report.hpp"
#include "support.hpp"

using namespace cdm;

TEST_SUITE("report-cli") {
  TEST_CASE("heatmap color ramp") {
    CHECK(heatmap_color(0.0, 0, 1) == "#ffffff");
    CHECK(heatmap_color(1.0, 0, 1) == "#08306b");
    CHECK(heatmap_color(-3.0, 0, 1) == "#ffffff");
    CHECK(heatmap_color(7.0, 0, 1) == "#08306b");
    // Midpoint channels: (255+8)/2, (255+48)/2, (255+107)/2 rounded.
    CHECK(heatmap_color(0.5, 0, 1) == "#8498b5");
    CHECK(heatmap_color(5.0, 0, 10) == heatmap_color(0.5, 0, 1));
  }

  TEST_CASE("heatmap SVG embeds every cell value") {
    Matrix v(2, 3);
    v << 0.0, 0.25, 0.5, 0.75, 1.0, 0.125;
    const HeatmapGrid g{{"m1", "m2"}, {"c1", "c2", "c3"}, v};
    const auto svg = render_heatmap_svg(g);
    CHECK(svg.rfind("<svg", 0) != std::string::npos);
    const std::regex cell(R"re(data-model="([^"]+)" data-concept="([^"]+)" data-value="([^"]+)")re");
    int count = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), cell); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      const int r = m[1] == "m1" ? 0 : 1;
      const int c = std::stoi(m[2].str().substr(1)) - 1;
      CHECK(std::stod(m[3]) == v(r, c));
      ++count;
    }
    CHECK(count == 6);
    CHECK(svg.find("data-scale-min=\"0\"") != std::string::npos);
    CHECK(svg.find("data-scale-max=\"1\"") != std::string::npos);
    CHECK(svg.find(heatmap_color(0.75, 0, 1)) != std::string::npos);
  }

  TEST_CASE("heatmap validation") {
    CHECK_THROWS_AS(render_heatmap_svg({{"m"}, {"c"}, Matrix::Constant(1, 1, 1.5)}), Error);
    CHECK_THROWS_AS(render_heatmap_svg({{"m"}, {"c", "d"}, Matrix::Zero(1, 1)}), Error);
    CHECK_THROWS_AS(render_heatmap_svg({{"m"}, {"c"}, Matrix::Zero(1, 1), 1.0, 1.0}), Error);
  }

  TEST_CASE("sha256") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    test::TempDir dir("sha");
    write_text_file(dir / "f.txt", "abc");
    CHECK(sha256_file(dir / "f.txt") == sha256_hex("abc"));
  }

  TEST_CASE("manifest contents") {
    test::TempDir dir("man");
    write_text_file(dir / "in.csv", "id,a\nr,1\n");
    RunManifest m;
    m.command = "fit";
    m.config = {{"t", "5"}, {"beta", "1"}};
    m.inputs = {dir / "in.csv"};
    m.seed = 7;
    m.has_seed = true;
    m.write(dir.path());
    const auto j = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    CHECK(j["command"] == "fit");
    CHECK(j["seed"] == 7);
    CHECK(j["config"]["t"] == "5");
    CHECK(j["inputs"][0]["sha256"] == sha256_hex("id,a\nr,1\n"));
    CHECK(j["tool_version"] == tool_version());
    CHECK(j.contains("started_at"));
    CHECK(j.contains("finished_at"));
    CHECK(std::regex_match(j["finished_at"].get<std::string>(), std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\dZ)")));
  }
}
