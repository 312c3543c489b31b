#include <filesystem>

#include "doctest.h"
#include "planpaint/render.hpp"

namespace pp = planpaint;

TEST_SUITE("unit") {
  TEST_CASE("renders are deterministic and sized by cell_px") {
    pp::GridConfig g;
    g.setting = pp::Setting::kMO1G;
    pp::EpisodeOptions eo;
    eo.progress_sampling = false;
    const pp::Episode ep = pp::make_episode(g, pp::Setting::kMO1G, 5, eo);
    pp::RenderOptions opts;
    opts.cell_px = 8;
    const pp::Image a = pp::render_episode(ep, nullptr, opts);
    const pp::Image b = pp::render_episode(ep, nullptr, opts);
    CHECK(a.rgb == b.rgb);
    CHECK(a.w == g.width * 8);
    CHECK(a.h == g.height * 8);
    REQUIRE(a.rgb.size() == static_cast<size_t>(a.w) * a.h * 3);
  }

  TEST_CASE("overlay marks executed path cells") {
    pp::GridConfig g;
    g.setting = pp::Setting::kMO1G;
    g.n_obstacles = 0;
    pp::EpisodeOptions eo;
    eo.progress_sampling = false;
    const pp::Episode ep = pp::make_episode(g, pp::Setting::kMO1G, 6, eo);
    pp::EpisodeLog log;
    log.setting = pp::Setting::kMO1G;
    log.seed = ep.seed;
    log.visited_cells = ep.path_cells;
    log.final_pos = ep.path_cells.back();
    pp::RenderOptions opts;
    opts.cell_px = 8;
    const pp::Image with = pp::render_episode(ep, &log, opts);
    const pp::Image without = pp::render_episode(ep, nullptr, opts);
    CHECK(with.rgb != without.rgb);
    // The executed-path marker is a centered block of (255,128,0).
    const pp::Cell mid = ep.path_cells[ep.path_cells.size() / 2];
    const int y = mid.r * 8 + 4, x = mid.c * 8 + 4;
    const uint8_t* p = with.px(y, x);
    CHECK(static_cast<int>(p[0]) == 255);
    CHECK(static_cast<int>(p[1]) == 128);
    CHECK(static_cast<int>(p[2]) == 0);
  }

  TEST_CASE("blocks render draws the floor at the bottom") {
    pp::BlockConfig bc;
    pp::EpisodeOptions eo;
    eo.horizon = 16;
    const pp::Episode ep =
        pp::make_blocks_episode(bc, pp::Setting::kStack, 7, eo);
    pp::RenderOptions opts;
    opts.cell_px = 4;
    const pp::Image img = pp::render_episode(ep, nullptr, opts);
    CHECK(img.w == bc.n_columns * 4);
    CHECK(img.h == bc.max_height * 4);
  }

  TEST_CASE("ppm encoding carries the exact header and payload") {
    pp::Image img;
    img.h = 2;
    img.w = 3;
    img.rgb.assign(18, 0);
    img.rgb[0] = 255;
    const std::string ppm = pp::encode_ppm(img);
    const std::string header = "P6\n3 2\n255\n";
    CHECK(ppm.rfind(header, 0) == 0);
    CHECK(ppm.size() == header.size() + 18);
    CHECK(static_cast<uint8_t>(ppm[header.size()]) == 255);

    const std::string path = "render_tmp.ppm";
    pp::write_ppm(path, img);
    CHECK(std::filesystem::file_size(path) == ppm.size());
    std::filesystem::remove(path);
  }
}
