#pragma once

// Deterministic raster rendering of episodes: base cells colored by content,
// expert path tinted, executed path marked with an exact center block, and
// the predicted goal drawn as a border ring. Output is binary PPM (P6).

#include <cstdint>
#include <string>
#include <vector>

#include "planpaint/expert.hpp"
#include "planpaint/planner.hpp"

namespace planpaint {

struct RenderOptions {
  int cell_px = 16;  // square pixels per grid cell (>= 4)
};

struct Image {
  int h = 0, w = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  uint8_t* px(int y, int x) { return rgb.data() + 3 * (y * w + x); }
  const uint8_t* px(int y, int x) const {
    return rgb.data() + 3 * (y * w + x);
  }
};

// Overlay palette (exact bytes, auditable per cell):
//   executed path  -> center block (255, 128, 0)
//   expert path    -> 45% blend toward (64, 64, 255)
//   predicted goal -> 2px ring (255, 0, 255)
// `log` may be null to render the bare episode. Blocks episodes draw row 0
// (the floor) at the bottom.
Image render_episode(const Episode& episode, const EpisodeLog* log,
                     const RenderOptions& options = {});

std::string encode_ppm(const Image& image);
void write_ppm(const std::string& path, const Image& image);

}  // namespace planpaint
