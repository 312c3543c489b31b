#include "planpaint/render.hpp"

#include <array>

#include "planpaint/record_io.hpp"

namespace planpaint {

namespace {

using Rgb = std::array<uint8_t, 3>;

constexpr Rgb kEmpty{245, 245, 245};
constexpr Rgb kObstacle{64, 64, 64};
constexpr Rgb kAgent{20, 20, 20};
constexpr Rgb kUnknownBlend{200, 200, 210};
constexpr Rgb kExpertTint{64, 64, 255};
constexpr Rgb kExecuted{255, 128, 0};
constexpr Rgb kGoalRing{255, 0, 255};

constexpr std::array<Rgb, 8> kObjectPalette{{{220, 50, 50},
                                             {240, 180, 40},
                                             {60, 170, 60},
                                             {70, 130, 220},
                                             {160, 90, 200},
                                             {0, 180, 190},
                                             {230, 120, 180},
                                             {140, 100, 60}}};

Rgb blend(Rgb base, Rgb over, int percent) {
  Rgb out;
  for (int i = 0; i < 3; ++i)
    out[i] = static_cast<uint8_t>(
        (base[i] * (100 - percent) + over[i] * percent) / 100);
  return out;
}

void fill_cell(Image& img, int row, int col, int px, Rgb color) {
  for (int y = row * px; y < (row + 1) * px; ++y)
    for (int x = col * px; x < (col + 1) * px; ++x) {
      uint8_t* p = img.px(y, x);
      p[0] = color[0];
      p[1] = color[1];
      p[2] = color[2];
    }
}

void center_block(Image& img, int row, int col, int px, Rgb color) {
  const int q = px / 4;
  for (int y = row * px + q; y < (row + 1) * px - q; ++y)
    for (int x = col * px + q; x < (col + 1) * px - q; ++x) {
      uint8_t* p = img.px(y, x);
      p[0] = color[0];
      p[1] = color[1];
      p[2] = color[2];
    }
}

void ring(Image& img, int row, int col, int px, Rgb color) {
  for (int y = row * px; y < (row + 1) * px; ++y)
    for (int x = col * px; x < (col + 1) * px; ++x) {
      const int ly = y - row * px, lx = x - col * px;
      if (ly >= 2 && ly < px - 2 && lx >= 2 && lx < px - 2) continue;
      uint8_t* p = img.px(y, x);
      p[0] = color[0];
      p[1] = color[1];
      p[2] = color[2];
    }
}

Rgb grid_cell_color(const EnvState& state, int r, int c) {
  const int32_t tok = state.cell(r, c);
  Rgb base = kEmpty;
  if (tok == kTokenObstacle) base = kObstacle;
  else if (tok >= kFirstObjectId)
    base = kObjectPalette[(tok - kFirstObjectId) % kObjectPalette.size()];
  if (state.agent_pos == Cell{r, c}) base = kAgent;
  if (!state.is_revealed(r, c)) base = blend(base, kUnknownBlend, 50);
  return base;
}

Image render_grid(const Episode& ep, const EpisodeLog* log, int px) {
  const EnvState& st = ep.state;
  const int h = st.config.height, w = st.config.width;
  Image img;
  img.h = h * px;
  img.w = w * px;
  img.rgb.assign(static_cast<size_t>(img.h) * img.w * 3, 0);

  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) fill_cell(img, r, c, px, grid_cell_color(st, r, c));
  for (const Cell& c : ep.path_cells) {
    const Rgb base = grid_cell_color(st, c.r, c.c);
    fill_cell(img, c.r, c.c, px, blend(base, kExpertTint, 45));
  }
  if (log != nullptr) {
    for (const Cell& c : log->visited_cells)
      center_block(img, c.r, c.c, px, kExecuted);
    if (!log->predicted_goals.empty()) {
      const Cell g = log->predicted_goals.back();
      ring(img, g.r, g.c, px, kGoalRing);
    }
  }
  return img;
}

Image render_blocks(const Episode& ep, const EpisodeLog* log, int px) {
  const BlockState& st = ep.block_state;
  const int h = st.config.max_height, w = st.config.n_columns;
  Image img;
  img.h = h * px;
  img.w = w * px;
  img.rgb.assign(static_cast<size_t>(img.h) * img.w * 3, 0);

  // Row 0 is the floor; draw it at the bottom of the image.
  const auto draw_row = [&](int env_row) { return h - 1 - env_row; };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int32_t id = st.at(r, c);
      const Rgb color =
          id == kNoBlock ? kEmpty : kObjectPalette[id % kObjectPalette.size()];
      fill_cell(img, draw_row(r), c, px, color);
    }
  for (const Cell& c : ep.path_cells) {
    const int32_t id = st.at(c.r, c.c);
    const Rgb base =
        id == kNoBlock ? kEmpty : kObjectPalette[id % kObjectPalette.size()];
    fill_cell(img, draw_row(c.r), c.c, px, blend(base, kExpertTint, 45));
  }
  if (log != nullptr) {
    for (const Cell& c : log->visited_cells)
      center_block(img, draw_row(c.r), c.c, px, kExecuted);
    if (!log->predicted_goals.empty()) {
      const Cell g = log->predicted_goals.back();
      ring(img, draw_row(g.r), g.c, px, kGoalRing);
    }
  }
  return img;
}

}  // namespace

Image render_episode(const Episode& episode, const EpisodeLog* log,
                     const RenderOptions& options) {
  PP_CHECK_MSG(options.cell_px >= 4, "cell_px must be at least 4");
  if (episode.is_blocks())
    return render_blocks(episode, log, options.cell_px);
  return render_grid(episode, log, options.cell_px);
}

std::string encode_ppm(const Image& image) {
  std::string out = "P6\n" + std::to_string(image.w) + " " +
                    std::to_string(image.h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.rgb.data()),
             image.rgb.size());
  return out;
}

void write_ppm(const std::string& path, const Image& image) {
  write_text_file(path, encode_ppm(image));
}

}  // namespace planpaint
