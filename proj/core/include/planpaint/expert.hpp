#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "planpaint/blocks_env.hpp"
#include "planpaint/grid_env.hpp"
#include "planpaint/language.hpp"
#include "planpaint/tensor.hpp"

namespace planpaint {

// Shortest 4-connected obstacle-avoiding path including both endpoints.
// Deterministic: neighbors expanded in up/down/left/right order, f-ties
// broken by smaller h then FIFO insertion. Throws on unreachable goal.
std::vector<Cell> astar(const std::vector<uint8_t>& obstacle_mask, int h,
                        int w, Cell start, Cell goal);

std::vector<uint8_t> obstacle_mask_from_tokens(
    const std::vector<int32_t>& token_map);

// Trajectory/goal targets in {-1,+1}. Channel t marks path[min(t+1, n-1)]
// (the path's own start cell is the agent's current position and is not a
// prediction target); the goal raster marks the path's final cell even when
// the trajectory channels truncate at T.
struct PlanRasters {
  Tensor3f traj;  // (T, H, W)
  Tensor3f goal;  // (1, H, W)
};
PlanRasters rasterize_plan(const std::vector<Cell>& path, int T, int h, int w);

// Blocks flavor: every cell is a future end-effector state, so channel t
// marks cells[min(t, n-1)].
PlanRasters rasterize_ee_cells(const std::vector<Cell>& cells, int T, int h,
                               int w);

struct EpisodeOptions {
  int horizon = 32;  // T; blocks episodes typically use 16
  // Sample a uniformly random progress point along the expert plan and store
  // the episode from there (observation advanced, targets = remaining
  // suffix), mirroring training on observations along ground-truth plans.
  bool progress_sampling = true;
  LanguageOptions language;
  // Blocks: constraint count drawn uniformly from [min, max].
  int n_constraints_min = 1;
  int n_constraints_max = 1;
};

// One training/eval record. Rasters are derived on demand from path_cells to
// keep datasets small; `state`/`block_state` snapshot the environment at the
// episode's (possibly progress-advanced) start point.
struct Episode {
  Setting setting = Setting::kMO1G;
  uint64_t seed = 0;
  EnvState state;              // grid settings
  BlockState block_state;      // blocks settings
  std::vector<Constraint> constraints;  // blocks settings
  Instruction instruction;
  std::vector<Cell> path_cells;  // expert plan from `state`; see rasterizers
  Cell goal_cell;

  bool is_blocks() const { return is_blocks_setting(setting); }
  PlanRasters rasters(int T) const;
};

// Full expert path for a grid state (privileged, ground-truth obstacles):
// P-MO2G routes via the reference object, other settings go straight to the
// target.
std::vector<Cell> expert_path(const EnvState& state);

Episode make_episode(const GridConfig& config, Setting setting, uint64_t seed,
                     const EpisodeOptions& options = {});
Episode make_blocks_episode(const BlockConfig& config, Setting setting,
                            uint64_t seed, const EpisodeOptions& options = {});

struct DatasetManifest {
  int n_episodes = 0;
  int height = 0;
  int width = 0;
  int horizon = 0;   // T
  int text_len = 0;  // L
  Setting setting = Setting::kMO1G;
  int format_version = 1;
  Vocabulary vocab;
  std::optional<GridConfig> grid_config;
  std::optional<BlockConfig> block_config;
  std::string config_digest;  // hex hash of the originating config
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Episode> episodes;
};

// Directory layout: {manifest.json, episodes.bin}; lossless round-trip.
void write_dataset(const Dataset& dataset, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// Convenience driver used by the CLI: generates n validated episodes with
// seeds seed_base..seed_base+n-1.
Dataset generate_dataset(const GridConfig& config, Setting setting,
                         int n_episodes, uint64_t seed_base,
                         const EpisodeOptions& options = {});
Dataset generate_blocks_dataset(const BlockConfig& config, Setting setting,
                                int n_episodes, uint64_t seed_base,
                                const EpisodeOptions& options = {});

}  // namespace planpaint
