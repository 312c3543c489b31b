#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "planpaint/setting.hpp"
#include "planpaint/tensor.hpp"

namespace planpaint {

// Reserved vocabulary ids for grid cell tokens; object ids start at
// kFirstObjectId and run through kFirstObjectId + object_vocab_size − 1.
inline constexpr int32_t kTokenUnknown = 0;
inline constexpr int32_t kTokenEmpty = 1;
inline constexpr int32_t kTokenObstacle = 2;
inline constexpr int32_t kTokenAgent = 3;
inline constexpr int32_t kFirstObjectId = 4;
inline constexpr int kNumReservedTokens = 4;

enum class Observability { kFull, kPartial };

enum class Action { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumActions = 4;

const char* to_string(Action a);

struct GridConfig {
  int height = 16;
  int width = 16;
  int n_objects = 8;        // objects placed on the grid (1..8)
  int n_obstacles = 10;     // 0..10
  int object_vocab_size = 8;  // distinct nameable object ids in the vocabulary
  int fov_radius = 4;       // Chebyshev radius, partial mode only
  int max_steps = 100;
  Observability observability = Observability::kFull;
  Setting setting = Setting::kMO1G;
  // P-MO2G only: max Chebyshev distance between reference and hidden target,
  // so the reference acts as a localizing landmark for the unseen goal.
  int ref_target_radius = 4;

  void validate() const;
};

struct EnvState {
  GridConfig config;
  // Row-major per-cell content: kTokenEmpty, kTokenObstacle or an object id.
  std::vector<int32_t> grid;
  Cell agent_pos;
  int32_t target_id = -1;
  int32_t reference_id = -1;  // -1 when the setting has no reference object
  int step_count = 0;
  std::vector<uint8_t> revealed;  // row-major boolean memory mask
  uint64_t seed = 0;              // provenance of the reset draw
  bool terminated = false;

  int32_t cell(int r, int c) const { return grid[r * config.width + c]; }
  bool is_revealed(int r, int c) const {
    return revealed[r * config.width + c] != 0;
  }
  bool in_bounds(int r, int c) const {
    return r >= 0 && r < config.height && c >= 0 && c < config.width;
  }
  // Location of an object id; throws if the id is not on the grid.
  Cell find_object(int32_t object_id) const;
  Cell target_cell() const { return find_object(target_id); }
};

struct Observation {
  int h = 0, w = 0;
  std::vector<int32_t> token_map;  // UNKNOWN outside revealed in partial mode
  std::vector<uint8_t> agent_map;  // one-hot at agent_pos
  std::vector<uint8_t> revealed;
};

// Places objects, obstacles and the agent without overlap such that the
// target is reachable; P-MO2G additionally hides the target outside the
// initial field of view while keeping the reference inside it. Deterministic
// per (config, seed); throws after 1000 infeasible layout attempts.
EnvState reset(const GridConfig& config, uint64_t seed);

// Advances the state by one action in place and returns whether the episode
// terminated (success or step budget). Throws on step-after-termination.
bool step_inplace(EnvState& state, Action action);

// Pure-functional flavor of step for callers that want value semantics.
std::pair<EnvState, bool> step(const EnvState& state, Action action);

Observation observe(const EnvState& state);

bool is_success(const EnvState& state);

// Chebyshev distance, the FoV metric.
inline int chebyshev(Cell a, Cell b) {
  const int dr = a.r > b.r ? a.r - b.r : b.r - a.r;
  const int dc = a.c > b.c ? a.c - b.c : b.c - a.c;
  return dr > dc ? dr : dc;
}

// JSON round-trip for logging and golden tests.
std::string to_json(const EnvState& state);
EnvState env_state_from_json(const std::string& text);

}  // namespace planpaint
