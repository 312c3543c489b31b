#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planpaint/rng.hpp"
#include "planpaint/setting.hpp"
#include "planpaint/tensor.hpp"

namespace planpaint {

inline constexpr int32_t kNoBlock = -1;

struct BlockConfig {
  int n_columns = 8;
  int max_height = 8;
  int n_blocks = 4;
  std::vector<std::string> colors = {"red", "green", "blue", "yellow"};
  int max_moves = 20;  // macro-move budget per episode

  void validate() const;
};

// Physics-free column world: row 0 is the floor, gravity packs each column
// from the bottom. occupancy holds block ids (0-based) or kNoBlock.
struct BlockState {
  BlockConfig config;
  std::vector<int32_t> occupancy;  // row-major [row * n_columns + col]
  int step_count = 0;

  int32_t at(int row, int col) const {
    return occupancy[row * config.n_columns + col];
  }
  int32_t& at(int row, int col) {
    return occupancy[row * config.n_columns + col];
  }
  int column_height(int col) const;
  // Top block id of a column, or kNoBlock when empty.
  int32_t top_block(int col) const;
  // (row, col) of a block id; throws on unknown id.
  Cell block_cell(int32_t block_id) const;
};

struct Constraint {
  // kind is implicitly on_top_of — the only relation in scope.
  int32_t upper = 0;
  int32_t lower = 0;
  friend bool operator==(const Constraint&, const Constraint&) = default;
};

struct PickPlace {
  int source_col = 0;
  int dest_col = 0;
  friend bool operator==(const PickPlace&, const PickPlace&) = default;
};

// Scatters blocks into columns respecting gravity; deterministic per seed.
BlockState reset_blocks(const BlockConfig& config, uint64_t seed);

// Moves the top block of source_col onto dest_col. Throws on empty source,
// full destination, or source == dest.
BlockState apply(const BlockState& state, PickPlace move);
void apply_inplace(BlockState& state, PickPlace move);

bool is_legal_move(const BlockState& state, PickPlace move);

// Fraction of on_top_of constraints satisfied: upper directly above lower in
// the same column. Throws on empty constraint list or unknown block ids.
double satisfied_fraction(const BlockState& state,
                          const std::vector<Constraint>& constraints);

// Expert oracle: a pick/place sequence whose replay satisfies every
// constraint. Requires the constraint graph to be acyclic with per-block
// in-degree and out-degree at most 1 (chains); throws otherwise.
std::vector<PickPlace> solve_constraints(
    const BlockState& state, const std::vector<Constraint>& constraints);

// Single-channel feature map (1, max_height, n_columns): empty cells 0,
// block id b encoded as (b+1)/(n_blocks+1).
Tensor3f blocks_observation(const BlockState& state);

// Samples a constraint set for the given task family. kStack draws chains
// over blocks currently sitting alone on the floor; kRearrange draws chains
// whose bottoms are tops of existing columns. n_constraints == chain edges.
std::vector<Constraint> sample_constraints(const BlockState& state,
                                           int n_constraints, Setting setting,
                                           Rng& rng);

std::string to_json(const BlockState& state);
BlockState block_state_from_json(const std::string& text);

}  // namespace planpaint
