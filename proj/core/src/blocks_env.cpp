#include "planpaint/blocks_env.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"

namespace planpaint {
namespace {

int count_blocks(const BlockState& state) {
  int n = 0;
  for (int32_t v : state.occupancy) n += (v != kNoBlock);
  return n;
}

void check_block_id(const BlockState& state, int32_t id) {
  if (id < 0 || id >= state.config.n_blocks)
    throw Error("unknown block id " + std::to_string(id));
}

}  // namespace

void BlockConfig::validate() const {
  PP_CHECK_MSG(n_columns >= 1 && max_height >= 1, "empty block world");
  PP_CHECK_MSG(n_blocks >= 1, "need at least one block");
  PP_CHECK_MSG(n_blocks <= n_columns * max_height, "blocks cannot fit");
  PP_CHECK_MSG(static_cast<int>(colors.size()) == n_blocks,
               "colors must name each block exactly once");
  std::set<std::string> distinct(colors.begin(), colors.end());
  PP_CHECK_MSG(static_cast<int>(distinct.size()) == n_blocks,
               "block colors must be distinct");
  PP_CHECK_MSG(max_moves >= 1, "max_moves must be >= 1");
}

int BlockState::column_height(int col) const {
  int h = 0;
  while (h < config.max_height && at(h, col) != kNoBlock) ++h;
  return h;
}

int32_t BlockState::top_block(int col) const {
  const int h = column_height(col);
  return h == 0 ? kNoBlock : at(h - 1, col);
}

Cell BlockState::block_cell(int32_t block_id) const {
  check_block_id(*this, block_id);
  for (int r = 0; r < config.max_height; ++r)
    for (int c = 0; c < config.n_columns; ++c)
      if (at(r, c) == block_id) return {r, c};
  throw InvariantError("block id " + std::to_string(block_id) +
                       " missing from occupancy");
}

BlockState reset_blocks(const BlockConfig& config, uint64_t seed) {
  config.validate();
  BlockState state;
  state.config = config;
  state.occupancy.assign(
      static_cast<size_t>(config.max_height) * config.n_columns, kNoBlock);
  state.step_count = 0;

  Rng rng(derive_seed(seed, "blocks_reset"));
  std::vector<int32_t> order(config.n_blocks);
  for (int i = 0; i < config.n_blocks; ++i) order[i] = i;
  rng.shuffle(order);
  for (int32_t id : order) {
    std::vector<int> open;
    for (int c = 0; c < config.n_columns; ++c)
      if (state.column_height(c) < config.max_height) open.push_back(c);
    PP_CHECK(!open.empty());
    const int col = open[rng.next_below(open.size())];
    state.at(state.column_height(col), col) = id;
  }
  return state;
}

bool is_legal_move(const BlockState& state, PickPlace move) {
  const int n = state.config.n_columns;
  if (move.source_col < 0 || move.source_col >= n || move.dest_col < 0 ||
      move.dest_col >= n || move.source_col == move.dest_col)
    return false;
  return state.column_height(move.source_col) > 0 &&
         state.column_height(move.dest_col) < state.config.max_height;
}

void apply_inplace(BlockState& state, PickPlace move) {
  PP_CHECK_MSG(move.source_col != move.dest_col,
               "pick/place source equals destination");
  PP_CHECK_MSG(move.source_col >= 0 &&
                   move.source_col < state.config.n_columns &&
                   move.dest_col >= 0 && move.dest_col < state.config.n_columns,
               "pick/place column out of range");
  const int src_h = state.column_height(move.source_col);
  if (src_h == 0)
    throw Error("apply: source column " + std::to_string(move.source_col) +
                " is empty");
  const int dst_h = state.column_height(move.dest_col);
  if (dst_h >= state.config.max_height)
    throw Error("apply: destination column " + std::to_string(move.dest_col) +
                " is full");
  const int32_t id = state.at(src_h - 1, move.source_col);
  state.at(src_h - 1, move.source_col) = kNoBlock;
  state.at(dst_h, move.dest_col) = id;
  state.step_count += 1;
}

BlockState apply(const BlockState& state, PickPlace move) {
  BlockState next = state;
  apply_inplace(next, move);
  return next;
}

double satisfied_fraction(const BlockState& state,
                          const std::vector<Constraint>& constraints) {
  if (constraints.empty())
    throw Error("satisfied_fraction: empty constraint list");
  int satisfied = 0;
  for (const Constraint& k : constraints) {
    check_block_id(state, k.upper);
    check_block_id(state, k.lower);
    const Cell u = state.block_cell(k.upper);
    const Cell l = state.block_cell(k.lower);
    if (u.c == l.c && u.r == l.r + 1) ++satisfied;
  }
  return static_cast<double>(satisfied) / constraints.size();
}

std::vector<PickPlace> solve_constraints(
    const BlockState& state, const std::vector<Constraint>& constraints) {
  // Degree checks: each block supports at most one block and rests on at most
  // one block, so the constraint graph decomposes into chains.
  std::map<int32_t, int32_t> above;  // lower -> upper
  std::map<int32_t, int32_t> below;  // upper -> lower
  for (const Constraint& k : constraints) {
    check_block_id(state, k.upper);
    check_block_id(state, k.lower);
    if (k.upper == k.lower)
      throw Error("contradictory constraints: block on itself");
    if (below.count(k.upper))
      throw Error("contradictory constraints: block " +
                  std::to_string(k.upper) + " placed on two blocks");
    if (above.count(k.lower))
      throw Error("contradictory constraints: two blocks placed on " +
                  std::to_string(k.lower));
    below[k.upper] = k.lower;
    above[k.lower] = k.upper;
  }
  // Chain bottoms are lowers that are never uppers; every edge must be
  // reachable from a bottom, otherwise the leftovers form a cycle.
  std::vector<int32_t> bottoms;
  for (const auto& [lower, upper] : above)
    if (!below.count(lower)) bottoms.push_back(lower);
  std::sort(bottoms.begin(), bottoms.end());
  size_t covered_edges = 0;
  std::vector<std::vector<int32_t>> chains;
  for (int32_t bottom : bottoms) {
    std::vector<int32_t> chain{bottom};
    int32_t cur = bottom;
    while (above.count(cur)) {
      cur = above[cur];
      chain.push_back(cur);
      ++covered_edges;
      if (chain.size() > above.size() + 1)
        throw Error("cyclic constraints");
    }
    chains.push_back(std::move(chain));
  }
  if (covered_edges != above.size()) throw Error("cyclic constraints");

  BlockState work = state;
  std::vector<PickPlace> moves;
  auto do_move = [&](PickPlace m) {
    apply_inplace(work, m);
    moves.push_back(m);
  };

  // Phase 1: clear every multi-block column so all blocks sit alone on the
  // floor; phase 2 can then build each tower without disturbing another.
  PP_CHECK_MSG(count_blocks(state) <= state.config.n_columns,
               "solver requires one floor slot per block");
  for (;;) {
    int src = -1;
    for (int c = 0; c < work.config.n_columns; ++c)
      if (work.column_height(c) > 1) {
        src = c;
        break;
      }
    if (src < 0) break;
    int dst = -1;
    for (int c = 0; c < work.config.n_columns; ++c)
      if (work.column_height(c) == 0) {
        dst = c;
        break;
      }
    PP_CHECK_MSG(dst >= 0, "no empty column available while unstacking");
    do_move({src, dst});
  }

  // Phase 2: build each tower bottom-up on its bottom block's column.
  for (const auto& chain : chains) {
    const int tower_col = work.block_cell(chain[0]).c;
    for (size_t i = 1; i < chain.size(); ++i) {
      const int src = work.block_cell(chain[i]).c;
      PP_CHECK(src != tower_col);
      do_move({src, tower_col});
    }
  }
  PP_CHECK(satisfied_fraction(work, constraints) == 1.0);
  return moves;
}

Tensor3f blocks_observation(const BlockState& state) {
  Tensor3f map(1, state.config.max_height, state.config.n_columns, 0.0f);
  for (int r = 0; r < state.config.max_height; ++r)
    for (int c = 0; c < state.config.n_columns; ++c) {
      const int32_t id = state.at(r, c);
      if (id != kNoBlock)
        map(0, r, c) =
            static_cast<float>(id + 1) / (state.config.n_blocks + 1);
    }
  return map;
}

std::vector<Constraint> sample_constraints(const BlockState& state,
                                           int n_constraints, Setting setting,
                                           Rng& rng) {
  PP_CHECK_MSG(is_blocks_setting(setting), "grid settings have no constraints");
  PP_CHECK_MSG(n_constraints >= 1, "need at least one constraint");
  const int m = state.config.n_blocks;

  // Partition the requested edges into chains (towers). Two towers need one
  // extra block per extra chain.
  std::vector<int> chain_edges;
  if (n_constraints + 2 <= m && n_constraints >= 2 && rng.next_below(2) == 0) {
    chain_edges = {n_constraints - 1, 1};
  } else {
    chain_edges = {n_constraints};
  }
  int needed = n_constraints + static_cast<int>(chain_edges.size());
  if (needed > m)
    throw Error("not enough blocks for " + std::to_string(n_constraints) +
                " constraints");

  // Candidate bottoms: kStack prefers blocks sitting alone on the floor,
  // kRearrange prefers current column tops (the blocks a new tower would be
  // grown on). Remaining blocks fill the chain uppers.
  std::vector<int32_t> pool(m);
  for (int i = 0; i < m; ++i) pool[i] = i;
  rng.shuffle(pool);
  auto preferred_bottom = [&](int32_t id) {
    const Cell cell = state.block_cell(id);
    if (setting == Setting::kStack)
      return cell.r == 0 && state.column_height(cell.c) == 1;
    return state.top_block(cell.c) == id;
  };
  std::stable_partition(pool.begin(), pool.end(), preferred_bottom);

  // Bottoms come from the front of the pool; uppers from the back, so a
  // preferred bottom is not consumed as an upper when it can serve as a base.
  std::vector<Constraint> constraints;
  size_t front = 0, back = pool.size();
  for (int edges : chain_edges) {
    int32_t prev = pool[front++];
    for (int e = 0; e < edges; ++e) {
      const int32_t upper = pool[--back];
      constraints.push_back({upper, prev});
      prev = upper;
    }
  }
  PP_CHECK(front <= back);
  return constraints;
}

std::string to_json(const BlockState& state) {
  nlohmann::json j;
  j["n_columns"] = state.config.n_columns;
  j["max_height"] = state.config.max_height;
  j["n_blocks"] = state.config.n_blocks;
  j["colors"] = state.config.colors;
  j["max_moves"] = state.config.max_moves;
  j["occupancy"] = state.occupancy;
  j["step_count"] = state.step_count;
  return j.dump();
}

BlockState block_state_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad BlockState JSON: ") + e.what());
  }
  BlockState state;
  state.config.n_columns = j.at("n_columns").get<int>();
  state.config.max_height = j.at("max_height").get<int>();
  state.config.n_blocks = j.at("n_blocks").get<int>();
  state.config.colors = j.at("colors").get<std::vector<std::string>>();
  state.config.max_moves = j.at("max_moves").get<int>();
  state.occupancy = j.at("occupancy").get<std::vector<int32_t>>();
  state.step_count = j.at("step_count").get<int>();
  PP_CHECK(state.occupancy.size() ==
           static_cast<size_t>(state.config.max_height) *
               state.config.n_columns);
  return state;
}

}  // namespace planpaint
