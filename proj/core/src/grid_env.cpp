#include "planpaint/grid_env.hpp"

#include <algorithm>
#include <deque>

#include "json.hpp"
#include "planpaint/rng.hpp"

namespace planpaint {
namespace {

constexpr int kResetAttempts = 1000;

struct Delta {
  int dr, dc;
};
// Indexed by Action value; order matters for determinism contracts elsewhere.
constexpr Delta kDeltas[kNumActions] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

void reveal_around(EnvState& state, Cell pos) {
  const int radius = state.config.fov_radius;
  const int r0 = std::max(0, pos.r - radius);
  const int r1 = std::min(state.config.height - 1, pos.r + radius);
  const int c0 = std::max(0, pos.c - radius);
  const int c1 = std::min(state.config.width - 1, pos.c + radius);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      state.revealed[r * state.config.width + c] = 1;
}

// Breadth-first reachability over non-obstacle cells; object cells are
// enterable. Used only to validate layouts at reset time.
bool reachable(const std::vector<int32_t>& grid, int h, int w, Cell from,
               Cell to) {
  if (from == to) return true;
  std::vector<uint8_t> seen(static_cast<size_t>(h) * w, 0);
  std::deque<Cell> queue{from};
  seen[from.r * w + from.c] = 1;
  while (!queue.empty()) {
    const Cell cur = queue.front();
    queue.pop_front();
    for (const Delta& d : kDeltas) {
      const int r = cur.r + d.dr, c = cur.c + d.dc;
      if (r < 0 || r >= h || c < 0 || c >= w) continue;
      if (seen[r * w + c] || grid[r * w + c] == kTokenObstacle) continue;
      if (r == to.r && c == to.c) return true;
      seen[r * w + c] = 1;
      queue.push_back({r, c});
    }
  }
  return false;
}

// Removes and returns a uniformly chosen entry of `cells` (swap-remove keeps
// the draw O(1) and deterministic).
Cell take_uniform(std::vector<Cell>& cells, Rng& rng) {
  const size_t i = rng.next_below(cells.size());
  const Cell picked = cells[i];
  cells[i] = cells.back();
  cells.pop_back();
  return picked;
}

// Removes and returns a uniform cell among those satisfying `pred`; returns
// false when no candidate exists.
template <typename Pred>
bool take_uniform_if(std::vector<Cell>& cells, Rng& rng, Pred pred,
                     Cell& out) {
  std::vector<size_t> candidates;
  for (size_t i = 0; i < cells.size(); ++i)
    if (pred(cells[i])) candidates.push_back(i);
  if (candidates.empty()) return false;
  const size_t i = candidates[rng.next_below(candidates.size())];
  out = cells[i];
  cells[i] = cells.back();
  cells.pop_back();
  return true;
}

}  // namespace

const char* to_string(Action a) {
  switch (a) {
    case Action::kUp: return "up";
    case Action::kDown: return "down";
    case Action::kLeft: return "left";
    case Action::kRight: return "right";
  }
  return "?";
}

void GridConfig::validate() const {
  PP_CHECK_MSG(height >= 4 && width >= 4, "grid must be at least 4x4");
  PP_CHECK_MSG(n_objects >= 1 && n_objects <= 8, "n_objects must be in 1..8");
  PP_CHECK_MSG(n_obstacles >= 0 && n_obstacles <= 10,
               "n_obstacles must be in 0..10");
  PP_CHECK_MSG(n_objects + n_obstacles + 1 <= height * width,
               "layout cannot fit objects, obstacles and the agent");
  PP_CHECK_MSG(object_vocab_size >= n_objects && object_vocab_size <= 8,
               "object_vocab_size must cover n_objects and at most 8 names");
  PP_CHECK_MSG(fov_radius >= 1, "fov_radius must be >= 1");
  PP_CHECK_MSG(max_steps >= 1, "max_steps must be >= 1");
  PP_CHECK_MSG(ref_target_radius >= 1, "ref_target_radius must be >= 1");
  if (setting == Setting::kPMO2G) {
    PP_CHECK_MSG(n_objects >= 2, "P-MO2G needs a reference and a target");
    PP_CHECK_MSG(observability == Observability::kPartial,
                 "P-MO2G is a partial-observability setting");
  }
  PP_CHECK_MSG(!is_blocks_setting(setting),
               "blocks settings use BlockConfig, not GridConfig");
}

Cell EnvState::find_object(int32_t object_id) const {
  for (int r = 0; r < config.height; ++r)
    for (int c = 0; c < config.width; ++c)
      if (cell(r, c) == object_id) return {r, c};
  throw InvariantError("object id " + std::to_string(object_id) +
                       " not on grid");
}

EnvState reset(const GridConfig& config, uint64_t seed) {
  config.validate();
  const int h = config.height, w = config.width;

  for (int attempt = 0; attempt < kResetAttempts; ++attempt) {
    Rng rng(derive_seed(seed, "grid_reset", static_cast<uint64_t>(attempt)));

    // Which object identities appear this episode (uniform without
    // replacement from the nameable vocabulary).
    std::vector<int32_t> ids(config.object_vocab_size);
    for (int i = 0; i < config.object_vocab_size; ++i)
      ids[i] = kFirstObjectId + i;
    rng.shuffle(ids);
    ids.resize(config.n_objects);

    std::vector<Cell> free_cells;
    free_cells.reserve(static_cast<size_t>(h) * w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) free_cells.push_back({r, c});

    const Cell agent = take_uniform(free_cells, rng);

    std::vector<std::pair<int32_t, Cell>> placements;
    int32_t target_id = -1, reference_id = -1;
    bool ok = true;
    if (config.setting == Setting::kPMO2G) {
      // Reference inside the initial FoV, hidden target outside it but within
      // ref_target_radius of the reference so the landmark localizes it.
      Cell ref_cell, tgt_cell;
      ok = take_uniform_if(
          free_cells, rng,
          [&](Cell c) { return chebyshev(agent, c) <= config.fov_radius; },
          ref_cell);
      ok = ok && take_uniform_if(
                     free_cells, rng,
                     [&](Cell c) {
                       return chebyshev(agent, c) > config.fov_radius &&
                              chebyshev(ref_cell, c) <= config.ref_target_radius;
                     },
                     tgt_cell);
      if (ok) {
        reference_id = ids[0];
        target_id = ids[1];
        placements.emplace_back(reference_id, ref_cell);
        placements.emplace_back(target_id, tgt_cell);
        for (size_t i = 2; i < ids.size(); ++i)
          placements.emplace_back(ids[i], take_uniform(free_cells, rng));
      }
    } else {
      for (int32_t id : ids)
        placements.emplace_back(id, take_uniform(free_cells, rng));
      target_id = ids[rng.next_below(ids.size())];
    }
    if (!ok) continue;

    std::vector<Cell> obstacle_cells;
    obstacle_cells.reserve(config.n_obstacles);
    for (int i = 0; i < config.n_obstacles; ++i)
      obstacle_cells.push_back(take_uniform(free_cells, rng));

    std::vector<int32_t> grid(static_cast<size_t>(h) * w, kTokenEmpty);
    for (const auto& [id, cell] : placements) grid[cell.r * w + cell.c] = id;
    for (Cell c : obstacle_cells) grid[c.r * w + c.c] = kTokenObstacle;

    EnvState state;
    state.config = config;
    state.grid = std::move(grid);
    state.agent_pos = agent;
    state.target_id = target_id;
    state.reference_id = reference_id;
    state.step_count = 0;
    state.seed = seed;
    state.terminated = false;
    state.revealed.assign(static_cast<size_t>(h) * w, 0);
    if (config.observability == Observability::kFull) {
      std::fill(state.revealed.begin(), state.revealed.end(), uint8_t{1});
    } else {
      reveal_around(state, agent);
    }

    const Cell tgt = state.target_cell();
    bool valid = reachable(state.grid, h, w, agent, tgt);
    if (valid && config.setting == Setting::kPMO2G) {
      const Cell ref = state.find_object(reference_id);
      valid = reachable(state.grid, h, w, agent, ref) &&
              reachable(state.grid, h, w, ref, tgt);
    }
    if (valid) return state;
  }
  throw Error("grid reset: no feasible layout after " +
              std::to_string(kResetAttempts) +
              " attempts (over-constrained config)");
}

bool step_inplace(EnvState& state, Action action) {
  if (state.terminated)
    throw Error("step called on a terminated environment");
  const Delta d = kDeltas[static_cast<int>(action)];
  const int nr = state.agent_pos.r + d.dr;
  const int nc = state.agent_pos.c + d.dc;
  if (state.in_bounds(nr, nc) && state.cell(nr, nc) != kTokenObstacle)
    state.agent_pos = {nr, nc};
  state.step_count += 1;
  if (state.config.observability == Observability::kPartial)
    reveal_around(state, state.agent_pos);
  state.terminated =
      is_success(state) || state.step_count >= state.config.max_steps;
  return state.terminated;
}

std::pair<EnvState, bool> step(const EnvState& state, Action action) {
  EnvState next = state;
  const bool terminated = step_inplace(next, action);
  return {std::move(next), terminated};
}

Observation observe(const EnvState& state) {
  Observation obs;
  obs.h = state.config.height;
  obs.w = state.config.width;
  const size_t n = state.grid.size();
  obs.token_map.resize(n);
  obs.agent_map.assign(n, 0);
  obs.revealed = state.revealed;
  for (size_t i = 0; i < n; ++i)
    obs.token_map[i] = state.revealed[i] ? state.grid[i] : kTokenUnknown;
  obs.agent_map[state.agent_pos.r * obs.w + state.agent_pos.c] = 1;
  return obs;
}

bool is_success(const EnvState& state) {
  return state.agent_pos == state.target_cell();
}

std::string to_json(const EnvState& state) {
  nlohmann::json j;
  j["height"] = state.config.height;
  j["width"] = state.config.width;
  j["n_objects"] = state.config.n_objects;
  j["n_obstacles"] = state.config.n_obstacles;
  j["object_vocab_size"] = state.config.object_vocab_size;
  j["fov_radius"] = state.config.fov_radius;
  j["max_steps"] = state.config.max_steps;
  j["observability"] =
      state.config.observability == Observability::kFull ? "full" : "partial";
  j["setting"] = to_string(state.config.setting);
  j["ref_target_radius"] = state.config.ref_target_radius;
  j["grid"] = state.grid;
  j["agent_pos"] = {state.agent_pos.r, state.agent_pos.c};
  j["target_id"] = state.target_id;
  j["reference_id"] = state.reference_id;
  j["step_count"] = state.step_count;
  j["revealed"] = state.revealed;
  j["seed"] = state.seed;
  j["terminated"] = state.terminated;
  return j.dump();
}

EnvState env_state_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad EnvState JSON: ") + e.what());
  }
  EnvState state;
  state.config.height = j.at("height").get<int>();
  state.config.width = j.at("width").get<int>();
  state.config.n_objects = j.at("n_objects").get<int>();
  state.config.n_obstacles = j.at("n_obstacles").get<int>();
  state.config.object_vocab_size = j.at("object_vocab_size").get<int>();
  state.config.fov_radius = j.at("fov_radius").get<int>();
  state.config.max_steps = j.at("max_steps").get<int>();
  state.config.observability = j.at("observability").get<std::string>() == "full"
                                   ? Observability::kFull
                                   : Observability::kPartial;
  state.config.setting = setting_from_string(j.at("setting").get<std::string>());
  state.config.ref_target_radius = j.at("ref_target_radius").get<int>();
  state.grid = j.at("grid").get<std::vector<int32_t>>();
  state.agent_pos = {j.at("agent_pos")[0].get<int>(),
                     j.at("agent_pos")[1].get<int>()};
  state.target_id = j.at("target_id").get<int32_t>();
  state.reference_id = j.at("reference_id").get<int32_t>();
  state.step_count = j.at("step_count").get<int>();
  state.revealed = j.at("revealed").get<std::vector<uint8_t>>();
  state.seed = j.at("seed").get<uint64_t>();
  state.terminated = j.at("terminated").get<bool>();
  PP_CHECK(state.grid.size() ==
           static_cast<size_t>(state.config.height) * state.config.width);
  PP_CHECK(state.revealed.size() == state.grid.size());
  return state;
}

}  // namespace planpaint
