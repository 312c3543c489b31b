#include "planpaint/expert.hpp"

#include <algorithm>
#include <filesystem>
#include <queue>
#include <tuple>

#include "json.hpp"
#include "planpaint/record_io.hpp"
#include "planpaint/rng.hpp"

namespace planpaint {
namespace {

using nlohmann::json;

constexpr struct {
  int dr, dc;
  Action action;
} kMoves[4] = {{-1, 0, Action::kUp},
               {1, 0, Action::kDown},
               {0, -1, Action::kLeft},
               {0, 1, Action::kRight}};

Action action_between(Cell from, Cell to) {
  for (const auto& m : kMoves)
    if (from.r + m.dr == to.r && from.c + m.dc == to.c) return m.action;
  throw InvariantError("cells are not 4-adjacent");
}

PlanRasters rasterize_cells(const std::vector<Cell>& cells, int T, int h,
                            int w, int offset) {
  if (cells.empty()) throw Error("rasterize: empty cell sequence");
  if (T < 1) throw Error("rasterize: horizon must be >= 1");
  for (const Cell& c : cells)
    if (c.r < 0 || c.r >= h || c.c < 0 || c.c >= w)
      throw Error("rasterize: cell out of bounds");
  const int n = static_cast<int>(cells.size());
  PlanRasters out;
  out.traj = Tensor3f(T, h, w, -1.0f);
  for (int t = 0; t < T; ++t) {
    const Cell c = cells[std::min(t + offset, n - 1)];
    out.traj(t, c.r, c.c) = 1.0f;
  }
  out.goal = Tensor3f(1, h, w, -1.0f);
  out.goal(0, cells.back().r, cells.back().c) = 1.0f;
  return out;
}

json grid_config_to_json(const GridConfig& c) {
  return json{{"height", c.height},
              {"width", c.width},
              {"n_objects", c.n_objects},
              {"n_obstacles", c.n_obstacles},
              {"object_vocab_size", c.object_vocab_size},
              {"fov_radius", c.fov_radius},
              {"max_steps", c.max_steps},
              {"observability",
               c.observability == Observability::kFull ? "full" : "partial"},
              {"setting", to_string(c.setting)},
              {"ref_target_radius", c.ref_target_radius}};
}

GridConfig grid_config_from_json(const json& j) {
  GridConfig c;
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.n_objects = j.at("n_objects").get<int>();
  c.n_obstacles = j.at("n_obstacles").get<int>();
  c.object_vocab_size = j.at("object_vocab_size").get<int>();
  c.fov_radius = j.at("fov_radius").get<int>();
  c.max_steps = j.at("max_steps").get<int>();
  c.observability = j.at("observability").get<std::string>() == "full"
                        ? Observability::kFull
                        : Observability::kPartial;
  c.setting = setting_from_string(j.at("setting").get<std::string>());
  c.ref_target_radius = j.at("ref_target_radius").get<int>();
  return c;
}

json block_config_to_json(const BlockConfig& c) {
  return json{{"n_columns", c.n_columns},
              {"max_height", c.max_height},
              {"n_blocks", c.n_blocks},
              {"colors", c.colors},
              {"max_moves", c.max_moves}};
}

BlockConfig block_config_from_json(const json& j) {
  BlockConfig c;
  c.n_columns = j.at("n_columns").get<int>();
  c.max_height = j.at("max_height").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.colors = j.at("colors").get<std::vector<std::string>>();
  c.max_moves = j.at("max_moves").get<int>();
  return c;
}

std::string hex_digest(const std::string& text) {
  uint64_t h = 0x243f6a8885a308d3ULL;
  for (char ch : text) {
    h ^= static_cast<uint8_t>(ch);
    h = splitmix64(h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

ArrayData cells_array(const std::string& name, const std::vector<Cell>& cells) {
  std::vector<int32_t> flat;
  flat.reserve(cells.size() * 2);
  for (const Cell& c : cells) {
    flat.push_back(c.r);
    flat.push_back(c.c);
  }
  return ArrayData::make_i32(name, {static_cast<int64_t>(cells.size()), 2},
                             std::move(flat));
}

std::vector<Cell> cells_from_array(const ArrayData& a) {
  PP_CHECK_MSG(a.shape.size() == 2 && a.shape[1] == 2,
               "expected an (n,2) cell array");
  std::vector<Cell> cells(a.shape[0]);
  for (size_t i = 0; i < cells.size(); ++i)
    cells[i] = {a.i32[2 * i], a.i32[2 * i + 1]};
  return cells;
}

ArrayData seed_array(uint64_t seed) {
  return ArrayData::make_i32(
      "seed", {2},
      {static_cast<int32_t>(seed & 0xffffffffULL),
       static_cast<int32_t>(seed >> 32)});
}

uint64_t seed_from_array(const ArrayData& a) {
  PP_CHECK(a.i32.size() == 2);
  return (static_cast<uint64_t>(static_cast<uint32_t>(a.i32[1])) << 32) |
         static_cast<uint32_t>(a.i32[0]);
}

// Rebuilds a stored instruction; target/reference ids are restored by the
// caller where the setting has them.
Instruction instruction_from_ids(const std::vector<int32_t>& ids,
                                 Setting setting, const Vocabulary& vocab) {
  Instruction ins;
  ins.token_ids = ids;
  ins.text = detokenize(ids, vocab);
  ins.setting = setting;
  return ins;
}

void validate_episode(const Episode& e, const DatasetManifest& m) {
  PP_CHECK_MSG(!e.path_cells.empty(), "episode has an empty expert plan");
  PP_CHECK_MSG(static_cast<int>(e.instruction.token_ids.size()) == m.text_len,
               "instruction length disagrees with manifest");
  const PlanRasters rasters = e.rasters(m.horizon);
  PP_CHECK(rasters.traj.c == m.horizon && rasters.traj.h == m.height &&
           rasters.traj.w == m.width);
  for (int t = 0; t < rasters.traj.c; ++t) {
    int positives = 0;
    for (int i = 0; i < rasters.traj.plane(); ++i)
      positives += rasters.traj.data[t * rasters.traj.plane() + i] > 0.0f;
    PP_CHECK_MSG(positives == 1, "trajectory channel must be one-hot");
  }
  int goal_positives = 0;
  for (float v : rasters.goal.data) goal_positives += v > 0.0f;
  PP_CHECK_MSG(goal_positives == 1, "goal raster must be one-hot");
  if (!e.is_blocks()) {
    for (size_t i = 1; i < e.path_cells.size(); ++i) {
      const Cell a = e.path_cells[i - 1], b = e.path_cells[i];
      const int dist = std::abs(a.r - b.r) + std::abs(a.c - b.c);
      PP_CHECK_MSG(dist <= 1, "grid plan cells must be 4-connected or repeat");
    }
  }
}

}  // namespace

std::vector<uint8_t> obstacle_mask_from_tokens(
    const std::vector<int32_t>& token_map) {
  std::vector<uint8_t> mask(token_map.size());
  for (size_t i = 0; i < token_map.size(); ++i)
    mask[i] = token_map[i] == kTokenObstacle;
  return mask;
}

std::vector<Cell> astar(const std::vector<uint8_t>& obstacle_mask, int h,
                        int w, Cell start, Cell goal) {
  PP_CHECK(obstacle_mask.size() == static_cast<size_t>(h) * w);
  auto in_bounds = [&](Cell c) {
    return c.r >= 0 && c.r < h && c.c >= 0 && c.c < w;
  };
  if (!in_bounds(start) || !in_bounds(goal))
    throw Error("astar: endpoint out of bounds");
  if (obstacle_mask[start.r * w + start.c] ||
      obstacle_mask[goal.r * w + goal.c])
    throw Error("astar: endpoint on an obstacle");

  auto heuristic = [&](int idx) {
    const int r = idx / w, c = idx % w;
    return std::abs(r - goal.r) + std::abs(c - goal.c);
  };

  const int n = h * w;
  const int start_idx = start.r * w + start.c;
  const int goal_idx = goal.r * w + goal.c;
  std::vector<int> g(n, INT32_MAX);
  std::vector<int> parent(n, -1);
  std::vector<uint8_t> closed(n, 0);

  // Min-heap ordered by (f, h, insertion counter): optimal first, ties to the
  // node closest to the goal, then FIFO.
  using Entry = std::tuple<int, int, int64_t, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
  int64_t counter = 0;
  g[start_idx] = 0;
  open.emplace(heuristic(start_idx), heuristic(start_idx), counter++,
               start_idx);

  while (!open.empty()) {
    const auto [f, hv, cnt, idx] = open.top();
    open.pop();
    if (closed[idx]) continue;
    closed[idx] = 1;
    if (idx == goal_idx) {
      std::vector<Cell> path;
      for (int at = idx; at != -1; at = parent[at])
        path.push_back({at / w, at % w});
      std::reverse(path.begin(), path.end());
      return path;
    }
    const int r = idx / w, c = idx % w;
    for (const auto& m : kMoves) {
      const int nr = r + m.dr, nc = c + m.dc;
      if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
      const int nidx = nr * w + nc;
      if (obstacle_mask[nidx] || closed[nidx]) continue;
      const int ng = g[idx] + 1;
      if (ng < g[nidx]) {
        g[nidx] = ng;
        parent[nidx] = idx;
        const int nh = heuristic(nidx);
        open.emplace(ng + nh, nh, counter++, nidx);
      }
    }
  }
  throw Error("astar: unreachable goal");
}

PlanRasters rasterize_plan(const std::vector<Cell>& path, int T, int h,
                           int w) {
  return rasterize_cells(path, T, h, w, /*offset=*/1);
}

PlanRasters rasterize_ee_cells(const std::vector<Cell>& cells, int T, int h,
                               int w) {
  return rasterize_cells(cells, T, h, w, /*offset=*/0);
}

PlanRasters Episode::rasters(int T) const {
  if (is_blocks())
    return rasterize_ee_cells(path_cells, T, block_state.config.max_height,
                              block_state.config.n_columns);
  return rasterize_plan(path_cells, T, state.config.height,
                        state.config.width);
}

std::vector<Cell> expert_path(const EnvState& state) {
  const std::vector<uint8_t> mask = obstacle_mask_from_tokens(state.grid);
  const int h = state.config.height, w = state.config.width;
  const Cell target = state.target_cell();
  if (state.config.setting == Setting::kPMO2G) {
    const Cell ref = state.find_object(state.reference_id);
    std::vector<Cell> path = astar(mask, h, w, state.agent_pos, ref);
    const std::vector<Cell> tail = astar(mask, h, w, ref, target);
    path.insert(path.end(), tail.begin() + 1, tail.end());
    return path;
  }
  return astar(mask, h, w, state.agent_pos, target);
}

Episode make_episode(const GridConfig& config, Setting setting, uint64_t seed,
                     const EpisodeOptions& options) {
  GridConfig cfg = config;
  cfg.setting = setting;
  EnvState state = reset(cfg, seed);
  Rng rng(derive_seed(seed, "episode"));
  Episode episode;
  episode.setting = setting;
  episode.seed = seed;
  episode.instruction = generate_instruction(state, setting, rng,
                                             default_vocabulary(),
                                             options.language);

  const std::vector<Cell> path = expert_path(state);
  size_t progress = 0;
  if (options.progress_sampling && path.size() >= 2)
    progress = rng.next_below(path.size() - 1);
  for (size_t i = 1; i <= progress; ++i) {
    step_inplace(state, action_between(path[i - 1], path[i]));
    if (state.terminated) {  // the route crossed the target cell early
      progress = i;
      break;
    }
  }
  PP_CHECK(state.agent_pos == path[progress]);
  episode.state = std::move(state);
  episode.path_cells.assign(path.begin() + progress, path.end());
  episode.goal_cell = path.back();
  return episode;
}

Episode make_blocks_episode(const BlockConfig& config, Setting setting,
                            uint64_t seed, const EpisodeOptions& options) {
  PP_CHECK_MSG(is_blocks_setting(setting), "expected STACK or REARRANGE");
  BlockState state = reset_blocks(config, seed);
  Rng rng(derive_seed(seed, "episode"));

  if (setting == Setting::kRearrange) {
    // Stack a few blocks so the expert has to take towers apart.
    const int scramble_moves = 1 + static_cast<int>(rng.next_below(3));
    for (int i = 0; i < scramble_moves; ++i) {
      std::vector<PickPlace> candidates;
      for (int src = 0; src < config.n_columns; ++src) {
        if (state.column_height(src) == 0) continue;
        for (int dst = 0; dst < config.n_columns; ++dst)
          if (dst != src && state.column_height(dst) >= 1 &&
              state.column_height(dst) < config.max_height)
            candidates.push_back({src, dst});
      }
      if (candidates.empty()) break;
      apply_inplace(state, candidates[rng.next_below(candidates.size())]);
    }
    state.step_count = 0;
  }

  PP_CHECK(options.n_constraints_min >= 1 &&
           options.n_constraints_max >= options.n_constraints_min);
  std::vector<Constraint> constraints;
  for (int attempt = 0; attempt < 50; ++attempt) {
    const int n = options.n_constraints_min +
                  static_cast<int>(rng.next_below(
                      options.n_constraints_max - options.n_constraints_min + 1));
    constraints = sample_constraints(state, n, setting, rng);
    if (satisfied_fraction(state, constraints) < 1.0) break;
  }

  Episode episode;
  episode.setting = setting;
  episode.seed = seed;
  episode.constraints = constraints;
  episode.instruction = generate_blocks_instruction(
      state, constraints, setting, rng, default_vocabulary(), options.language);

  std::vector<PickPlace> moves = solve_constraints(state, constraints);
  std::vector<Cell> cells;
  BlockState work = state;
  for (const PickPlace& mv : moves) {
    cells.push_back({work.column_height(mv.source_col) - 1, mv.source_col});
    cells.push_back({work.column_height(mv.dest_col), mv.dest_col});
    apply_inplace(work, mv);
  }

  size_t progress_moves = 0;
  if (options.progress_sampling && !moves.empty())
    progress_moves = rng.next_below(moves.size());
  for (size_t i = 0; i < progress_moves; ++i) apply_inplace(state, moves[i]);
  state.step_count = 0;

  episode.block_state = std::move(state);
  if (cells.empty()) {
    // Constraints were already satisfied at reset (possible only after the
    // resampling loop exhausts its attempts): emit a degenerate stay plan.
    cells.push_back(episode.block_state.block_cell(constraints[0].upper));
  }
  episode.path_cells.assign(cells.begin() + 2 * progress_moves, cells.end());
  episode.goal_cell = cells.back();
  return episode;
}

void write_dataset(const Dataset& dataset, const std::string& dir) {
  const DatasetManifest& m = dataset.manifest;
  PP_CHECK_MSG(m.n_episodes == static_cast<int>(dataset.episodes.size()),
               "manifest episode count mismatch");
  std::filesystem::create_directories(dir);

  json jm;
  jm["format_version"] = m.format_version;
  jm["n_episodes"] = m.n_episodes;
  jm["height"] = m.height;
  jm["width"] = m.width;
  jm["horizon"] = m.horizon;
  jm["text_len"] = m.text_len;
  jm["setting"] = to_string(m.setting);
  jm["vocab"] = json::parse(m.vocab.to_json());
  jm["grid_config"] =
      m.grid_config ? grid_config_to_json(*m.grid_config) : json(nullptr);
  jm["block_config"] =
      m.block_config ? block_config_to_json(*m.block_config) : json(nullptr);
  jm["config_digest"] = m.config_digest;
  write_text_file(dir + "/manifest.json", jm.dump(2) + "\n");

  RecordWriter writer(dir + "/episodes.bin");
  for (const Episode& e : dataset.episodes) {
    Record rec;
    rec.arrays.push_back(ArrayData::make_i32(
        "setting", {1}, {static_cast<int32_t>(e.setting)}));
    rec.arrays.push_back(seed_array(e.seed));
    rec.arrays.push_back(ArrayData::make_i32(
        "instr_ids", {static_cast<int64_t>(e.instruction.token_ids.size())},
        e.instruction.token_ids));
    rec.arrays.push_back(cells_array("path", e.path_cells));
    rec.arrays.push_back(
        ArrayData::make_i32("goal", {2}, {e.goal_cell.r, e.goal_cell.c}));
    if (e.is_blocks()) {
      rec.arrays.push_back(ArrayData::make_i32(
          "occupancy",
          {e.block_state.config.max_height, e.block_state.config.n_columns},
          e.block_state.occupancy));
      std::vector<int32_t> flat;
      for (const Constraint& k : e.constraints) {
        flat.push_back(k.upper);
        flat.push_back(k.lower);
      }
      rec.arrays.push_back(ArrayData::make_i32(
          "constraints", {static_cast<int64_t>(e.constraints.size()), 2},
          std::move(flat)));
    } else {
      rec.arrays.push_back(ArrayData::make_i32(
          "grid", {e.state.config.height, e.state.config.width},
          e.state.grid));
      rec.arrays.push_back(ArrayData::make_i32(
          "agent", {2}, {e.state.agent_pos.r, e.state.agent_pos.c}));
      std::vector<int32_t> revealed(e.state.revealed.begin(),
                                    e.state.revealed.end());
      rec.arrays.push_back(ArrayData::make_i32(
          "revealed", {e.state.config.height, e.state.config.width},
          std::move(revealed)));
      rec.arrays.push_back(ArrayData::make_i32(
          "ids", {3},
          {e.state.target_id, e.state.reference_id, e.state.step_count}));
    }
    writer.write(rec);
  }
  writer.close();
}

Dataset read_dataset(const std::string& dir) {
  json jm;
  try {
    jm = json::parse(read_text_file(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    throw Error("bad dataset manifest: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.format_version = jm.at("format_version").get<int>();
  if (m.format_version != 1)
    throw Error("dataset format_version " + std::to_string(m.format_version) +
                " is not supported (expected 1)");
  m.n_episodes = jm.at("n_episodes").get<int>();
  m.height = jm.at("height").get<int>();
  m.width = jm.at("width").get<int>();
  m.horizon = jm.at("horizon").get<int>();
  m.text_len = jm.at("text_len").get<int>();
  m.setting = setting_from_string(jm.at("setting").get<std::string>());
  m.vocab = Vocabulary::from_json(jm.at("vocab").dump());
  if (!jm.at("grid_config").is_null())
    m.grid_config = grid_config_from_json(jm.at("grid_config"));
  if (!jm.at("block_config").is_null())
    m.block_config = block_config_from_json(jm.at("block_config"));
  m.config_digest = jm.at("config_digest").get<std::string>();

  Dataset dataset;
  dataset.manifest = m;
  RecordReader reader(dir + "/episodes.bin");
  while (auto rec = reader.next()) {
    Episode e;
    e.setting = static_cast<Setting>(rec->get("setting").i32.at(0));
    e.seed = seed_from_array(rec->get("seed"));
    const ArrayData& instr = rec->get("instr_ids");
    if (static_cast<int>(instr.i32.size()) != m.text_len)
      throw Error("dataset episode instruction length disagrees with manifest");
    e.path_cells = cells_from_array(rec->get("path"));
    e.goal_cell = {rec->get("goal").i32.at(0), rec->get("goal").i32.at(1)};
    if (is_blocks_setting(e.setting)) {
      if (!m.block_config)
        throw Error("blocks episode in a dataset without block_config");
      e.block_state.config = *m.block_config;
      const ArrayData& occ = rec->get("occupancy");
      if (occ.shape != std::vector<int64_t>{m.height, m.width})
        throw Error("dataset occupancy shape disagrees with manifest");
      e.block_state.occupancy = occ.i32;
      const ArrayData& ks = rec->get("constraints");
      for (int64_t i = 0; i < ks.shape[0]; ++i)
        e.constraints.push_back({ks.i32[2 * i], ks.i32[2 * i + 1]});
      e.instruction = instruction_from_ids(instr.i32, e.setting, m.vocab);
    } else {
      if (!m.grid_config)
        throw Error("grid episode in a dataset without grid_config");
      e.state.config = *m.grid_config;
      e.state.config.setting = e.setting;
      const ArrayData& grid = rec->get("grid");
      if (grid.shape != std::vector<int64_t>{m.height, m.width})
        throw Error("dataset grid shape disagrees with manifest");
      e.state.grid = grid.i32;
      e.state.agent_pos = {rec->get("agent").i32.at(0),
                           rec->get("agent").i32.at(1)};
      const ArrayData& revealed = rec->get("revealed");
      e.state.revealed.assign(revealed.i32.begin(), revealed.i32.end());
      const ArrayData& ids = rec->get("ids");
      e.state.target_id = ids.i32.at(0);
      e.state.reference_id = ids.i32.at(1);
      e.state.step_count = ids.i32.at(2);
      e.state.seed = e.seed;
      e.state.terminated = false;
      e.instruction = instruction_from_ids(instr.i32, e.setting, m.vocab);
      e.instruction.target_id = e.state.target_id;
      e.instruction.reference_id = e.state.reference_id;
    }
    dataset.episodes.push_back(std::move(e));
  }
  if (static_cast<int>(dataset.episodes.size()) != m.n_episodes)
    throw Error("dataset episode count disagrees with manifest");
  return dataset;
}

Dataset generate_dataset(const GridConfig& config, Setting setting,
                         int n_episodes, uint64_t seed_base,
                         const EpisodeOptions& options) {
  PP_CHECK(n_episodes >= 1);
  GridConfig cfg = config;
  cfg.setting = setting;
  cfg.validate();
  Dataset d;
  d.manifest.n_episodes = n_episodes;
  d.manifest.height = cfg.height;
  d.manifest.width = cfg.width;
  d.manifest.horizon = options.horizon;
  d.manifest.text_len = kGridTextLen;
  d.manifest.setting = setting;
  d.manifest.vocab = default_vocabulary();
  d.manifest.grid_config = cfg;
  d.manifest.config_digest = hex_digest(grid_config_to_json(cfg).dump());
  for (int i = 0; i < n_episodes; ++i) {
    Episode e = make_episode(cfg, setting, seed_base + i, options);
    validate_episode(e, d.manifest);
    d.episodes.push_back(std::move(e));
  }
  return d;
}

Dataset generate_blocks_dataset(const BlockConfig& config, Setting setting,
                                int n_episodes, uint64_t seed_base,
                                const EpisodeOptions& options) {
  PP_CHECK(n_episodes >= 1);
  config.validate();
  Dataset d;
  d.manifest.n_episodes = n_episodes;
  d.manifest.height = config.max_height;
  d.manifest.width = config.n_columns;
  d.manifest.horizon = options.horizon;
  d.manifest.text_len = kBlocksTextLen;
  d.manifest.setting = setting;
  d.manifest.vocab = default_vocabulary();
  d.manifest.block_config = config;
  d.manifest.config_digest = hex_digest(block_config_to_json(config).dump());
  for (int i = 0; i < n_episodes; ++i) {
    Episode e = make_blocks_episode(config, setting, seed_base + i, options);
    validate_episode(e, d.manifest);
    d.episodes.push_back(std::move(e));
  }
  return d;
}

}  // namespace planpaint
