#include "planpaint/planner.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "planpaint/expert.hpp"
#include "planpaint/record_io.hpp"

namespace planpaint {

using json = nlohmann::json;

const char* to_string(PlanMode m) {
  switch (m) {
    case PlanMode::kOneShot: return "one_shot";
    case PlanMode::kNShot: return "n_shot";
    case PlanMode::kOnTheFly: return "on_the_fly";
  }
  throw Error("unknown plan mode");
}

PlanMode plan_mode_from_string(const std::string& s) {
  if (s == "one_shot") return PlanMode::kOneShot;
  if (s == "n_shot") return PlanMode::kNShot;
  if (s == "on_the_fly") return PlanMode::kOnTheFly;
  throw Error("unknown plan mode: " + s);
}

// ---------------------------------------------------------------------------
// Plan decoding.

namespace {

// Argmax over one plan row; ties break to the smallest pixel index.
Cell argmax_cell(const PlanSample& s, int row) {
  const int n = s.width * s.height;
  int best = 0;
  float best_v = s.plan(row, 0);
  for (int p = 1; p < n; ++p) {
    const float v = s.plan(row, p);
    if (v > best_v) {
      best_v = v;
      best = p;
    }
  }
  return Cell{best / s.width, best % s.width};
}

}  // namespace

std::vector<Cell> extract_states(const PlanSample& sample) {
  std::vector<Cell> cells;
  cells.reserve(sample.horizon);
  for (int t = 0; t < sample.horizon; ++t)
    cells.push_back(argmax_cell(sample, t));
  return cells;
}

Cell extract_goal(const PlanSample& sample) {
  PP_CHECK_MSG(sample.has_goal, "plan sample has no goal channel");
  return argmax_cell(sample, sample.horizon);
}

std::vector<Cell> binarize_plan(const PlanSample& sample) {
  const int n = sample.height * sample.width;
  std::vector<uint8_t> hit(n, 0);
  for (int t = 0; t < sample.horizon; ++t)
    for (int p = 0; p < n; ++p)
      if (sample.plan(t, p) > 0.0f) hit[p] = 1;
  std::vector<Cell> cells;
  for (int p = 0; p < n; ++p)
    if (hit[p]) cells.push_back(Cell{p / sample.width, p % sample.width});
  return cells;
}

std::vector<Action> inverse_dynamics(Cell current, Cell next,
                                     const std::vector<uint8_t>& obstacle_mask,
                                     int h, int w) {
  if (current == next) return {};
  const std::vector<Cell> path = astar(obstacle_mask, h, w, current, next);
  std::vector<Action> actions;
  actions.reserve(path.size() - 1);
  for (size_t i = 0; i + 1 < path.size(); ++i) {
    const int dr = path[i + 1].r - path[i].r;
    const int dc = path[i + 1].c - path[i].c;
    if (dr == -1 && dc == 0) actions.push_back(Action::kUp);
    else if (dr == 1 && dc == 0) actions.push_back(Action::kDown);
    else if (dr == 0 && dc == -1) actions.push_back(Action::kLeft);
    else if (dr == 0 && dc == 1) actions.push_back(Action::kRight);
    else throw Error("inverse_dynamics: path is not 4-connected");
  }
  return actions;
}

// ---------------------------------------------------------------------------
// Grid episode executor.

namespace {

struct GridRun {
  DiffusionModel& model;
  EnvState& state;
  const Instruction& instr;
  const PlannerConfig& pc;
  uint64_t seed;
  EpisodeLog& log;
  int env_steps = 0;

  std::vector<Cell> plan_once() {
    const Observation o = observe(state);
    const PlanSample s = model.inpaint_sample(
        obs_input_from_observation(o), instr.token_ids, pc.sampler,
        derive_seed(seed, "plan", static_cast<uint64_t>(log.n_plans())));
    std::vector<Cell> tau = extract_states(s);
    log.predicted_paths.push_back(tau);
    if (s.has_goal) log.predicted_goals.push_back(extract_goal(s));
    log.final_plan_cells = binarize_plan(s);
    if (pc.goal_fallback && s.has_goal) {
      const Cell cur = state.agent_pos;
      const bool degenerate =
          std::all_of(tau.begin(), tau.end(),
                      [&](const Cell& c) { return c == cur; });
      const Cell g = log.predicted_goals.back();
      if (degenerate && !(g == cur)) tau.assign(1, g);
    }
    return tau;
  }

  std::vector<uint8_t> known_mask() const {
    return obstacle_mask_from_tokens(observe(state).token_map);
  }

  bool budget_left() const { return env_steps < pc.max_env_steps; }

  // One environment step; returns true when the episode terminated.
  bool do_step(Action a) {
    const bool term = step_inplace(state, a);
    ++env_steps;
    log.visited_cells.push_back(state.agent_pos);
    return term;
  }

  // Degenerate or failed step: burns budget without moving.
  void penalty_step() {
    ++env_steps;
    log.visited_cells.push_back(state.agent_pos);
  }

  // Chains inverse dynamics across the extracted cells; stops at the first
  // unreachable waypoint.
  std::vector<Action> decode_actions(const std::vector<Cell>& tau) {
    std::vector<Action> actions;
    Cell cur = state.agent_pos;
    const std::vector<uint8_t> mask = known_mask();
    for (const Cell& c : tau) {
      if (c == cur) continue;
      try {
        const std::vector<Action> leg = inverse_dynamics(
            cur, c, mask, state.config.height, state.config.width);
        actions.insert(actions.end(), leg.begin(), leg.end());
        cur = c;
      } catch (const Error&) {
        break;
      }
    }
    return actions;
  }

  void run_one_shot() {
    const std::vector<Action> actions = decode_actions(plan_once());
    for (const Action a : actions) {
      if (!budget_left() || state.terminated) break;
      if (do_step(a)) break;
    }
  }

  void run_n_shot() {
    for (int i = 0;
         i < pc.n_replans && !state.terminated && budget_left() &&
         !is_success(state);
         ++i) {
      const std::vector<Action> actions = decode_actions(plan_once());
      const int remaining_plans = pc.n_replans - i;
      const int quota =
          i + 1 == pc.n_replans
              ? static_cast<int>(actions.size())
              : static_cast<int>((actions.size() + remaining_plans - 1) /
                                 remaining_plans);
      for (int j = 0; j < quota; ++j) {
        if (!budget_left() || state.terminated) break;
        if (do_step(actions[j])) break;
      }
    }
  }

  // Algorithm: plan, execute until the agent has moved steps_between_replans
  // cells (a blocked or degenerate step burns budget and forces a replan),
  // replan with the grown observation; with steps_between_replans == 1 the
  // sampler runs exactly env_steps + 1 times.
  void run_on_the_fly() {
    std::vector<Cell> tau = plan_once();
    while (!state.terminated && budget_left()) {
      const Cell cur = state.agent_pos;
      size_t t0 = tau.size();
      for (size_t t = 0; t < tau.size(); ++t)
        if (!(tau[t] == cur)) {
          t0 = t;
          break;
        }
      if (t0 == tau.size()) {
        penalty_step();
      } else {
        std::vector<Action> actions;
        try {
          actions = inverse_dynamics(cur, tau[t0], known_mask(),
                                     state.config.height, state.config.width);
        } catch (const Error&) {
        }
        if (actions.empty()) {
          penalty_step();
        } else {
          int moved = 0;
          for (const Action a : actions) {
            const Cell before = state.agent_pos;
            const bool term = do_step(a);
            if (!(state.agent_pos == before)) ++moved;
            const bool blocked = state.agent_pos == before;
            if (term || blocked || moved >= pc.steps_between_replans ||
                !budget_left())
              break;
          }
        }
      }
      tau = plan_once();
    }
  }
};

}  // namespace

EpisodeLog run_episode(DiffusionModel& model, const EnvState& start,
                       const Instruction& instruction, const PlannerConfig& pc,
                       uint64_t seed) {
  pc.validate();
  EnvState state = start;
  EpisodeLog log;
  log.setting = state.config.setting;
  log.seed = seed;
  log.visited_cells.push_back(state.agent_pos);

  GridRun run{model, state, instruction, pc, seed, log};
  if (!is_success(state) && !state.terminated) {
    switch (pc.mode) {
      case PlanMode::kOneShot: run.run_one_shot(); break;
      case PlanMode::kNShot: run.run_n_shot(); break;
      case PlanMode::kOnTheFly: run.run_on_the_fly(); break;
    }
  }
  log.env_steps = run.env_steps;
  log.final_pos = state.agent_pos;
  log.success = is_success(state);
  return log;
}

// ---------------------------------------------------------------------------
// Blocks episode executor. Macro moves take the role of env steps: every
// attempt (including illegal ones the environment would reject) burns one
// unit of budget.

namespace {

struct BlocksRun {
  DiffusionModel& model;
  BlockState& state;
  const std::vector<Constraint>& constraints;
  const Instruction& instr;
  const PlannerConfig& pc;
  uint64_t seed;
  EpisodeLog& log;
  int env_steps = 0;

  bool done() const {
    return satisfied_fraction(state, constraints) == 1.0;
  }
  bool budget_left() const { return env_steps < pc.max_env_steps; }

  std::vector<PickPlace> plan_once() {
    const PlanSample s = model.inpaint_sample(
        obs_input_from_blocks(state), instr.token_ids, pc.sampler,
        derive_seed(seed, "plan", static_cast<uint64_t>(log.n_plans())));
    const std::vector<Cell> tau = extract_states(s);
    log.predicted_paths.push_back(tau);
    if (s.has_goal) log.predicted_goals.push_back(extract_goal(s));
    log.final_plan_cells = binarize_plan(s);
    // Consecutive cell pairs are (pick, place) end-effector states; only the
    // column matters for the macro move.
    std::vector<PickPlace> moves;
    for (size_t t = 0; t + 1 < tau.size(); t += 2)
      moves.push_back(PickPlace{tau[t].c, tau[t + 1].c});
    return moves;
  }

  // Attempts one macro move; illegal moves are skipped but still count.
  void attempt(PickPlace m) {
    ++env_steps;
    if (m.source_col != m.dest_col && is_legal_move(state, m)) {
      const Cell pick{state.column_height(m.source_col) - 1, m.source_col};
      apply_inplace(state, m);
      const Cell place{state.column_height(m.dest_col) - 1, m.dest_col};
      log.visited_cells.push_back(pick);
      log.visited_cells.push_back(place);
    }
  }

  void run_one_shot() {
    const std::vector<PickPlace> moves = plan_once();
    for (const PickPlace m : moves) {
      if (!budget_left() || done()) break;
      attempt(m);
    }
  }

  void run_n_shot() {
    for (int i = 0; i < pc.n_replans && budget_left() && !done(); ++i) {
      const std::vector<PickPlace> moves = plan_once();
      const int remaining_plans = pc.n_replans - i;
      const int quota =
          i + 1 == pc.n_replans
              ? static_cast<int>(moves.size())
              : static_cast<int>((moves.size() + remaining_plans - 1) /
                                 remaining_plans);
      for (int j = 0; j < quota; ++j) {
        if (!budget_left() || done()) break;
        attempt(moves[j]);
      }
    }
  }

  void run_on_the_fly() {
    std::vector<PickPlace> moves = plan_once();
    while (!done() && budget_left()) {
      if (moves.empty()) {
        ++env_steps;  // degenerate plan burns budget
      } else {
        for (int j = 0; j < pc.steps_between_replans; ++j) {
          if (j >= static_cast<int>(moves.size()) || !budget_left() || done())
            break;
          attempt(moves[j]);
        }
      }
      moves = plan_once();
    }
  }
};

}  // namespace

EpisodeLog run_blocks_episode(DiffusionModel& model, const BlockState& start,
                              const std::vector<Constraint>& constraints,
                              const Instruction& instruction,
                              const PlannerConfig& pc, uint64_t seed) {
  pc.validate();
  BlockState state = start;
  EpisodeLog log;
  log.setting = instruction.setting;
  log.seed = seed;

  BlocksRun run{model, state, constraints, instruction, pc, seed, log};
  if (!run.done()) {
    switch (pc.mode) {
      case PlanMode::kOneShot: run.run_one_shot(); break;
      case PlanMode::kNShot: run.run_n_shot(); break;
      case PlanMode::kOnTheFly: run.run_on_the_fly(); break;
    }
  }
  log.env_steps = run.env_steps;
  log.satisfied_fraction = satisfied_fraction(state, constraints);
  log.success = log.satisfied_fraction == 1.0;
  log.final_pos = log.visited_cells.empty() ? Cell{0, 0}
                                            : log.visited_cells.back();
  return log;
}

// ---------------------------------------------------------------------------
// JSON-lines round-trip.

namespace {

json cell_to_json(const Cell& c) { return json::array({c.r, c.c}); }

Cell cell_from_json(const json& j) {
  return Cell{j.at(0).get<int>(), j.at(1).get<int>()};
}

json cells_to_json(const std::vector<Cell>& cells) {
  json arr = json::array();
  for (const Cell& c : cells) arr.push_back(cell_to_json(c));
  return arr;
}

std::vector<Cell> cells_from_json(const json& j) {
  std::vector<Cell> cells;
  for (const auto& item : j) cells.push_back(cell_from_json(item));
  return cells;
}

}  // namespace

std::string episode_log_to_json(const EpisodeLog& log) {
  json paths = json::array();
  for (const auto& p : log.predicted_paths) paths.push_back(cells_to_json(p));
  json j{{"setting", to_string(log.setting)},
         {"seed", log.seed},
         {"success", log.success},
         {"env_steps", log.env_steps},
         {"final_pos", cell_to_json(log.final_pos)},
         {"visited_cells", cells_to_json(log.visited_cells)},
         {"predicted_paths", paths},
         {"predicted_goals", cells_to_json(log.predicted_goals)},
         {"final_plan_cells", cells_to_json(log.final_plan_cells)}};
  if (log.satisfied_fraction >= 0.0)
    j["satisfied_fraction"] = log.satisfied_fraction;
  return j.dump();
}

EpisodeLog episode_log_from_json(const std::string& line) {
  const json j = json::parse(line);
  EpisodeLog log;
  log.setting = setting_from_string(j.at("setting").get<std::string>());
  log.seed = j.at("seed").get<uint64_t>();
  log.success = j.at("success").get<bool>();
  log.env_steps = j.at("env_steps").get<int>();
  log.final_pos = cell_from_json(j.at("final_pos"));
  log.visited_cells = cells_from_json(j.at("visited_cells"));
  for (const auto& p : j.at("predicted_paths"))
    log.predicted_paths.push_back(cells_from_json(p));
  log.predicted_goals = cells_from_json(j.at("predicted_goals"));
  log.final_plan_cells = cells_from_json(j.at("final_plan_cells"));
  if (j.contains("satisfied_fraction"))
    log.satisfied_fraction = j.at("satisfied_fraction").get<double>();
  return log;
}

void write_logs(const std::string& path, const std::vector<EpisodeLog>& logs) {
  std::string text;
  for (const EpisodeLog& log : logs) {
    text += episode_log_to_json(log);
    text += '\n';
  }
  write_text_file(path, text);
}

std::vector<EpisodeLog> read_logs(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<EpisodeLog> logs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    logs.push_back(episode_log_from_json(line));
  }
  return logs;
}

}  // namespace planpaint
