#pragma once

// Plan decoding and the replanning executor: extracts cell sequences from
// sampled plan tensors, converts them to actions with an A*-based inverse
// dynamics model, and runs episodes in one_shot / n_shot / on_the_fly modes.

#include <cstdint>
#include <string>
#include <vector>

#include "planpaint/diffusion.hpp"

namespace planpaint {

enum class PlanMode { kOneShot, kNShot, kOnTheFly };

const char* to_string(PlanMode m);
PlanMode plan_mode_from_string(const std::string& s);

struct PlannerConfig {
  PlanMode mode = PlanMode::kOnTheFly;
  int n_replans = 2;              // n_shot only
  int steps_between_replans = 1;  // on_the_fly only
  int max_env_steps = 100;
  SampleConfig sampler;
  // When a sampled trajectory is fully degenerate (every cell equals the
  // current position), optionally route one step toward the predicted goal.
  bool goal_fallback = false;

  void validate() const {
    PP_CHECK(n_replans >= 1 && steps_between_replans >= 1 &&
             max_env_steps >= 0);
  }
};

struct EpisodeLog {
  Setting setting = Setting::kMO1G;
  uint64_t seed = 0;
  bool success = false;
  int env_steps = 0;
  Cell final_pos;
  // Position after every counted step, starting with the start position;
  // stationary repeats mark blocked or degenerate steps. For blocks these are
  // the executed end-effector cells.
  std::vector<Cell> visited_cells;
  std::vector<std::vector<Cell>> predicted_paths;  // extracted, per replan
  std::vector<Cell> predicted_goals;               // per replan, if g present
  std::vector<Cell> final_plan_cells;  // last plan's cells with value > 0
  double satisfied_fraction = -1.0;    // blocks only

  int n_plans() const { return static_cast<int>(predicted_paths.size()); }
};

// Argmax cell per trajectory channel; ties break to the smallest row-major
// pixel index.
std::vector<Cell> extract_states(const PlanSample& sample);
Cell extract_goal(const PlanSample& sample);

// Cells whose value exceeds 0 in any trajectory channel, row-major order.
std::vector<Cell> binarize_plan(const PlanSample& sample);

// A* path from current to next over the known obstacle mask, converted to
// actions; empty when current == next. Throws Error when next is unreachable
// or invalid (callers treat that as a failed step).
std::vector<Action> inverse_dynamics(Cell current, Cell next,
                                     const std::vector<uint8_t>& obstacle_mask,
                                     int h, int w);

EpisodeLog run_episode(DiffusionModel& model, const EnvState& start,
                       const Instruction& instruction, const PlannerConfig& pc,
                       uint64_t seed);

EpisodeLog run_blocks_episode(DiffusionModel& model, const BlockState& start,
                              const std::vector<Constraint>& constraints,
                              const Instruction& instruction,
                              const PlannerConfig& pc, uint64_t seed);

// JSON-lines round-trip (one log per line).
std::string episode_log_to_json(const EpisodeLog& log);
EpisodeLog episode_log_from_json(const std::string& line);
void write_logs(const std::string& path, const std::vector<EpisodeLog>& logs);
std::vector<EpisodeLog> read_logs(const std::string& path);

}  // namespace planpaint
