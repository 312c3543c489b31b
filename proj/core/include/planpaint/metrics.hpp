#pragma once

// Evaluation metrics: success rate, mean goal distance, path
// precision/recall/F1 against the expert path, and the blocks constraint
// satisfaction rate; aggregated into a report with JSON and aligned-table
// serializations.

#include <string>
#include <vector>

#include "planpaint/expert.hpp"
#include "planpaint/planner.hpp"

namespace planpaint {

// Euclidean distance in cells between the final position and the goal.
double goal_distance(Cell final_pos, Cell goal);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Set-overlap precision/recall/F1 (inputs deduplicated). Ground truth must be
// nonempty; empty predictions score 0 precision, and F1 is 0 when both
// precision and recall are 0.
Prf path_prf(const std::vector<Cell>& predicted,
             const std::vector<Cell>& ground_truth);

struct PerEpisodeMetrics {
  uint64_t seed = 0;
  bool success = false;
  double gd = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double satisfied_fraction = -1.0;  // blocks only
};

struct MetricReport {
  Setting setting = Setting::kMO1G;
  int n_episodes = 0;
  double sr = 0.0;
  double gd_mean = 0.0;
  double path_precision = 0.0;
  double path_recall = 0.0;
  double path_f1 = 0.0;
  double constraint_sr = -1.0;  // blocks only; < 0 means not applicable
  std::vector<PerEpisodeMetrics> per_episode;
};

struct EvalOptions {
  // Multi-replan episodes score the union of executed cells as the predicted
  // path by default; this switches to the last sampled plan's binarized
  // cells.
  bool last_plan_only = false;
};

// Aggregates aligned (log, episode) pairs; throws on count or seed mismatch.
MetricReport evaluate(const std::vector<EpisodeLog>& logs,
                      const std::vector<Episode>& episodes,
                      const EvalOptions& options = {});

std::string metric_report_to_json(const MetricReport& report);
MetricReport metric_report_from_json(const std::string& text);

// Plain-text table in the paper's column order.
std::string metric_report_table(const MetricReport& report);

}  // namespace planpaint
