#include "planpaint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

namespace planpaint {

using json = nlohmann::json;

double goal_distance(Cell final_pos, Cell goal) {
  return std::hypot(static_cast<double>(final_pos.r - goal.r),
                    static_cast<double>(final_pos.c - goal.c));
}

namespace {

std::set<std::pair<int, int>> cell_set(const std::vector<Cell>& cells) {
  std::set<std::pair<int, int>> s;
  for (const Cell& c : cells) s.insert({c.r, c.c});
  return s;
}

}  // namespace

Prf path_prf(const std::vector<Cell>& predicted,
             const std::vector<Cell>& ground_truth) {
  const auto pred = cell_set(predicted);
  const auto gt = cell_set(ground_truth);
  PP_CHECK_MSG(!gt.empty(), "ground-truth path must be nonempty");
  size_t tp = 0;
  for (const auto& c : pred) tp += gt.count(c);
  const size_t fp = pred.size() - tp;
  const size_t fn = gt.size() - tp;
  Prf out;
  out.precision = pred.empty() ? 0.0
                               : static_cast<double>(tp) /
                                     static_cast<double>(tp + fp);
  out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  out.f1 = (out.precision + out.recall) == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall /
                     (out.precision + out.recall);
  return out;
}

MetricReport evaluate(const std::vector<EpisodeLog>& logs,
                      const std::vector<Episode>& episodes,
                      const EvalOptions& options) {
  PP_CHECK_MSG(!logs.empty(), "no episodes to evaluate");
  PP_CHECK_MSG(logs.size() == episodes.size(),
               "log/episode count mismatch");

  MetricReport report;
  report.setting = logs.front().setting;
  report.n_episodes = static_cast<int>(logs.size());
  const bool blocks = is_blocks_setting(report.setting);

  double sr_sum = 0.0, gd_sum = 0.0;
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0, c_sum = 0.0;
  for (size_t i = 0; i < logs.size(); ++i) {
    const EpisodeLog& log = logs[i];
    const Episode& ep = episodes[i];
    PP_CHECK_MSG(log.seed == ep.seed, "log/episode id mismatch");
    PP_CHECK_MSG(log.setting == ep.setting,
                 "log/episode setting mismatch");

    PerEpisodeMetrics m;
    m.seed = log.seed;
    m.success = log.success;
    sr_sum += log.success ? 1.0 : 0.0;
    if (blocks) {
      PP_CHECK_MSG(log.satisfied_fraction >= 0.0,
                   "blocks log lacks satisfied_fraction");
      m.satisfied_fraction = log.satisfied_fraction;
      c_sum += m.satisfied_fraction;
    } else {
      m.gd = log.success ? 0.0 : goal_distance(log.final_pos, ep.goal_cell);
      gd_sum += m.gd;
      const std::vector<Cell>& predicted =
          (log.n_plans() <= 1 || options.last_plan_only)
              ? log.final_plan_cells
              : log.visited_cells;
      const Prf prf = path_prf(predicted, ep.path_cells);
      m.precision = prf.precision;
      m.recall = prf.recall;
      m.f1 = prf.f1;
      p_sum += prf.precision;
      r_sum += prf.recall;
      f_sum += prf.f1;
    }
    report.per_episode.push_back(m);
  }

  const double n = static_cast<double>(report.n_episodes);
  report.sr = sr_sum / n;
  if (blocks) {
    report.constraint_sr = c_sum / n;
  } else {
    report.gd_mean = gd_sum / n;
    report.path_precision = p_sum / n;
    report.path_recall = r_sum / n;
    report.path_f1 = f_sum / n;
  }
  return report;
}

std::string metric_report_to_json(const MetricReport& report) {
  json per = json::array();
  for (const PerEpisodeMetrics& m : report.per_episode) {
    json j{{"seed", m.seed}, {"success", m.success}};
    if (m.satisfied_fraction >= 0.0) {
      j["satisfied_fraction"] = m.satisfied_fraction;
    } else {
      j["gd"] = m.gd;
      j["precision"] = m.precision;
      j["recall"] = m.recall;
      j["f1"] = m.f1;
    }
    per.push_back(j);
  }
  json j{{"setting", to_string(report.setting)},
         {"n_episodes", report.n_episodes},
         {"sr", report.sr},
         {"per_episode", per}};
  if (report.constraint_sr >= 0.0) {
    j["constraint_sr"] = report.constraint_sr;
  } else {
    j["gd_mean"] = report.gd_mean;
    j["path_precision"] = report.path_precision;
    j["path_recall"] = report.path_recall;
    j["path_f1"] = report.path_f1;
  }
  return j.dump(2) + "\n";
}

MetricReport metric_report_from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricReport report;
  report.setting = setting_from_string(j.at("setting").get<std::string>());
  report.n_episodes = j.at("n_episodes").get<int>();
  report.sr = j.at("sr").get<double>();
  if (j.contains("constraint_sr")) {
    report.constraint_sr = j.at("constraint_sr").get<double>();
  } else {
    report.gd_mean = j.at("gd_mean").get<double>();
    report.path_precision = j.at("path_precision").get<double>();
    report.path_recall = j.at("path_recall").get<double>();
    report.path_f1 = j.at("path_f1").get<double>();
  }
  for (const auto& item : j.at("per_episode")) {
    PerEpisodeMetrics m;
    m.seed = item.at("seed").get<uint64_t>();
    m.success = item.at("success").get<bool>();
    if (item.contains("satisfied_fraction")) {
      m.satisfied_fraction = item.at("satisfied_fraction").get<double>();
    } else {
      m.gd = item.at("gd").get<double>();
      m.precision = item.at("precision").get<double>();
      m.recall = item.at("recall").get<double>();
      m.f1 = item.at("f1").get<double>();
    }
    report.per_episode.push_back(m);
  }
  return report;
}

std::string metric_report_table(const MetricReport& report) {
  char buf[256];
  std::string out;
  if (report.constraint_sr >= 0.0) {
    std::snprintf(buf, sizeof(buf), "%-10s %10s %8s %14s\n", "Setting",
                  "Episodes", "SR", "Constraint SR");
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-10s %10d %8.4f %14.4f\n",
                  to_string(report.setting), report.n_episodes, report.sr,
                  report.constraint_sr);
    out += buf;
  } else {
    std::snprintf(buf, sizeof(buf), "%-10s %10s %8s %8s %11s %10s %9s\n",
                  "Setting", "Episodes", "SR", "GD", "Path Prec.",
                  "Path Rec.", "Path F1");
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "%-10s %10d %8.4f %8.4f %11.4f %10.4f %9.4f\n",
                  to_string(report.setting), report.n_episodes, report.sr,
                  report.gd_mean, report.path_precision, report.path_recall,
                  report.path_f1);
    out += buf;
  }
  return out;
}

}  // namespace planpaint
