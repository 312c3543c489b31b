// Acceptance harness: exercises the end-to-end contract on desk-scale models
// and prints exactly one PASS/FAIL line per criterion. Expensive artifacts
// (datasets, checkpoints, episode logs) are cached under the directory given
// as argv[1]; delete that directory to force a full retrain. argv[2], when
// present, names the unit-test binary used for the property-suite criterion.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "planpaint/baselines.hpp"
#include "planpaint/diffusion.hpp"
#include "planpaint/metrics.hpp"
#include "planpaint/planner.hpp"
#include "planpaint/record_io.hpp"

namespace pp = planpaint;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Pinned experiment scale and tolerances. These constants ARE the acceptance
// contract; loosening them is not a fix, it is a red flag.

constexpr int kEvalEpisodes = 200;
constexpr int kTrainEpisodes = 5000;
constexpr int kTrainEpochs = 60;
constexpr int kDiffusionK = 100;
constexpr int kSamplerSteps = 10;  // reduced-step ddim for closed-loop evals
constexpr double kC1MinSr = 0.95;
constexpr double kC1MaxGd = 0.3;
constexpr double kC1MaxTrainSeconds = 7200.0;  // two hours
constexpr double kC2MinSr = 0.90;
constexpr double kC2MinPathF1 = 0.85;
constexpr double kC3MinFlyMinusOne = 0.25;
constexpr double kC3MinFlySr = 0.80;
constexpr double kC4MinSrDrop = 0.10;
constexpr double kC5MinSingleConstraintSr = 0.90;
constexpr double kC5MinMultiConstraintSr = 0.80;
constexpr double kC6MinDiffusionMinusBc = 0.30;
constexpr double kC7MaxSeconds = 300.0;

std::string g_cache;
int g_failures = 0;

void report(const char* criterion, bool pass, const std::string& detail) {
  std::printf("%s %s %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  g_failures += pass ? 0 : 1;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// ---------------------------------------------------------------------------
// Environment and model scale shared by every criterion.

pp::GridConfig grid_config(pp::Setting setting, int n_objects) {
  pp::GridConfig g;
  g.setting = setting;
  g.n_objects = n_objects;
  g.observability = setting == pp::Setting::kPMO2G
                        ? pp::Observability::kPartial
                        : pp::Observability::kFull;
  return g;
}

pp::DenoiserConfig grid_denoiser(bool goal_channel) {
  pp::DenoiserConfig d;  // desk-scale defaults match the production CLI
  d.text_vocab = static_cast<int>(pp::default_vocabulary().size());
  d.goal_channel = goal_channel;
  return d;
}

pp::DenoiserConfig blocks_denoiser() {
  pp::DenoiserConfig d;
  d.height = 8;
  d.width = 8;
  d.horizon = 16;
  d.obs_mode = pp::ObsMode::kScalar;
  d.object_vocab = pp::kNumReservedTokens;
  d.text_len = pp::kBlocksTextLen;
  d.text_vocab = static_cast<int>(pp::default_vocabulary().size());
  return d;
}

// ---------------------------------------------------------------------------
// Cached artifact builders.

pp::Dataset ensure_grid_dataset(const std::string& name, pp::Setting setting,
                                int n_objects, uint64_t seed) {
  const std::string dir = g_cache + "/" + name;
  if (fs::exists(dir + "/manifest.json")) return pp::read_dataset(dir);
  std::fprintf(stderr, "[acceptance] generating %s...\n", name.c_str());
  const pp::Dataset ds = pp::generate_dataset(
      grid_config(setting, n_objects), setting, kTrainEpisodes, seed, {});
  pp::write_dataset(ds, dir);
  return ds;
}

pp::Dataset ensure_blocks_dataset(const std::string& name, uint64_t seed) {
  const std::string dir = g_cache + "/" + name;
  if (fs::exists(dir + "/manifest.json")) return pp::read_dataset(dir);
  std::fprintf(stderr, "[acceptance] generating %s...\n", name.c_str());
  pp::EpisodeOptions eo;
  eo.horizon = 16;
  eo.n_constraints_min = 1;
  eo.n_constraints_max = 3;
  const pp::Dataset ds = pp::generate_blocks_dataset(
      pp::BlockConfig{}, pp::Setting::kStack, kTrainEpisodes, seed, eo);
  pp::write_dataset(ds, dir);
  return ds;
}

// Trains (or reloads) a diffusion model; returns the recorded train seconds.
pp::DiffusionModel ensure_diffusion(const std::string& name,
                                    const pp::Dataset& data,
                                    const pp::DenoiserConfig& netcfg,
                                    uint64_t seed, double* train_seconds) {
  const std::string dir = g_cache + "/" + name;
  const std::string ckpt = dir + "/checkpoint";
  const std::string stamp = dir + "/train_seconds.txt";
  if (fs::exists(ckpt + "/manifest.json") && fs::exists(stamp)) {
    if (train_seconds != nullptr)
      *train_seconds = std::stod(pp::read_text_file(stamp));
    return pp::DiffusionModel::load_checkpoint(ckpt);
  }
  std::fprintf(stderr, "[acceptance] training %s (%d epochs)...\n",
               name.c_str(), kTrainEpochs);
  pp::DenoiserConfig cfg = netcfg;
  cfg.height = data.manifest.height;
  cfg.width = data.manifest.width;
  cfg.horizon = data.manifest.horizon;
  cfg.text_len = data.manifest.text_len;
  pp::DiffusionModel model(cfg, kDiffusionK, seed);
  pp::TrainConfig tc;
  tc.epochs = kTrainEpochs;
  tc.seed = seed;
  tc.out_dir = dir;
  const double t0 = now_seconds();
  model.train(data.episodes, tc);
  const double elapsed = now_seconds() - t0;
  pp::write_text_file(stamp, fmt("%.3f", elapsed));
  if (train_seconds != nullptr) *train_seconds = elapsed;
  return model;
}

pp::BCPolicy ensure_bc(const std::string& name, const pp::Dataset& data,
                       uint64_t seed) {
  const std::string dir = g_cache + "/" + name;
  const std::string ckpt = dir + "/checkpoint";
  if (fs::exists(ckpt + "/manifest.json"))
    return pp::BCPolicy::load_checkpoint(ckpt);
  std::fprintf(stderr, "[acceptance] training %s...\n", name.c_str());
  pp::BCConfig cfg;
  cfg.height = data.manifest.height;
  cfg.width = data.manifest.width;
  cfg.object_vocab_size = data.manifest.grid_config->object_vocab_size;
  cfg.epochs = 20;
  cfg.seed = seed;
  cfg.out_dir = dir;
  pp::BCPolicy policy(cfg, seed);
  policy.train(data.episodes);
  return policy;
}

// ---------------------------------------------------------------------------
// Cached closed-loop evaluations. Eval episodes derive from one shared seed
// so different planner modes and models face identical worlds.

std::vector<pp::Episode> grid_eval_episodes(pp::Setting setting,
                                            int n_objects, uint64_t seed) {
  const pp::GridConfig g = grid_config(setting, n_objects);
  pp::EpisodeOptions eo;
  eo.progress_sampling = false;
  std::vector<pp::Episode> eps;
  const uint64_t base = pp::derive_seed(seed, "eval");
  for (int i = 0; i < kEvalEpisodes; ++i)
    eps.push_back(pp::make_episode(g, setting, base + i, eo));
  return eps;
}

std::vector<pp::Episode> blocks_eval_episodes(int cmin, int cmax,
                                              uint64_t seed) {
  pp::EpisodeOptions eo;
  eo.horizon = 16;
  eo.progress_sampling = false;
  eo.n_constraints_min = cmin;
  eo.n_constraints_max = cmax;
  std::vector<pp::Episode> eps;
  const uint64_t base = pp::derive_seed(seed, "eval");
  for (int i = 0; i < kEvalEpisodes; ++i)
    eps.push_back(pp::make_blocks_episode(pp::BlockConfig{},
                                          pp::Setting::kStack, base + i, eo));
  return eps;
}

pp::PlannerConfig planner_config(pp::PlanMode mode, int max_env_steps) {
  pp::PlannerConfig pc;
  pc.mode = mode;
  pc.n_replans = 2;
  pc.steps_between_replans = 1;
  pc.max_env_steps = max_env_steps;
  pc.sampler.sampler = pp::SamplerKind::kDdim;
  pc.sampler.steps = kSamplerSteps;
  pc.sampler.eta = 0.0;
  return pc;
}

template <typename RunOne>
pp::MetricReport cached_eval(const std::string& name,
                             const std::vector<pp::Episode>& episodes,
                             const RunOne& run_one) {
  const std::string dir = g_cache + "/evals/" + name;
  const std::string logs_path = dir + "/logs.jsonl";
  std::vector<pp::EpisodeLog> logs;
  if (fs::exists(logs_path)) {
    logs = pp::read_logs(logs_path);
  } else {
    std::fprintf(stderr, "[acceptance] evaluating %s (%zu episodes)...\n",
                 name.c_str(), episodes.size());
    logs.reserve(episodes.size());
    for (const pp::Episode& ep : episodes) logs.push_back(run_one(ep));
    fs::create_directories(dir);
    pp::write_logs(logs_path, logs);
  }
  return pp::evaluate(logs, episodes, {});
}

pp::MetricReport eval_diffusion(const std::string& name,
                                pp::DiffusionModel& model,
                                const std::vector<pp::Episode>& episodes,
                                const pp::PlannerConfig& pc) {
  return cached_eval(name, episodes, [&](const pp::Episode& ep) {
    return ep.is_blocks()
               ? pp::run_blocks_episode(model, ep.block_state, ep.constraints,
                                        ep.instruction, pc, ep.seed)
               : pp::run_episode(model, ep.state, ep.instruction, pc,
                                 ep.seed);
  });
}

pp::MetricReport eval_bc(const std::string& name, pp::BCPolicy& policy,
                         const std::vector<pp::Episode>& episodes,
                         int max_env_steps) {
  return cached_eval(name, episodes, [&](const pp::Episode& ep) {
    pp::EpisodeLog log = pp::run_bc_episode(policy, ep.state, max_env_steps);
    log.seed = ep.seed;
    return log;
  });
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <cache_dir> [unit_test_binary]\n",
                 argv[0]);
    return 2;
  }
  g_cache = argv[1];
  fs::create_directories(g_cache);

  try {
    // ---- Criterion 1: 1O1G single object, on-the-fly --------------------
    {
      const pp::Dataset ds =
          ensure_grid_dataset("ds_1o1g", pp::Setting::k1O1G, 1, 1001);
      double train_s = 0.0;
      pp::DiffusionModel model =
          ensure_diffusion("m_1o1g", ds, grid_denoiser(true), 1011, &train_s);
      const auto eps =
          grid_eval_episodes(pp::Setting::k1O1G, 1, 2001);
      const pp::MetricReport r = eval_diffusion(
          "c1_fly", model, eps, planner_config(pp::PlanMode::kOnTheFly, 100));
      const bool pass = r.sr >= kC1MinSr && r.gd_mean <= kC1MaxGd &&
                        train_s <= kC1MaxTrainSeconds;
      report("C1", pass,
             fmt("1O1G on-the-fly sr=%.4f (>=%.2f) gd=%.4f (<=%.2f) "
                 "train=%.0fs (<=%.0fs) n=%d",
                 r.sr, kC1MinSr, r.gd_mean, kC1MaxGd, train_s,
                 kC1MaxTrainSeconds, r.n_episodes));
    }

    // ---- Criterion 2: MO1G multi-object, on-the-fly ---------------------
    pp::MetricReport mo1g_fly;
    {
      const pp::Dataset ds =
          ensure_grid_dataset("ds_mo1g", pp::Setting::kMO1G, 8, 1002);
      pp::DiffusionModel model = ensure_diffusion(
          "m_mo1g", ds, grid_denoiser(true), 1012, nullptr);
      const auto eps = grid_eval_episodes(pp::Setting::kMO1G, 8, 2002);
      mo1g_fly = eval_diffusion("c2_fly", model, eps,
                                planner_config(pp::PlanMode::kOnTheFly, 100));
      const bool pass =
          mo1g_fly.sr >= kC2MinSr && mo1g_fly.path_f1 >= kC2MinPathF1;
      report("C2", pass,
             fmt("MO1G on-the-fly sr=%.4f (>=%.2f) path_f1=%.4f (>=%.2f) "
                 "n=%d",
                 mo1g_fly.sr, kC2MinSr, mo1g_fly.path_f1, kC2MinPathF1,
                 mo1g_fly.n_episodes));
    }

    // ---- Criteria 3+4: P-MO2G replanning ladder and goal-channel ablation
    {
      const pp::Dataset ds =
          ensure_grid_dataset("ds_pmo2g", pp::Setting::kPMO2G, 8, 1003);
      pp::DiffusionModel model = ensure_diffusion(
          "m_pmo2g", ds, grid_denoiser(true), 1013, nullptr);
      const auto eps = grid_eval_episodes(pp::Setting::kPMO2G, 8, 2003);
      const pp::MetricReport one = eval_diffusion(
          "c3_one", model, eps, planner_config(pp::PlanMode::kOneShot, 100));
      const pp::MetricReport two = eval_diffusion(
          "c3_two", model, eps, planner_config(pp::PlanMode::kNShot, 100));
      const pp::MetricReport fly = eval_diffusion(
          "c3_fly", model, eps, planner_config(pp::PlanMode::kOnTheFly, 100));
      const bool pass = one.sr < two.sr && two.sr < fly.sr &&
                        fly.sr - one.sr >= kC3MinFlyMinusOne &&
                        fly.sr >= kC3MinFlySr;
      report("C3", pass,
             fmt("P-MO2G sr one=%.4f < two=%.4f < fly=%.4f, fly-one=%.4f "
                 "(>=%.2f), fly (>=%.2f), n=%d shared-seed",
                 one.sr, two.sr, fly.sr, fly.sr - one.sr, kC3MinFlyMinusOne,
                 kC3MinFlySr, fly.n_episodes));

      pp::DiffusionModel ablated = ensure_diffusion(
          "m_pmo2g_ng", ds, grid_denoiser(false), 1014, nullptr);
      const pp::MetricReport one_ng =
          eval_diffusion("c4_one_nogoal", ablated, eps,
                         planner_config(pp::PlanMode::kOneShot, 100));
      const double drop = one.sr - one_ng.sr;
      report("C4", drop >= kC4MinSrDrop,
             fmt("no_goal_channel one-shot sr %.4f -> %.4f, drop=%.4f "
                 "(>=%.2f), same seeds",
                 one.sr, one_ng.sr, drop, kC4MinSrDrop));
    }

    // ---- Criterion 5: block stacking, single and multi constraint -------
    {
      const pp::Dataset ds = ensure_blocks_dataset("ds_stack", 1005);
      pp::DiffusionModel model =
          ensure_diffusion("m_stack", ds, blocks_denoiser(), 1015, nullptr);
      const auto single = blocks_eval_episodes(1, 1, 2005);
      const auto multi = blocks_eval_episodes(2, 3, 2006);
      const pp::MetricReport rs = eval_diffusion(
          "c5_single", model, single,
          planner_config(pp::PlanMode::kOnTheFly, 20));
      const pp::MetricReport rm = eval_diffusion(
          "c5_multi", model, multi,
          planner_config(pp::PlanMode::kOnTheFly, 20));
      const bool pass = rs.constraint_sr >= kC5MinSingleConstraintSr &&
                        rm.constraint_sr >= kC5MinMultiConstraintSr;
      report("C5", pass,
             fmt("STACK constraint_sr single=%.4f (>=%.2f) multi=%.4f "
                 "(>=%.2f) n=%d each",
                 rs.constraint_sr, kC5MinSingleConstraintSr, rm.constraint_sr,
                 kC5MinMultiConstraintSr, rs.n_episodes));
    }

    // ---- Criterion 6: diffusion planner vs behavioral cloning -----------
    {
      const pp::Dataset ds =
          ensure_grid_dataset("ds_mo1g", pp::Setting::kMO1G, 8, 1002);
      pp::BCPolicy bc = ensure_bc("m_bc_mo1g", ds, 1016);
      const auto eps = grid_eval_episodes(pp::Setting::kMO1G, 8, 2002);
      const pp::MetricReport rb = eval_bc("c6_bc", bc, eps, 100);
      const double margin = mo1g_fly.sr - rb.sr;
      report("C6", margin >= kC6MinDiffusionMinusBc,
             fmt("MO1G sr diffusion=%.4f bc=%.4f margin=%.4f (>=%.2f), "
                 "identical data and eval seeds",
                 mo1g_fly.sr, rb.sr, margin, kC6MinDiffusionMinusBc));
    }

    // ---- Criterion 7: property suite wall time ---------------------------
    {
      if (argc >= 3) {
        const std::string cmd =
            std::string("\"") + argv[2] + "\" -ts=properties > /dev/null 2>&1";
        const double t0 = now_seconds();
        const int rc = std::system(cmd.c_str());
        const double elapsed = now_seconds() - t0;
        report("C7", rc == 0 && elapsed < kC7MaxSeconds,
               fmt("property suite rc=%d in %.1fs (<%.0fs)", rc, elapsed,
                   kC7MaxSeconds));
      } else {
        report("C7", false,
               "property suite binary not supplied (pass it as argv[2])");
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance harness error: %s\n", e.what());
    return 1;
  }

  return g_failures == 0 ? 0 : 1;
}
