#include "planpaint/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "planpaint/baselines.hpp"
#include "planpaint/diffusion.hpp"
#include "planpaint/metrics.hpp"
#include "planpaint/planner.hpp"
#include "planpaint/record_io.hpp"
#include "planpaint/render.hpp"

namespace planpaint {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Flat configuration: every known dotted key with its default. Config files
// and --key=value overrides may only touch keys listed here.

json default_flat_config() {
  return json{
      {"setting", "MO1G"},
      {"seed", 0},
      {"model", "diffusion"},  // diffusion | bc
      {"ablate", ""},          // "" | no_goal_channel | raw_grid
      {"grid.height", 16},
      {"grid.width", 16},
      {"grid.n_objects", 8},
      {"grid.n_obstacles", 10},
      {"grid.object_vocab_size", 8},
      {"grid.fov_radius", 4},
      {"grid.max_steps", 100},
      {"grid.observability", "auto"},  // auto | full | partial
      {"grid.ref_target_radius", 4},
      {"blocks.n_columns", 8},
      {"blocks.max_height", 8},
      {"blocks.n_blocks", 4},
      {"blocks.max_moves", 20},
      {"episode.horizon", -1},  // -1: 32 for grids, 16 for blocks
      {"episode.progress_sampling", true},
      {"episode.augment", false},
      {"episode.n_constraints_min", 1},
      {"episode.n_constraints_max", 1},
      {"denoiser.K", 100},
      {"denoiser.embed_dim", 16},
      {"denoiser.text_embed_dim", 64},
      {"denoiser.depth", 3},
      {"denoiser.base_channels", json::array({32, 64, 128})},
      {"denoiser.attention_levels", json::array({1, 2})},
      {"denoiser.timestep_embed_dim", 128},
      {"denoiser.norm_groups", 8},
      {"denoiser.head_dim", 32},
      {"denoiser.goal_channel", true},
      {"train.batch_size", 64},
      {"train.epochs", 20},
      {"train.peak_lr", 2e-4},
      {"train.warmup_epochs", 5},
      {"train.checkpoint_every", 0},
      {"bc.conv_channels", 16},
      {"bc.fc_width", 40},
      {"bc.lr", 1e-3},
      {"bc.epochs", 10},
      {"bc.batch_size", 64},
      {"bc.holdout_frac", 0.1},
      {"planner.mode", "on_the_fly"},
      {"planner.n_replans", 2},
      {"planner.steps_between_replans", 1},
      {"planner.max_env_steps", -1},  // -1: grid.max_steps / blocks.max_moves
      {"planner.goal_fallback", false},
      {"sampler.kind", "ddim"},
      {"sampler.steps", 0},
      {"sampler.eta", 0.0},
      {"eval.last_plan_only", false},
  };
}

void apply_override(json& flat, const std::string& key,
                    const std::string& value) {
  if (!flat.contains(key)) throw Error("unknown config key: " + key);
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;  // bare word, treat as string
  }
  if (flat.at(key).is_string() && !v.is_string()) v = value;
  flat[key] = std::move(v);
}

void merge_config_file(json& flat, const std::string& path) {
  const json file = json::parse(read_text_file(path));
  if (!file.is_object())
    throw Error("config file must hold a flat JSON object: " + path);
  for (const auto& [key, value] : file.items()) {
    if (!flat.contains(key)) throw Error("unknown config key: " + key);
    flat[key] = value;
  }
}

// ---------------------------------------------------------------------------
// Typed view of the flat configuration.

struct ResolvedConfig {
  Setting setting = Setting::kMO1G;
  uint64_t seed = 0;
  std::string model;
  std::string ablate;
  GridConfig grid;
  BlockConfig blocks;
  EpisodeOptions episode;
  int denoiser_K = 100;
  DenoiserConfig denoiser;
  TrainConfig train;
  BCConfig bc;
  PlannerConfig planner;
  EvalOptions eval;

  bool blocks_task() const { return is_blocks_setting(setting); }
};

ResolvedConfig resolve(const json& f) {
  ResolvedConfig c;
  c.setting = setting_from_string(f.at("setting").get<std::string>());
  c.seed = f.at("seed").get<uint64_t>();
  c.model = f.at("model").get<std::string>();
  c.ablate = f.at("ablate").get<std::string>();
  if (c.model != "diffusion" && c.model != "bc")
    throw Error("model must be 'diffusion' or 'bc'");
  if (!c.ablate.empty() && c.ablate != "no_goal_channel" &&
      c.ablate != "raw_grid")
    throw Error("ablate must be empty, 'no_goal_channel' or 'raw_grid'");

  c.grid.height = f.at("grid.height").get<int>();
  c.grid.width = f.at("grid.width").get<int>();
  c.grid.n_objects = f.at("grid.n_objects").get<int>();
  c.grid.n_obstacles = f.at("grid.n_obstacles").get<int>();
  c.grid.object_vocab_size = f.at("grid.object_vocab_size").get<int>();
  c.grid.fov_radius = f.at("grid.fov_radius").get<int>();
  c.grid.max_steps = f.at("grid.max_steps").get<int>();
  c.grid.ref_target_radius = f.at("grid.ref_target_radius").get<int>();
  c.grid.setting = c.setting;
  const std::string obsv = f.at("grid.observability").get<std::string>();
  if (obsv == "full")
    c.grid.observability = Observability::kFull;
  else if (obsv == "partial")
    c.grid.observability = Observability::kPartial;
  else if (obsv == "auto")
    c.grid.observability = c.setting == Setting::kPMO2G
                               ? Observability::kPartial
                               : Observability::kFull;
  else
    throw Error("grid.observability must be auto|full|partial");

  c.blocks.n_columns = f.at("blocks.n_columns").get<int>();
  c.blocks.max_height = f.at("blocks.max_height").get<int>();
  c.blocks.n_blocks = f.at("blocks.n_blocks").get<int>();
  c.blocks.max_moves = f.at("blocks.max_moves").get<int>();

  const int horizon = f.at("episode.horizon").get<int>();
  c.episode.horizon = horizon > 0 ? horizon : (c.blocks_task() ? 16 : 32);
  c.episode.progress_sampling = f.at("episode.progress_sampling").get<bool>();
  c.episode.language.augment = f.at("episode.augment").get<bool>();
  c.episode.n_constraints_min = f.at("episode.n_constraints_min").get<int>();
  c.episode.n_constraints_max = f.at("episode.n_constraints_max").get<int>();

  c.denoiser_K = f.at("denoiser.K").get<int>();
  DenoiserConfig& d = c.denoiser;
  if (c.blocks_task()) {
    d.height = c.blocks.max_height;
    d.width = c.blocks.n_columns;
    d.obs_mode = ObsMode::kScalar;
    d.text_len = kBlocksTextLen;
    d.object_vocab = kNumReservedTokens;  // unused by the scalar lift
  } else {
    d.height = c.grid.height;
    d.width = c.grid.width;
    d.obs_mode = ObsMode::kTokens;
    d.text_len = kGridTextLen;
    d.object_vocab = kNumReservedTokens + c.grid.object_vocab_size;
  }
  d.horizon = c.episode.horizon;
  d.goal_channel = f.at("denoiser.goal_channel").get<bool>();
  d.embed_dim = f.at("denoiser.embed_dim").get<int>();
  d.text_vocab = default_vocabulary().size();
  d.text_embed_dim = f.at("denoiser.text_embed_dim").get<int>();
  d.depth = f.at("denoiser.depth").get<int>();
  d.base_channels = f.at("denoiser.base_channels").get<std::vector<int>>();
  d.attention_levels =
      f.at("denoiser.attention_levels").get<std::vector<int>>();
  d.timestep_embed_dim = f.at("denoiser.timestep_embed_dim").get<int>();
  d.norm_groups = f.at("denoiser.norm_groups").get<int>();
  d.head_dim = f.at("denoiser.head_dim").get<int>();
  if (c.ablate == "no_goal_channel") d.goal_channel = false;
  if (c.ablate == "raw_grid") {
    if (c.blocks_task()) throw Error("raw_grid ablation is grid-only");
    d.obs_mode = ObsMode::kRawId;
  }

  c.train.batch_size = f.at("train.batch_size").get<int>();
  c.train.epochs = f.at("train.epochs").get<int>();
  c.train.peak_lr = f.at("train.peak_lr").get<double>();
  c.train.warmup_epochs = f.at("train.warmup_epochs").get<int>();
  c.train.checkpoint_every = f.at("train.checkpoint_every").get<int>();
  c.train.seed = c.seed;

  c.bc.height = c.grid.height;
  c.bc.width = c.grid.width;
  c.bc.object_vocab_size = c.grid.object_vocab_size;
  c.bc.conv_channels = f.at("bc.conv_channels").get<int>();
  c.bc.fc_width = f.at("bc.fc_width").get<int>();
  c.bc.lr = f.at("bc.lr").get<double>();
  c.bc.epochs = f.at("bc.epochs").get<int>();
  c.bc.batch_size = f.at("bc.batch_size").get<int>();
  c.bc.holdout_frac = f.at("bc.holdout_frac").get<double>();
  c.bc.seed = c.seed;

  c.planner.mode =
      plan_mode_from_string(f.at("planner.mode").get<std::string>());
  c.planner.n_replans = f.at("planner.n_replans").get<int>();
  c.planner.steps_between_replans =
      f.at("planner.steps_between_replans").get<int>();
  const int budget = f.at("planner.max_env_steps").get<int>();
  c.planner.max_env_steps =
      budget >= 0 ? budget
                  : (c.blocks_task() ? c.blocks.max_moves : c.grid.max_steps);
  c.planner.goal_fallback = f.at("planner.goal_fallback").get<bool>();
  c.planner.sampler.sampler =
      sampler_from_string(f.at("sampler.kind").get<std::string>());
  c.planner.sampler.steps = f.at("sampler.steps").get<int>();
  c.planner.sampler.eta = f.at("sampler.eta").get<double>();

  c.eval.last_plan_only = f.at("eval.last_plan_only").get<bool>();
  return c;
}

// ---------------------------------------------------------------------------
// Output-path helpers.

std::string output_root() {
  const char* home = std::getenv("PLANNER_HOME");
  return home != nullptr && home[0] != '\0' ? home : "runs";
}

std::string default_out(const std::string& subcommand) {
  return output_root() + "/" + subcommand;
}

void refuse_existing(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw Error("output already exists (pass --force to overwrite): " + path);
}

// ---------------------------------------------------------------------------
// Episode generation shared by gen-data and eval.

Episode make_any_episode(const ResolvedConfig& c, uint64_t seed,
                         const EpisodeOptions& options) {
  return c.blocks_task()
             ? make_blocks_episode(c.blocks, c.setting, seed, options)
             : make_episode(c.grid, c.setting, seed, options);
}

Dataset generate_any_dataset(const ResolvedConfig& c, int n_episodes,
                             uint64_t seed_base,
                             const EpisodeOptions& options) {
  return c.blocks_task()
             ? generate_blocks_dataset(c.blocks, c.setting, n_episodes,
                                       seed_base, options)
             : generate_dataset(c.grid, c.setting, n_episodes, seed_base,
                                options);
}

// ---------------------------------------------------------------------------
// Subcommand: gen-data.

int cmd_gen_data(const ResolvedConfig& c, int n_episodes,
                 const std::string& out, bool force) {
  if (n_episodes < 1) throw Error("--n must be at least 1");
  refuse_existing(out + "/manifest.json", force);
  refuse_existing(out + "/episodes.bin", force);
  const Dataset ds = generate_any_dataset(c, n_episodes, c.seed, c.episode);
  write_dataset(ds, out);
  std::cout << "wrote " << ds.episodes.size() << " episodes ("
            << to_string(c.setting) << ", seed " << c.seed << ", digest "
            << ds.manifest.config_digest << ") to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommand: train.

DenoiserConfig denoiser_config_for_dataset(const ResolvedConfig& c,
                                           const DatasetManifest& m) {
  DenoiserConfig d = c.denoiser;
  d.height = m.height;
  d.width = m.width;
  d.horizon = m.horizon;
  d.text_len = m.text_len;
  d.text_vocab = m.vocab.size();
  if (is_blocks_setting(m.setting)) {
    d.obs_mode = ObsMode::kScalar;
    d.object_vocab = kNumReservedTokens;
  } else {
    PP_CHECK(m.grid_config.has_value());
    d.object_vocab =
        kNumReservedTokens + m.grid_config->object_vocab_size;
    d.obs_mode =
        c.ablate == "raw_grid" ? ObsMode::kRawId : ObsMode::kTokens;
  }
  return d;
}

int cmd_train(const ResolvedConfig& c, const std::string& data,
              const std::string& out, bool force, bool resume) {
  const Dataset ds = read_dataset(data);
  PP_CHECK_MSG(ds.manifest.setting == c.setting,
               "dataset setting does not match the configured setting");

  if (c.model == "bc") {
    PP_CHECK_MSG(!is_blocks_setting(ds.manifest.setting),
                 "behavioral cloning covers grid settings");
    refuse_existing(out + "/checkpoint", force);
    BCConfig bc = c.bc;
    bc.height = ds.manifest.height;
    bc.width = ds.manifest.width;
    PP_CHECK(ds.manifest.grid_config.has_value());
    bc.object_vocab_size = ds.manifest.grid_config->object_vocab_size;
    bc.out_dir = out;
    BCPolicy policy(bc, bc.seed);
    const BCTrainResult r = policy.train(ds.episodes);
    std::cout << "bc trained: loss " << r.final_loss << ", holdout accuracy "
              << r.holdout_accuracy << " (best epoch " << r.best_epoch
              << "), checkpoint " << out << "/checkpoint\n";
    return 0;
  }

  TrainConfig tc = c.train;
  tc.out_dir = out;
  const std::string ckpt = out + "/checkpoint";
  if (resume) {
    PP_CHECK_MSG(fs::exists(ckpt + "/manifest.json"),
                 "no checkpoint to resume from in " + out);
    DiffusionModel model = DiffusionModel::load_checkpoint(ckpt);
    PP_CHECK_MSG(model.config().height == ds.manifest.height &&
                     model.config().width == ds.manifest.width &&
                     model.config().horizon == ds.manifest.horizon,
                 "checkpoint dimensions do not match the dataset");
    const float loss = model.train(ds.episodes, tc);
    std::cout << "resumed to epoch " << model.epoch() << ", loss " << loss
              << ", checkpoint " << ckpt << "\n";
    return 0;
  }
  refuse_existing(ckpt, force);
  const DenoiserConfig d = denoiser_config_for_dataset(c, ds.manifest);
  DiffusionModel model(d, c.denoiser_K, c.seed);
  const float loss = model.train(ds.episodes, tc);
  std::cout << "trained " << model.epoch() << " epochs, loss " << loss
            << ", checkpoint " << ckpt << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommand: eval.

std::vector<Episode> eval_episodes(const ResolvedConfig& c, int n) {
  EpisodeOptions eo = c.episode;
  eo.progress_sampling = false;
  const uint64_t base = derive_seed(c.seed, "eval");
  std::vector<Episode> eps;
  eps.reserve(n);
  for (int i = 0; i < n; ++i)
    eps.push_back(make_any_episode(c, base + static_cast<uint64_t>(i), eo));
  return eps;
}

void check_ablation(const ResolvedConfig& c, const DenoiserConfig& d) {
  if (c.ablate == "no_goal_channel")
    PP_CHECK_MSG(!d.goal_channel,
                 "--ablate no_goal_channel requires a checkpoint trained "
                 "without the goal channel");
  if (c.ablate == "raw_grid")
    PP_CHECK_MSG(d.obs_mode == ObsMode::kRawId,
                 "--ablate raw_grid requires a checkpoint trained on the "
                 "raw-id lift");
}

template <typename Model, typename RunOne>
std::vector<EpisodeLog> run_sharded(const Model& model,
                                    const std::vector<Episode>& episodes,
                                    int workers, const RunOne& run_one) {
  const int n = static_cast<int>(episodes.size());
  std::vector<EpisodeLog> logs(n);
  const int w = std::max(1, std::min(workers, n));
  if (w == 1) {
    Model local = model;
    for (int i = 0; i < n; ++i) logs[i] = run_one(local, episodes[i]);
    return logs;
  }
  std::vector<std::thread> threads;
  for (int t = 0; t < w; ++t) {
    const int begin = static_cast<int>(static_cast<int64_t>(n) * t / w);
    const int end = static_cast<int>(static_cast<int64_t>(n) * (t + 1) / w);
    threads.emplace_back([&, begin, end]() {
      Model local = model;  // per-worker isolation
      for (int i = begin; i < end; ++i) logs[i] = run_one(local, episodes[i]);
    });
  }
  for (auto& th : threads) th.join();
  return logs;
}

int cmd_eval(const ResolvedConfig& c, const std::string& checkpoint, int n,
             const std::string& out, bool force, int workers) {
  if (n < 1) throw Error("--n must be at least 1");
  refuse_existing(out + "/logs.jsonl", force);

  const std::vector<Episode> episodes = eval_episodes(c, n);
  std::vector<EpisodeLog> logs;
  if (c.model == "bc") {
    PP_CHECK_MSG(!c.blocks_task(), "behavioral cloning covers grid settings");
    const BCPolicy policy = BCPolicy::load_checkpoint(checkpoint);
    logs = run_sharded(policy, episodes, workers,
                       [&](BCPolicy& p, const Episode& ep) {
                         return run_bc_episode(p, ep.state,
                                               c.planner.max_env_steps);
                       });
  } else {
    const DiffusionModel model = DiffusionModel::load_checkpoint(checkpoint);
    const DenoiserConfig& d = model.config();
    check_ablation(c, d);
    const int want_h = c.blocks_task() ? c.blocks.max_height : c.grid.height;
    const int want_w = c.blocks_task() ? c.blocks.n_columns : c.grid.width;
    PP_CHECK_MSG(d.height == want_h && d.width == want_w,
                 "checkpoint dimensions do not match the configured "
                 "environment");
    logs = run_sharded(
        model, episodes, workers,
        [&](DiffusionModel& m, const Episode& ep) {
          return c.blocks_task()
                     ? run_blocks_episode(m, ep.block_state, ep.constraints,
                                          ep.instruction, c.planner, ep.seed)
                     : run_episode(m, ep.state, ep.instruction, c.planner,
                                   ep.seed);
        });
  }

  fs::create_directories(out);
  write_logs(out + "/logs.jsonl", logs);
  Dataset ds;
  ds.episodes = episodes;
  DatasetManifest& m = ds.manifest;
  m.n_episodes = n;
  m.height = c.blocks_task() ? c.blocks.max_height : c.grid.height;
  m.width = c.blocks_task() ? c.blocks.n_columns : c.grid.width;
  m.horizon = c.episode.horizon;
  m.text_len = c.blocks_task() ? kBlocksTextLen : kGridTextLen;
  m.setting = c.setting;
  m.vocab = default_vocabulary();
  if (c.blocks_task())
    m.block_config = c.blocks;
  else
    m.grid_config = c.grid;
  m.config_digest = "eval";
  write_dataset(ds, out + "/episodes");

  const MetricReport report = evaluate(logs, episodes, c.eval);
  write_text_file(out + "/report.json", metric_report_to_json(report));
  const std::string table = metric_report_table(report);
  write_text_file(out + "/report.txt", table);
  std::cout << table;
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommand: render.

int cmd_render(const std::string& in, const std::string& out, bool force,
               int cell_px) {
  const Dataset ds = read_dataset(in + "/episodes");
  std::map<uint64_t, const Episode*> by_seed;
  for (const Episode& ep : ds.episodes) by_seed[ep.seed] = &ep;

  refuse_existing(out, force);
  fs::create_directories(out);
  std::istringstream lines(read_text_file(in + "/logs.jsonl"));
  std::string line;
  size_t index = 0, rendered = 0;
  RenderOptions opts;
  opts.cell_px = cell_px;
  while (std::getline(lines, line)) {
    ++index;
    if (line.empty()) {
      std::cerr << "warning: skipping empty log line " << index << "\n";
      continue;
    }
    const EpisodeLog log = episode_log_from_json(line);
    const auto it = by_seed.find(log.seed);
    if (it == by_seed.end()) {
      std::cerr << "warning: no episode for seed " << log.seed
                << ", skipping line " << index << "\n";
      continue;
    }
    char name[64];
    std::snprintf(name, sizeof(name), "/episode_%04zu.ppm", index);
    write_ppm(out + name, render_episode(*it->second, &log, opts));
    ++rendered;
  }
  std::cout << "rendered " << rendered << " episodes to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommand: report.

int cmd_report(const std::string& in, const std::string& out, bool force,
               bool last_plan_only) {
  const std::vector<EpisodeLog> logs = read_logs(in + "/logs.jsonl");
  const Dataset ds = read_dataset(in + "/episodes");
  std::map<uint64_t, const Episode*> by_seed;
  for (const Episode& ep : ds.episodes) by_seed[ep.seed] = &ep;
  std::vector<Episode> aligned;
  aligned.reserve(logs.size());
  for (const EpisodeLog& log : logs) {
    const auto it = by_seed.find(log.seed);
    PP_CHECK_MSG(it != by_seed.end(),
                 "no episode for logged seed " + std::to_string(log.seed));
    aligned.push_back(*it->second);
  }
  EvalOptions eo;
  eo.last_plan_only = last_plan_only;
  const MetricReport report = evaluate(logs, aligned, eo);
  std::cout << metric_report_table(report);
  if (!out.empty()) {
    refuse_existing(out, force);
    write_text_file(out, metric_report_to_json(report));
  }
  return 0;
}

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args) {
  CLI::App app{"planpaint: language-conditioned diffusion planning toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  long long seed_flag = -1;
  std::string mode_flag, ablate_flag, model_flag, setting_flag;
  bool force = false;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat JSON config file");
    cmd->add_option("--set", overrides,
                    "config override key=value (repeatable)");
    cmd->add_option("--seed", seed_flag, "run seed");
    cmd->add_option("--setting", setting_flag,
                    "task setting: 1O1G|MO1G|P-MO2G|STACK|REARRANGE");
    cmd->add_flag("--force", force, "overwrite existing outputs");
    cmd->allow_extras();  // --key=value dotted overrides
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an expert dataset");
  int gen_n = 100;
  std::string gen_out;
  gen->add_option("--n", gen_n, "number of episodes");
  gen->add_option("--out", gen_out, "output dataset directory");
  add_common(gen);

  // train
  auto* train = app.add_subcommand("train", "train a model on a dataset");
  std::string train_data, train_out;
  bool resume = false;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "output run directory");
  train->add_flag("--resume", resume, "resume from the run's checkpoint");
  train->add_option("--model", model_flag, "diffusion|bc");
  add_common(train);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_out;
  int eval_n = 200, workers = 1;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint directory")
      ->required();
  eval_cmd->add_option("--n", eval_n, "number of eval episodes");
  eval_cmd->add_option("--out", eval_out, "output directory");
  eval_cmd->add_option("--mode", mode_flag,
                       "planner mode: one_shot|n_shot|on_the_fly");
  eval_cmd->add_option("--ablate", ablate_flag,
                       "no_goal_channel|raw_grid consistency check");
  eval_cmd->add_option("--workers", workers, "parallel episode workers");
  eval_cmd->add_option("--model", model_flag, "diffusion|bc");
  add_common(eval_cmd);

  // render
  auto* render_cmd =
      app.add_subcommand("render", "render episode logs to PPM images");
  std::string render_in, render_out;
  int cell_px = 16;
  render_cmd->add_option("--in", render_in, "eval output directory")
      ->required();
  render_cmd->add_option("--out", render_out, "image output directory");
  render_cmd->add_option("--cell-px", cell_px, "pixels per cell");
  render_cmd->add_flag("--force", force, "overwrite existing outputs");
  render_cmd->allow_extras();

  // report
  auto* report_cmd =
      app.add_subcommand("report", "recompute metrics from episode logs");
  std::string report_in, report_out;
  bool last_plan_only = false;
  report_cmd->add_option("--in", report_in, "eval output directory")
      ->required();
  report_cmd->add_option("--out", report_out, "optional report.json path");
  report_cmd->add_flag("--last-plan-only", last_plan_only,
                       "score the last plan instead of visited cells");
  report_cmd->add_flag("--force", force, "overwrite existing outputs");
  report_cmd->allow_extras();

  std::vector<std::string> argv_vec(args.begin(), args.end());
  try {
    std::vector<const char*> argv;
    argv.push_back("planpaint");
    for (const std::string& a : argv_vec) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the usage diagnostic
    return code == 0 ? 0 : 2;
  }

  try {
    json flat = default_flat_config();
    if (!config_path.empty()) merge_config_file(flat, config_path);
    CLI::App* active = app.get_subcommands().front();
    for (const std::string& extra : active->remaining()) {
      if (extra.rfind("--", 0) != 0)
        throw Error("unrecognized argument: " + extra);
      const std::string kv = extra.substr(2);
      const size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw Error("override must look like --key=value: " + extra);
      apply_override(flat, kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const std::string& kv : overrides) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw Error("override must look like key=value: " + kv);
      apply_override(flat, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed_flag >= 0) flat["seed"] = static_cast<uint64_t>(seed_flag);
    if (!setting_flag.empty()) flat["setting"] = setting_flag;
    if (!mode_flag.empty()) flat["planner.mode"] = mode_flag;
    if (!ablate_flag.empty()) flat["ablate"] = ablate_flag;
    if (!model_flag.empty()) flat["model"] = model_flag;

    const ResolvedConfig cfg = resolve(flat);
    cfg.planner.validate();
    if (!cfg.blocks_task()) cfg.grid.validate();
    if (cfg.blocks_task()) cfg.blocks.validate();

    if (gen->parsed()) {
      if (gen_out.empty()) gen_out = default_out("dataset");
      return cmd_gen_data(cfg, gen_n, gen_out, force);
    }
    if (train->parsed()) {
      if (train_out.empty()) train_out = default_out("train");
      return cmd_train(cfg, train_data, train_out, force, resume);
    }
    if (eval_cmd->parsed()) {
      if (eval_out.empty()) eval_out = default_out("eval");
      return cmd_eval(cfg, eval_ckpt, eval_n, eval_out, force, workers);
    }
    if (render_cmd->parsed()) {
      if (render_out.empty()) render_out = default_out("render");
      return cmd_render(render_in, render_out, force, cell_px);
    }
    if (report_cmd->parsed())
      return cmd_report(report_in, report_out, force, last_plan_only);
    throw Error("no subcommand selected");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) { return run(args); }

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace planpaint
