#include "planpaint/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "planpaint/record_io.hpp"

namespace planpaint {

using json = nlohmann::json;
using MatXf = nn::MatX<float>;

// ---------------------------------------------------------------------------
// Enum names.

const char* to_string(ObsMode m) {
  switch (m) {
    case ObsMode::kTokens: return "tokens";
    case ObsMode::kRawId: return "raw_id";
    case ObsMode::kScalar: return "scalar";
  }
  throw Error("unknown obs mode");
}

ObsMode obs_mode_from_string(const std::string& s) {
  if (s == "tokens") return ObsMode::kTokens;
  if (s == "raw_id") return ObsMode::kRawId;
  if (s == "scalar") return ObsMode::kScalar;
  throw Error("unknown obs mode: " + s);
}

const char* to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::kDdpm: return "ddpm";
    case SamplerKind::kDdim: return "ddim";
  }
  throw Error("unknown sampler");
}

SamplerKind sampler_from_string(const std::string& s) {
  if (s == "ddpm") return SamplerKind::kDdpm;
  if (s == "ddim") return SamplerKind::kDdim;
  throw Error("unknown sampler: " + s);
}

// ---------------------------------------------------------------------------
// Plan/observation assembly.

ObsInput obs_input_from_observation(const Observation& obs) {
  ObsInput in;
  const size_t n = obs.token_map.size();
  PP_CHECK(obs.agent_map.size() == n && obs.revealed.size() == n);
  in.tokens = obs.token_map;
  in.agent.resize(n);
  in.revealed.resize(n);
  for (size_t i = 0; i < n; ++i) {
    in.agent[i] = obs.agent_map[i] ? 1.0f : 0.0f;
    in.revealed[i] = obs.revealed[i] ? 1.0f : 0.0f;
  }
  return in;
}

ObsInput obs_input_from_blocks(const BlockState& state) {
  ObsInput in;
  const Tensor3f t = blocks_observation(state);
  in.scalar.assign(t.data.begin(), t.data.end());
  return in;
}

MatXf plan_target_from_episode(const Episode& episode,
                               const DenoiserConfig& cfg) {
  const PlanRasters r = episode.rasters(cfg.horizon);
  PP_CHECK(r.traj.c == cfg.horizon && r.traj.h == cfg.height &&
           r.traj.w == cfg.width);
  const int n = cfg.height * cfg.width;
  MatXf w0(cfg.plan_channels(), n);
  for (int t = 0; t < cfg.horizon; ++t)
    w0.row(t) = Eigen::Map<const Eigen::RowVectorXf>(r.traj.channel(t), n);
  if (cfg.goal_channel)
    w0.row(cfg.horizon) =
        Eigen::Map<const Eigen::RowVectorXf>(r.goal.channel(0), n);
  return w0;
}

// ---------------------------------------------------------------------------
// Diffusion kernels.

MatXf q_sample(const NoiseSchedule& sched, const MatXf& w0, int k,
               const MatXf& eps) {
  PP_CHECK(k >= 1 && k <= sched.K);
  PP_CHECK(w0.rows() == eps.rows() && w0.cols() == eps.cols());
  const double ab = sched.alpha_bars[k];
  return static_cast<float>(std::sqrt(ab)) * w0 +
         static_cast<float>(std::sqrt(1.0 - ab)) * eps;
}

namespace {

// Implied clean sample, optionally clamped to the data range.
MatXf implied_x0(const NoiseSchedule& sched, const MatXf& wk,
                 const MatXf& eps_hat, int k, X0Clamp clamp) {
  const double ab_k = sched.alpha_bars[k];
  MatXf x0 = (wk - static_cast<float>(std::sqrt(1.0 - ab_k)) * eps_hat) /
             static_cast<float>(std::sqrt(ab_k));
  if (clamp.active())
    x0 = x0.cwiseMax(clamp.lo).cwiseMin(clamp.hi);
  return x0;
}

}  // namespace

MatXf reverse_step_ddpm(const NoiseSchedule& sched, const MatXf& wk,
                        const MatXf& eps_hat, int k, Rng& rng, X0Clamp clamp) {
  PP_CHECK(k >= 1 && k <= sched.K);
  PP_CHECK(wk.rows() == eps_hat.rows() && wk.cols() == eps_hat.cols());
  const double beta = sched.betas[k];
  const double alpha = sched.alphas[k];
  const double ab = sched.alpha_bars[k];
  const double ab_prev = sched.alpha_bars[k - 1];
  const MatXf x0 = implied_x0(sched, wk, eps_hat, k, clamp);
  // Posterior q(w_{k-1} | w_k, x0); equals the classic epsilon-form mean
  // when x0 is unclamped.
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double ck = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab);
  MatXf mean = static_cast<float>(c0) * x0 + static_cast<float>(ck) * wk;
  if (k == 1) return mean;
  const MatXf z = nn::random_normal<float>(static_cast<int>(wk.rows()),
                                           static_cast<int>(wk.cols()), 1.0,
                                           rng);
  return mean + static_cast<float>(std::sqrt(beta)) * z;
}

MatXf reverse_step_ddim(const NoiseSchedule& sched, const MatXf& wk,
                        const MatXf& eps_hat, int k, int k_prev, double eta,
                        Rng& rng, X0Clamp clamp) {
  PP_CHECK(k >= 1 && k <= sched.K && k_prev >= 0 && k_prev < k);
  PP_CHECK(wk.rows() == eps_hat.rows() && wk.cols() == eps_hat.cols());
  const double ab_k = sched.alpha_bars[k];
  const double ab_prev = k_prev == 0 ? 1.0 : sched.alpha_bars[k_prev];
  const MatXf x0 = implied_x0(sched, wk, eps_hat, k, clamp);
  // Clamping moves x0 off the line through (wk, eps_hat); the direction term
  // must use the noise consistent with the clamped x0 or the step drifts.
  const MatXf eps_dir =
      clamp.active()
          ? MatXf((wk - static_cast<float>(std::sqrt(ab_k)) * x0) /
                  static_cast<float>(std::sqrt(1.0 - ab_k)))
          : eps_hat;
  const double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_k)) *
                       std::sqrt(1.0 - ab_k / ab_prev);
  const double dir_coef =
      std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  MatXf out = static_cast<float>(std::sqrt(ab_prev)) * x0 +
              static_cast<float>(dir_coef) * eps_dir;
  if (sigma > 0.0) {
    const MatXf z = nn::random_normal<float>(static_cast<int>(wk.rows()),
                                             static_cast<int>(wk.cols()), 1.0,
                                             rng);
    out += static_cast<float>(sigma) * z;
  }
  return out;
}

// ---------------------------------------------------------------------------

double lr_at_step(int64_t t, int64_t warmup_steps, int64_t total_steps,
                  double peak_lr) {
  PP_CHECK(total_steps >= 1 && t >= 0 && warmup_steps >= 0);
  if (warmup_steps > 0 && t < warmup_steps)
    return peak_lr * static_cast<double>(t + 1) /
           static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return peak_lr;
  const double p = static_cast<double>(t - warmup_steps) /
                   static_cast<double>(total_steps - warmup_steps);
  return 0.5 * peak_lr * (1.0 + std::cos(M_PI * std::min(1.0, p)));
}

// ---------------------------------------------------------------------------
// DenoiserConfig JSON (private; nlohmann stays out of installed headers).

namespace {

json denoiser_config_to_json(const DenoiserConfig& c) {
  return json{{"height", c.height},
              {"width", c.width},
              {"horizon", c.horizon},
              {"goal_channel", c.goal_channel},
              {"obs_mode", to_string(c.obs_mode)},
              {"object_vocab", c.object_vocab},
              {"embed_dim", c.embed_dim},
              {"text_vocab", c.text_vocab},
              {"text_embed_dim", c.text_embed_dim},
              {"text_len", c.text_len},
              {"depth", c.depth},
              {"base_channels", c.base_channels},
              {"attention_levels", c.attention_levels},
              {"timestep_embed_dim", c.timestep_embed_dim},
              {"norm_groups", c.norm_groups},
              {"head_dim", c.head_dim}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
  DenoiserConfig c;
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.horizon = j.at("horizon").get<int>();
  c.goal_channel = j.at("goal_channel").get<bool>();
  c.obs_mode = obs_mode_from_string(j.at("obs_mode").get<std::string>());
  c.object_vocab = j.at("object_vocab").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.text_vocab = j.at("text_vocab").get<int>();
  c.text_embed_dim = j.at("text_embed_dim").get<int>();
  c.text_len = j.at("text_len").get<int>();
  c.depth = j.at("depth").get<int>();
  c.base_channels = j.at("base_channels").get<std::vector<int>>();
  c.attention_levels = j.at("attention_levels").get<std::vector<int>>();
  c.timestep_embed_dim = j.at("timestep_embed_dim").get<int>();
  c.norm_groups = j.at("norm_groups").get<int>();
  c.head_dim = j.at("head_dim").get<int>();
  return c;
}

ArrayData mat_to_array(const std::string& name, const MatXf& m) {
  std::vector<float> values(static_cast<size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>>(values.data(), m.rows(),
                                             m.cols()) = m;
  return ArrayData::make_f32(name, {m.rows(), m.cols()}, std::move(values));
}

MatXf array_to_mat(const ArrayData& a) {
  PP_CHECK_MSG(a.dtype == "f32" && a.shape.size() == 2,
               "checkpoint tensor must be a 2-D f32 array");
  MatXf m(a.shape[0], a.shape[1]);
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      src(a.f32.data(), a.shape[0], a.shape[1]);
  m = src;
  return m;
}

void adam_step(Denoiser<float>& net, AdamState& st, double lr) {
  ++st.t;
  const float b1 = static_cast<float>(st.beta1);
  const float b2 = static_cast<float>(st.beta2);
  const float bc1 =
      1.0f - static_cast<float>(std::pow(st.beta1, static_cast<double>(st.t)));
  const float bc2 =
      1.0f - static_cast<float>(std::pow(st.beta2, static_cast<double>(st.t)));
  const float lrf = static_cast<float>(lr);
  const float epsf = static_cast<float>(st.eps);
  net.visit_params([&](const std::string& name, MatXf& w, MatXf& g) {
    MatXf& m = st.m[name];
    MatXf& v = st.v[name];
    if (m.size() == 0) {
      m = MatXf::Zero(w.rows(), w.cols());
      v = MatXf::Zero(w.rows(), w.cols());
    }
    m = b1 * m + (1.0f - b1) * g;
    v = (b2 * v.array() + (1.0f - b2) * g.array().square()).matrix();
    w.array() -= lrf * (m.array() / bc1) / ((v.array() / bc2).sqrt() + epsf);
  });
}

}  // namespace

// ---------------------------------------------------------------------------

DiffusionModel::DiffusionModel(const DenoiserConfig& cfg, int K, uint64_t seed)
    : sched_(make_cosine_schedule(K)), net_(cfg, seed), seed_(seed) {}

float DiffusionModel::accumulate_sample_grad(const Episode& episode,
                                             uint64_t noise_seed,
                                             int64_t example_index,
                                             float scale) {
  const DenoiserConfig& cfg = net_.config();
  const ObsInput obs =
      episode.is_blocks() ? obs_input_from_blocks(episode.block_state)
                          : obs_input_from_observation(observe(episode.state));
  const MatXf w0 = plan_target_from_episode(episode, cfg);
  PP_CHECK(static_cast<int>(episode.instruction.token_ids.size()) ==
           cfg.text_len);

  Rng rng(derive_seed(noise_seed, "noise", static_cast<uint64_t>(global_step_),
                      static_cast<uint64_t>(example_index)));
  const int k = 1 + static_cast<int>(rng.next_below(
                        static_cast<uint64_t>(sched_.K)));
  const MatXf eps = nn::random_normal<float>(static_cast<int>(w0.rows()),
                                             static_cast<int>(w0.cols()), 1.0,
                                             rng);
  const MatXf wk = q_sample(sched_, w0, k, eps);
  const MatXf eps_hat =
      net_.forward(obs, wk, k, episode.instruction.token_ids);
  const MatXf diff = eps_hat - eps;
  const float numel = static_cast<float>(diff.size());
  const float loss = diff.squaredNorm() / numel;
  net_.backward(diff * (2.0f * scale / numel));
  return loss;
}

float DiffusionModel::train(const std::vector<Episode>& episodes,
                            const TrainConfig& tc,
                            const std::function<void(int, float)>& on_epoch) {
  PP_CHECK_MSG(!episodes.empty(), "training set is empty");
  PP_CHECK(tc.batch_size >= 1 && tc.epochs >= 1);
  const int n = static_cast<int>(episodes.size());
  const int64_t steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const int64_t total_steps = steps_per_epoch * tc.epochs;
  const int64_t warmup_steps =
      steps_per_epoch * std::min<int64_t>(tc.warmup_epochs, tc.epochs);

  std::ofstream csv;
  if (!tc.out_dir.empty()) {
    std::filesystem::create_directories(tc.out_dir);
    const std::string csv_path = tc.out_dir + "/loss.csv";
    const bool fresh = epoch_ == 0 || !std::filesystem::exists(csv_path);
    csv.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
    PP_CHECK_MSG(csv.good(), "cannot open " + csv_path);
    if (fresh) csv << "epoch,loss,lr\n";
  }

  const int64_t base_null_evals = net_.null_instruction_evals();
  float epoch_loss = last_loss_;
  for (; epoch_ < tc.epochs;) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(
        derive_seed(tc.seed, "shuffle", static_cast<uint64_t>(epoch_)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    double last_lr = 0.0;
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const int begin = static_cast<int>(s) * tc.batch_size;
      const int bsz = std::min(tc.batch_size, n - begin);
      net_.zero_grads();
      double batch_loss = 0.0;
      for (int i = 0; i < bsz; ++i) {
        const int idx = order[begin + i];
        batch_loss += accumulate_sample_grad(episodes[idx], tc.seed, idx,
                                             1.0f / static_cast<float>(bsz));
      }
      batch_loss /= bsz;
      last_lr = lr_at_step(global_step_, warmup_steps, total_steps,
                           tc.peak_lr);
      adam_step(net_, adam_, last_lr);
      ++global_step_;
      loss_sum += batch_loss;
    }
    epoch_loss = static_cast<float>(loss_sum / steps_per_epoch);
    ++epoch_;
    last_loss_ = epoch_loss;
    if (csv.is_open()) {
      char row[96];
      std::snprintf(row, sizeof(row), "%d,%.8f,%.8g\n", epoch_,
                    static_cast<double>(epoch_loss), last_lr);
      csv << row;
      csv.flush();
    }
    if (tc.progress_to_stderr)
      std::fprintf(stderr, "[train] epoch %d/%d loss %.5f lr %.3g\n", epoch_,
                   tc.epochs, static_cast<double>(epoch_loss), last_lr);
    // Persist before notifying so an interrupting observer still finds the
    // epoch it was told about on disk.
    if (!tc.out_dir.empty() &&
        ((tc.checkpoint_every > 0 && epoch_ % tc.checkpoint_every == 0) ||
         epoch_ == tc.epochs))
      save_checkpoint(tc.out_dir + "/checkpoint", epoch_loss);
    if (on_epoch) on_epoch(epoch_, epoch_loss);
  }
  PP_CHECK_MSG(net_.null_instruction_evals() == base_null_evals,
               "training must never evaluate a nulled instruction");
  return epoch_loss;
}

std::vector<int> DiffusionModel::sample_times(const SampleConfig& sc) const {
  const int K = sched_.K;
  const int steps = sc.steps <= 0 ? K : std::min(sc.steps, K);
  std::vector<int> ks;
  if (steps >= K) {
    for (int k = K; k >= 1; --k) ks.push_back(k);
    return ks;
  }
  if (steps == 1) return {K};
  for (int i = steps - 1; i >= 0; --i) {
    const int k =
        1 + static_cast<int>(std::llround(static_cast<double>(i) * (K - 1) /
                                          (steps - 1)));
    if (ks.empty() || ks.back() != k) ks.push_back(k);
  }
  return ks;
}

PlanSample DiffusionModel::inpaint_sample(const ObsInput& obs,
                                          const std::vector<int32_t>& instr_ids,
                                          const SampleConfig& sc,
                                          uint64_t sample_seed) {
  const DenoiserConfig& cfg = net_.config();
  const int n = cfg.height * cfg.width;
  const int pc = cfg.plan_channels();
  if (sc.sampler == SamplerKind::kDdpm)
    PP_CHECK_MSG(sc.steps <= 0 || sc.steps >= sched_.K,
                 "ancestral sampling requires the full schedule");

  Rng rng(derive_seed(sample_seed, "sample"));
  const MatXf lift = net_.lift_observation(obs);
  MatXf w = nn::random_normal<float>(pc, n, 1.0, rng);
  const std::vector<int> ks = sample_times(sc);
  const X0Clamp clamp =
      sc.clip_x0 ? X0Clamp{sc.x0_min, sc.x0_max} : X0Clamp{};
  for (size_t j = 0; j < ks.size(); ++j) {
    const int k = ks[j];
    const int k_prev = j + 1 < ks.size() ? ks[j + 1] : 0;
    const MatXf eps_hat = net_.forward(obs, w, k, instr_ids);
    if (sc.sampler == SamplerKind::kDdpm)
      w = reverse_step_ddpm(sched_, w, eps_hat, k, rng, clamp);
    else
      w = reverse_step_ddim(sched_, w, eps_hat, k, k_prev, sc.eta, rng, clamp);
  }

  PlanSample out;
  out.height = cfg.height;
  out.width = cfg.width;
  out.horizon = cfg.horizon;
  out.has_goal = cfg.goal_channel;
  out.obs_channels = cfg.obs_channels();
  out.full.resize(cfg.in_channels(), n);
  out.full.topRows(out.obs_channels) = lift;
  out.full.bottomRows(pc) = w;
  out.plan = std::move(w);
  return out;
}

void DiffusionModel::save_checkpoint(const std::string& dir,
                                     float last_loss) const {
  std::filesystem::create_directories(dir);
  json manifest{{"format_version", 1},
                {"kind", "diffusion"},
                {"K", sched_.K},
                {"seed", seed_},
                {"epoch", epoch_},
                {"global_step", global_step_},
                {"adam_t", adam_.t},
                {"last_loss", last_loss},
                {"config", denoiser_config_to_json(net_.config())}};
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");

  std::vector<Record> records;
  // visit_params takes a non-const visitor; saving does not mutate.
  auto& net = const_cast<Denoiser<float>&>(net_);
  auto& adam = const_cast<AdamState&>(adam_);
  net.visit_params([&](const std::string& name, MatXf& wmat, MatXf&) {
    Record r;
    r.arrays.push_back(mat_to_array(name, wmat));
    MatXf& m = adam.m[name];
    MatXf& v = adam.v[name];
    if (m.size() == 0) {
      m = MatXf::Zero(wmat.rows(), wmat.cols());
      v = MatXf::Zero(wmat.rows(), wmat.cols());
    }
    r.arrays.push_back(mat_to_array("adam_m." + name, m));
    r.arrays.push_back(mat_to_array("adam_v." + name, v));
    records.push_back(std::move(r));
  });
  write_records(dir + "/weights.bin", records);
}

DiffusionModel DiffusionModel::load_checkpoint(const std::string& dir) {
  const json manifest = json::parse(read_text_file(dir + "/manifest.json"));
  PP_CHECK_MSG(manifest.at("format_version").get<int>() == 1,
               "unsupported checkpoint format version");
  PP_CHECK_MSG(manifest.at("kind").get<std::string>() == "diffusion",
               "checkpoint is not a diffusion model");
  const DenoiserConfig cfg = denoiser_config_from_json(manifest.at("config"));
  DiffusionModel model(cfg, manifest.at("K").get<int>(),
                       manifest.at("seed").get<uint64_t>());
  model.epoch_ = manifest.at("epoch").get<int>();
  model.global_step_ = manifest.at("global_step").get<int64_t>();
  model.adam_.t = manifest.at("adam_t").get<int64_t>();
  model.last_loss_ = manifest.at("last_loss").get<float>();

  const std::vector<Record> records = read_records(dir + "/weights.bin");
  std::map<std::string, const ArrayData*> by_name;
  for (const Record& r : records)
    for (const ArrayData& a : r.arrays) by_name[a.name] = &a;

  size_t used = 0;
  model.net_.visit_params([&](const std::string& name, MatXf& w, MatXf&) {
    const auto it = by_name.find(name);
    PP_CHECK_MSG(it != by_name.end(), "checkpoint missing tensor " + name);
    const MatXf loaded = array_to_mat(*it->second);
    PP_CHECK_MSG(loaded.rows() == w.rows() && loaded.cols() == w.cols(),
                 "checkpoint tensor shape mismatch for " + name);
    w = loaded;
    ++used;
    const auto mit = by_name.find("adam_m." + name);
    const auto vit = by_name.find("adam_v." + name);
    PP_CHECK_MSG(mit != by_name.end() && vit != by_name.end(),
                 "checkpoint missing optimizer state for " + name);
    model.adam_.m[name] = array_to_mat(*mit->second);
    model.adam_.v[name] = array_to_mat(*vit->second);
    used += 2;
  });
  PP_CHECK_MSG(used == by_name.size(),
               "checkpoint contains unexpected extra tensors");
  return model;
}

}  // namespace planpaint
