#pragma once

// Conditional denoising diffusion over plan tensors, with in-painting
// sampling: trajectory/goal channels are denoised from pure noise while the
// observation channels stay clamped to the lifted observation. Includes the
// Adam trainer with warmup+cosine learning rate, per-epoch loss logging, and
// exact-resume checkpoints.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "planpaint/denoiser.hpp"
#include "planpaint/expert.hpp"
#include "planpaint/schedule.hpp"

namespace planpaint {

// ---------------------------------------------------------------------------
// Plan/observation assembly.

// Observation planes for the denoiser from a grid observation (token map plus
// agent and revealed masks) or a blocks state (single scalar plane).
ObsInput obs_input_from_observation(const Observation& obs);
ObsInput obs_input_from_blocks(const BlockState& state);

// Clean plan matrix w0 in {-1,+1}: rows are the T trajectory channels, then
// the goal channel if present; columns are pixels (index y*w + x).
nn::MatX<float> plan_target_from_episode(const Episode& episode,
                                         const DenoiserConfig& cfg);

// ---------------------------------------------------------------------------
// Forward and reverse diffusion kernels (schedule-only; shared by the model
// and the property tests).

// w_k = sqrt(abar_k) w0 + sqrt(1 - abar_k) eps, with abar the cumulative
// product of 1 - beta.
nn::MatX<float> q_sample(const NoiseSchedule& sched, const nn::MatX<float>& w0,
                         int k, const nn::MatX<float>& eps);

// Optional per-step clamp of the implied x0; lo > hi disables it.
struct X0Clamp {
  float lo = 1.0f, hi = 0.0f;  // disabled by default
  bool active() const { return lo <= hi; }
};

// Ancestral DDPM step k -> k-1 in x0-posterior form; the noise draw is
// skipped at k == 1. With the clamp inactive this equals the classic
// epsilon-form mean 1/sqrt(alpha) (wk - beta/sqrt(1-abar) eps_hat).
nn::MatX<float> reverse_step_ddpm(const NoiseSchedule& sched,
                                  const nn::MatX<float>& wk,
                                  const nn::MatX<float>& eps_hat, int k,
                                  Rng& rng, X0Clamp clamp = {});

// DDIM step k -> k_prev (k_prev may skip steps; 0 means fully denoised).
// eta = 0 is deterministic; eta = 1 matches DDPM marginals.
nn::MatX<float> reverse_step_ddim(const NoiseSchedule& sched,
                                  const nn::MatX<float>& wk,
                                  const nn::MatX<float>& eps_hat, int k,
                                  int k_prev, double eta, Rng& rng,
                                  X0Clamp clamp = {});

// ---------------------------------------------------------------------------

enum class SamplerKind { kDdpm, kDdim };

const char* to_string(SamplerKind s);
SamplerKind sampler_from_string(const std::string& s);

struct SampleConfig {
  SamplerKind sampler = SamplerKind::kDdim;
  int steps = 0;     // 0 = walk every schedule step; DDIM may use fewer
  double eta = 0.0;  // DDIM stochasticity
  // Clamp the implied x0 to the data range at every reverse step. Plan
  // rasters live in [-1, 1]; without this the 1/sqrt(alpha_bar) factor at
  // high k amplifies prediction error and the reverse walk leaves the data
  // manifold entirely.
  bool clip_x0 = true;
  float x0_min = -1.0f, x0_max = 1.0f;
};

// Result of one in-painting draw. `full` stacks the clamped observation
// channels over the denoised plan channels, so callers can verify that the
// observation rows were held exactly fixed.
struct PlanSample {
  int height = 0, width = 0, horizon = 0;
  bool has_goal = false;
  int obs_channels = 0;
  nn::MatX<float> full;  // (obs_channels + plan_channels) x N
  nn::MatX<float> plan;  // plan_channels x N

  float tau(int t, int r, int c) const {
    return plan(t, r * width + c);
  }
  float goal(int r, int c) const {
    PP_CHECK(has_goal);
    return plan(horizon, r * width + c);
  }
};

struct TrainConfig {
  int batch_size = 64;
  int epochs = 20;
  double peak_lr = 2e-4;
  int warmup_epochs = 5;
  uint64_t seed = 0;
  int checkpoint_every = 0;      // extra saves every N epochs (0 = final only)
  std::string out_dir;           // checkpoint + loss.csv destination
  bool progress_to_stderr = true;
};

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::map<std::string, nn::MatX<float>> m, v;
};

// Warmup+cosine learning rate for global step `t` (0-based).
double lr_at_step(int64_t t, int64_t warmup_steps, int64_t total_steps,
                  double peak_lr);

class DiffusionModel {
 public:
  DiffusionModel(const DenoiserConfig& cfg, int K, uint64_t seed);

  const DenoiserConfig& config() const { return net_.config(); }
  const NoiseSchedule& schedule() const { return sched_; }
  Denoiser<float>& net() { return net_; }
  uint64_t seed() const { return seed_; }
  int epoch() const { return epoch_; }
  int64_t global_step() const { return global_step_; }

  // Runs epochs [epoch(), tc.epochs) over the dataset, appending one CSV row
  // per epoch to <out_dir>/loss.csv and saving <out_dir>/checkpoint. Returns
  // the final epoch's mean loss. `on_epoch` (optional) observes progress.
  float train(const std::vector<Episode>& episodes, const TrainConfig& tc,
              const std::function<void(int, float)>& on_epoch = {});

  // One in-painting draw conditioned on an observation and instruction.
  PlanSample inpaint_sample(const ObsInput& obs,
                            const std::vector<int32_t>& instr_ids,
                            const SampleConfig& sc, uint64_t sample_seed);

  // Descending diffusion times for a sampler pass (k values in [1, K]).
  std::vector<int> sample_times(const SampleConfig& sc) const;

  void save_checkpoint(const std::string& dir, float last_loss) const;
  static DiffusionModel load_checkpoint(const std::string& dir);

 private:
  // Per-sample loss and gradient accumulation; scale divides the gradient
  // (batch size) so accumulated grads equal the batch-mean gradient.
  float accumulate_sample_grad(const Episode& episode, uint64_t noise_seed,
                               int64_t example_index, float scale);

  NoiseSchedule sched_;
  Denoiser<float> net_;
  uint64_t seed_ = 0;
  int epoch_ = 0;
  int64_t global_step_ = 0;
  AdamState adam_;
  float last_loss_ = -1.0f;
};

}  // namespace planpaint
