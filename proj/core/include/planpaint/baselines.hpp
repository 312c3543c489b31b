#pragma once

// Behavioral-cloning baseline: two strided convolutions and two fully
// connected layers over the observation, with the goal one-hot concatenated
// just before the final layer; trained by cross-entropy on expert actions.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "planpaint/expert.hpp"
#include "planpaint/nn.hpp"
#include "planpaint/planner.hpp"

namespace planpaint {

struct BCConfig {
  int height = 16;
  int width = 16;
  int object_vocab_size = 8;
  int conv_channels = 16;
  int fc_width = 40;
  double lr = 1e-3;
  int epochs = 10;
  int batch_size = 64;
  double holdout_frac = 0.1;  // held-out action accuracy for early stopping
  uint64_t seed = 0;
  std::string out_dir;
  bool progress_to_stderr = true;

  int in_channels() const {
    return kNumReservedTokens + object_vocab_size + 2;
  }
  void validate() const {
    PP_CHECK(height >= 4 && width >= 4 && height % 4 == 0 && width % 4 == 0);
    PP_CHECK(object_vocab_size >= 1 && conv_channels >= 1 && fc_width >= 1);
    PP_CHECK(lr > 0 && epochs >= 1 && batch_size >= 1);
    PP_CHECK(holdout_frac >= 0.0 && holdout_frac < 1.0);
  }
};

struct BCTrainResult {
  float final_loss = 0.0f;
  float train_accuracy = 0.0f;
  float holdout_accuracy = 0.0f;
  int best_epoch = 0;
};

class BCPolicy {
 public:
  BCPolicy(const BCConfig& cfg, uint64_t init_seed);

  const BCConfig& config() const { return cfg_; }

  // One-hot token planes plus agent and revealed masks, (in_channels x N).
  static nn::MatX<float> features(const Observation& obs,
                                  int object_vocab_size);
  // Goal identity one-hot over the object vocabulary.
  static std::vector<float> goal_one_hot(int32_t target_id,
                                         int object_vocab_size);

  // Action logits; caches activations for backward.
  nn::VecX<float> forward(const nn::MatX<float>& feats,
                          const std::vector<float>& goal);
  void backward(const nn::VecX<float>& dlogits);
  void zero_grads();
  void visit_params(const nn::ParamVisitor<float>& fn);

  // Greedy action; ties break to the smallest action index.
  Action act(const Observation& obs, int32_t target_id);

  // Cross-entropy training over per-step expert tuples replayed from the
  // episodes. Deterministic per config seed; appends loss.csv rows and keeps
  // the epoch with the best held-out action accuracy.
  BCTrainResult train(const std::vector<Episode>& episodes);

  void save_checkpoint(const std::string& dir) const;
  static BCPolicy load_checkpoint(const std::string& dir);

 private:
  BCConfig cfg_;
  nn::Conv<float> conv1_, conv2_;
  nn::SiLU<float> act1_, act2_, act3_;
  nn::Linear<float> fc1_, fc2_;
  std::vector<float> goal_cache_;
  Eigen::Index fm_rows_ = 0, fm_cols_ = 0;
};

// Greedy rollout for evaluation; budget is max_env_steps.
EpisodeLog run_bc_episode(BCPolicy& policy, const EnvState& start,
                          int max_env_steps);

}  // namespace planpaint
