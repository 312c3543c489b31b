#include <benchmark/benchmark.h>

#include "planpaint/diffusion.hpp"
#include "planpaint/expert.hpp"
#include "planpaint/planner.hpp"

namespace pp = planpaint;

namespace {

pp::DenoiserConfig small_config() {
  pp::DenoiserConfig d;
  d.height = 8;
  d.width = 8;
  d.horizon = 8;
  d.embed_dim = 8;
  d.text_vocab = pp::default_vocabulary().size();
  d.text_embed_dim = 32;
  d.text_len = pp::kGridTextLen;
  d.depth = 2;
  d.base_channels = {16, 32};
  d.attention_levels = {1};
  d.timestep_embed_dim = 64;
  d.norm_groups = 4;
  d.head_dim = 16;
  return d;
}

pp::Episode small_episode() {
  pp::GridConfig g;
  g.height = 8;
  g.width = 8;
  g.n_objects = 3;
  g.n_obstacles = 4;
  g.object_vocab_size = 8;
  g.setting = pp::Setting::kMO1G;
  pp::EpisodeOptions eo;
  eo.horizon = 8;
  eo.progress_sampling = false;
  return pp::make_episode(g, pp::Setting::kMO1G, 7, eo);
}

void BM_DenoiserForward(benchmark::State& state) {
  const pp::DenoiserConfig d = small_config();
  pp::Denoiser<float> net(d, 1);
  const pp::Episode ep = small_episode();
  const pp::ObsInput obs = pp::obs_input_from_observation(pp::observe(ep.state));
  const Eigen::MatrixXf plan =
      Eigen::MatrixXf::Zero(d.plan_channels(), d.height * d.width);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        net.forward(obs, plan, 10, ep.instruction.token_ids));
  }
}
BENCHMARK(BM_DenoiserForward)->Unit(benchmark::kMillisecond);

void BM_DenoiserBackward(benchmark::State& state) {
  const pp::DenoiserConfig d = small_config();
  pp::Denoiser<float> net(d, 1);
  const pp::Episode ep = small_episode();
  const pp::ObsInput obs = pp::obs_input_from_observation(pp::observe(ep.state));
  const Eigen::MatrixXf plan =
      Eigen::MatrixXf::Zero(d.plan_channels(), d.height * d.width);
  const Eigen::MatrixXf eps =
      net.forward(obs, plan, 10, ep.instruction.token_ids);
  for (auto _ : state) {
    net.zero_grads();
    net.backward(eps);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_DenoiserBackward)->Unit(benchmark::kMillisecond);

void BM_ReverseStepDdim(benchmark::State& state) {
  const pp::NoiseSchedule sched = pp::make_cosine_schedule(100);
  const Eigen::MatrixXf w = Eigen::MatrixXf::Random(9, 64);
  const Eigen::MatrixXf eps_hat = Eigen::MatrixXf::Random(9, 64);
  pp::Rng rng(11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        pp::reverse_step_ddim(sched, w, eps_hat, 50, 40, 0.0, rng));
  }
}
BENCHMARK(BM_ReverseStepDdim);

void BM_AStar(benchmark::State& state) {
  pp::GridConfig g;
  g.setting = pp::Setting::kMO1G;
  pp::EpisodeOptions eo;
  eo.progress_sampling = false;
  const pp::Episode ep = pp::make_episode(g, pp::Setting::kMO1G, 3, eo);
  const auto mask = pp::obstacle_mask_from_tokens(
      pp::observe(ep.state).token_map);
  for (auto _ : state) {
    benchmark::DoNotOptimize(pp::astar(mask, g.height, g.width,
                                       ep.path_cells.front(), ep.goal_cell));
  }
}
BENCHMARK(BM_AStar);

}  // namespace

BENCHMARK_MAIN();
