#include <filesystem>
#include <vector>

#include "doctest.h"
#include "planpaint/baselines.hpp"

namespace pp = planpaint;

namespace {

pp::BCConfig small_bc() {
  pp::BCConfig c;
  c.height = 8;
  c.width = 8;
  c.conv_channels = 8;
  c.fc_width = 24;
  c.epochs = 30;
  c.batch_size = 16;
  c.holdout_frac = 0.1;
  c.seed = 17;
  c.progress_to_stderr = false;
  return c;
}

std::vector<pp::Episode> small_data(int n) {
  pp::GridConfig g;
  g.height = 8;
  g.width = 8;
  g.n_objects = 3;
  g.n_obstacles = 4;
  g.setting = pp::Setting::kMO1G;
  pp::EpisodeOptions eo;
  eo.progress_sampling = false;
  std::vector<pp::Episode> eps;
  for (int i = 0; i < n; ++i)
    eps.push_back(pp::make_episode(g, pp::Setting::kMO1G, 500 + i, eo));
  return eps;
}

}  // namespace

TEST_SUITE("unit") {
  TEST_CASE("bc features stack one-hot planes with agent and revealed") {
    pp::GridConfig g;
    g.height = 8;
    g.width = 8;
    g.setting = pp::Setting::kMO1G;
    const pp::EnvState s = pp::reset(g, 3);
    const pp::Observation obs = pp::observe(s);
    const auto f = pp::BCPolicy::features(obs, 8);
    REQUIRE(f.rows() == pp::kNumReservedTokens + 8 + 2);
    REQUIRE(f.cols() == 64);
    for (int i = 0; i < 64; ++i) {
      // Exactly one token plane is hot per pixel.
      float hot = 0.0f;
      for (int ch = 0; ch < pp::kNumReservedTokens + 8; ++ch)
        hot += f(ch, i);
      CHECK(hot == 1.0f);
    }
    // Agent plane matches the agent map.
    const int agent_row = pp::kNumReservedTokens + 8;
    for (int i = 0; i < 64; ++i)
      CHECK(f(agent_row, i) == static_cast<float>(obs.agent_map[i]));
  }

  TEST_CASE("goal one-hot validates its range") {
    const auto v = pp::BCPolicy::goal_one_hot(pp::kFirstObjectId + 2, 8);
    REQUIRE(v.size() == 8);
    CHECK(v[2] == 1.0f);
    CHECK_THROWS_AS(pp::BCPolicy::goal_one_hot(pp::kFirstObjectId + 8, 8),
                    pp::InvariantError);
  }

  TEST_CASE("bc training fits a small dataset and checkpoints round-trip") {
    const std::string dir = "bc_tmp";
    std::filesystem::remove_all(dir);
    pp::BCConfig cfg = small_bc();
    cfg.out_dir = dir;
    pp::BCPolicy policy(cfg, cfg.seed);
    const auto data = small_data(60);
    const pp::BCTrainResult r = policy.train(data);
    CHECK(r.final_loss < 1.0f);
    CHECK(r.holdout_accuracy > 0.5f);

    // Reloaded policy acts identically on every probe observation.
    const pp::BCPolicy loaded = pp::BCPolicy::load_checkpoint(
        dir + "/checkpoint");
    pp::BCPolicy mutable_loaded = loaded;
    pp::BCPolicy mutable_orig = policy;
    for (const pp::Episode& ep : small_data(10)) {
      const pp::Observation obs = pp::observe(ep.state);
      CHECK(mutable_orig.act(obs, ep.instruction.target_id) ==
            mutable_loaded.act(obs, ep.instruction.target_id));
    }
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("bc rollout respects the step budget and logs the walk") {
    pp::BCConfig cfg = small_bc();
    cfg.epochs = 3;
    cfg.out_dir = "bc_tmp2";
    std::filesystem::remove_all(cfg.out_dir);
    pp::BCPolicy policy(cfg, cfg.seed);
    policy.train(small_data(20));
    const auto probes = small_data(5);
    for (const pp::Episode& ep : probes) {
      const pp::EpisodeLog log = pp::run_bc_episode(policy, ep.state, 12);
      CHECK(log.env_steps <= 12);
      REQUIRE(!log.visited_cells.empty());
      CHECK(log.visited_cells.front() == ep.state.agent_pos);
      CHECK(log.visited_cells.back() == log.final_pos);
      CHECK(log.n_plans() == 0);  // bc never samples plans
    }
    std::filesystem::remove_all(cfg.out_dir);
  }
}
