#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "planpaint/diffusion.hpp"
#include "planpaint/expert.hpp"

namespace pp = planpaint;
using Eigen::MatrixXf;

namespace {

MatrixXf random_mat(int r, int c, pp::Rng& rng) {
  MatrixXf m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<float>(rng.next_normal());
  return m;
}

pp::DenoiserConfig tiny_grid_config() {
  pp::DenoiserConfig d;
  d.height = 8;
  d.width = 8;
  d.horizon = 4;
  d.obs_mode = pp::ObsMode::kTokens;
  d.object_vocab = pp::kNumReservedTokens + 8;
  d.embed_dim = 4;
  d.text_vocab = static_cast<int>(pp::default_vocabulary().size());
  d.text_embed_dim = 8;
  d.text_len = pp::kGridTextLen;
  d.depth = 2;
  d.base_channels = {8, 16};
  d.attention_levels = {1};
  d.timestep_embed_dim = 16;
  d.norm_groups = 4;
  d.head_dim = 8;
  return d;
}

pp::Episode tiny_episode(uint64_t seed) {
  pp::GridConfig g;
  g.height = 8;
  g.width = 8;
  g.n_objects = 3;
  g.n_obstacles = 5;
  g.setting = pp::Setting::kMO1G;
  pp::EpisodeOptions eo;
  eo.horizon = 4;
  return pp::make_episode(g, pp::Setting::kMO1G, seed, eo);
}

}  // namespace

TEST_SUITE("properties") {
  // The forward kernel must be exactly invertible: w0 recovered from
  // (w_k, eps, k) by the closed form must match the original within 1e-3
  // (float arithmetic).
  TEST_CASE("q_sample inversion oracle over 50 tensors") {
    const pp::NoiseSchedule s = pp::make_cosine_schedule(100);
    pp::Rng rng(pp::derive_seed(1, "qsample_oracle"));
    for (int trial = 0; trial < 50; ++trial) {
      const int rows = 2 + static_cast<int>(rng.next_below(6));
      const int cols = 4 + static_cast<int>(rng.next_below(60));
      const int k = 1 + static_cast<int>(rng.next_below(100));
      const MatrixXf w0 = random_mat(rows, cols, rng);
      const MatrixXf eps = random_mat(rows, cols, rng);
      const MatrixXf wk = pp::q_sample(s, w0, k, eps);
      const double ab = s.alpha_bars[k];
      const MatrixXf rec =
          (wk - static_cast<float>(std::sqrt(1.0 - ab)) * eps) /
          static_cast<float>(std::sqrt(ab));
      CAPTURE(trial);
      CAPTURE(k);
      CHECK((rec - w0).cwiseAbs().maxCoeff() <= 1e-3f);
    }
  }

  // In-painting must hold every observation row bit-for-bit fixed across the
  // whole reverse walk, for any (observation, instruction, seed) triple.
  TEST_CASE("inpainting holds observation channels exactly, 100 triples") {
    const pp::DenoiserConfig d = tiny_grid_config();
    pp::DiffusionModel model(d, 20, 5);
    pp::SampleConfig sc;
    sc.sampler = pp::SamplerKind::kDdim;
    sc.steps = 3;
    for (uint64_t trial = 0; trial < 100; ++trial) {
      const pp::Episode ep = tiny_episode(1000 + trial);
      const pp::ObsInput obs =
          pp::obs_input_from_observation(pp::observe(ep.state));
      const pp::PlanSample ps =
          model.inpaint_sample(obs, ep.instruction.token_ids, sc, trial);
      const MatrixXf lift = model.net().lift_observation(obs);
      REQUIRE(ps.full.rows() == lift.rows() + ps.plan.rows());
      CAPTURE(trial);
      CHECK(ps.full.topRows(lift.rows()) == lift);  // exact, no tolerance
      CHECK(ps.full.bottomRows(ps.plan.rows()) == ps.plan);
      for (Eigen::Index i = 0; i < ps.plan.size(); ++i)
        REQUIRE(std::isfinite(ps.plan.data()[i]));
      // The default sampler clamps the implied x0, and the last hop returns
      // it, so every finished plan lies inside the raster data range.
      CHECK(ps.plan.minCoeff() >= -1.0f);
      CHECK(ps.plan.maxCoeff() <= 1.0f);
    }
  }
}

TEST_SUITE("unit") {
  TEST_CASE("ddpm reverse step: k=1 is the deterministic posterior mean") {
    const pp::NoiseSchedule s = pp::make_cosine_schedule(50);
    pp::Rng drng(3);
    const MatrixXf wk = random_mat(3, 10, drng);
    const MatrixXf eh = random_mat(3, 10, drng);
    pp::Rng step_rng(7);
    const MatrixXf out = pp::reverse_step_ddpm(s, wk, eh, 1, step_rng);
    const double beta = s.betas[1], alpha = s.alphas[1],
                 ab = s.alpha_bars[1];
    const MatrixXf expect =
        static_cast<float>(1.0 / std::sqrt(alpha)) *
        (wk - static_cast<float>(beta / std::sqrt(1.0 - ab)) * eh);
    CHECK((out - expect).cwiseAbs().maxCoeff() <= 1e-6f);
    // k == 1 must not consume randomness.
    pp::Rng fresh(7);
    CHECK(step_rng.next_u64() == fresh.next_u64());
  }

  TEST_CASE("ddpm reverse step: k>1 decomposes into mean + sqrt(beta) z") {
    const pp::NoiseSchedule s = pp::make_cosine_schedule(50);
    pp::Rng drng(4);
    const MatrixXf wk = random_mat(3, 10, drng);
    const MatrixXf eh = random_mat(3, 10, drng);
    const int k = 20;
    pp::Rng step_rng(9);
    const MatrixXf out = pp::reverse_step_ddpm(s, wk, eh, k, step_rng);
    const double beta = s.betas[k], alpha = s.alphas[k],
                 ab = s.alpha_bars[k];
    const MatrixXf mean =
        static_cast<float>(1.0 / std::sqrt(alpha)) *
        (wk - static_cast<float>(beta / std::sqrt(1.0 - ab)) * eh);
    pp::Rng twin(9);
    const MatrixXf z = pp::nn::random_normal<float>(3, 10, 1.0, twin);
    const MatrixXf expect = mean + static_cast<float>(std::sqrt(beta)) * z;
    CHECK((out - expect).cwiseAbs().maxCoeff() <= 1e-6f);
  }

  TEST_CASE("ddim eta=0 oracle and rng frugality") {
    const pp::NoiseSchedule s = pp::make_cosine_schedule(50);
    pp::Rng drng(5);
    const MatrixXf wk = random_mat(4, 9, drng);
    const MatrixXf eh = random_mat(4, 9, drng);
    const int k = 30, k_prev = 17;
    pp::Rng step_rng(11);
    const MatrixXf out = pp::reverse_step_ddim(s, wk, eh, k, k_prev, 0.0,
                                               step_rng);
    const double ab = s.alpha_bars[k], abp = s.alpha_bars[k_prev];
    const MatrixXf x0 = (wk - static_cast<float>(std::sqrt(1.0 - ab)) * eh) /
                        static_cast<float>(std::sqrt(ab));
    const MatrixXf expect = static_cast<float>(std::sqrt(abp)) * x0 +
                            static_cast<float>(std::sqrt(1.0 - abp)) * eh;
    CHECK((out - expect).cwiseAbs().maxCoeff() <= 1e-5f);
    pp::Rng fresh(11);
    CHECK(step_rng.next_u64() == fresh.next_u64());  // eta=0 draws nothing

    // Final hop k_prev = 0 returns the clean x0 prediction.
    pp::Rng r2(12);
    const MatrixXf last = pp::reverse_step_ddim(s, wk, eh, k, 0, 0.0, r2);
    CHECK((last - x0).cwiseAbs().maxCoeff() <= 1e-5f);
  }

  TEST_CASE("ddim eta>0 adds exactly sigma z") {
    const pp::NoiseSchedule s = pp::make_cosine_schedule(50);
    pp::Rng drng(6);
    const MatrixXf wk = random_mat(2, 12, drng);
    const MatrixXf eh = random_mat(2, 12, drng);
    const int k = 40, k_prev = 25;
    const double eta = 0.7;
    pp::Rng step_rng(13);
    const MatrixXf out =
        pp::reverse_step_ddim(s, wk, eh, k, k_prev, eta, step_rng);
    const double ab = s.alpha_bars[k], abp = s.alpha_bars[k_prev];
    const double sigma = eta * std::sqrt((1.0 - abp) / (1.0 - ab)) *
                         std::sqrt(1.0 - ab / abp);
    const MatrixXf x0 = (wk - static_cast<float>(std::sqrt(1.0 - ab)) * eh) /
                        static_cast<float>(std::sqrt(ab));
    pp::Rng twin(13);
    const MatrixXf z = pp::nn::random_normal<float>(2, 12, 1.0, twin);
    const MatrixXf expect =
        static_cast<float>(std::sqrt(abp)) * x0 +
        static_cast<float>(std::sqrt(std::max(0.0, 1.0 - abp - sigma * sigma))) *
            eh +
        static_cast<float>(sigma) * z;
    CHECK((out - expect).cwiseAbs().maxCoeff() <= 1e-5f);
  }

  TEST_CASE("ddpm reverse step clamps the implied x0 to the data range") {
    const pp::NoiseSchedule s = pp::make_cosine_schedule(50);
    pp::Rng drng(21);
    // Large wk makes the implied x0 wildly out of [0,1] at high k.
    const MatrixXf wk = 10.0f * random_mat(3, 8, drng);
    const MatrixXf eh = random_mat(3, 8, drng);
    const int k = 45;
    const pp::X0Clamp clamp{0.0f, 1.0f};
    pp::Rng step_rng(22);
    const MatrixXf out = pp::reverse_step_ddpm(s, wk, eh, k, step_rng, clamp);

    const double beta = s.betas[k], alpha = s.alphas[k],
                 ab = s.alpha_bars[k], abp = s.alpha_bars[k - 1];
    const MatrixXf x0_raw =
        (wk - static_cast<float>(std::sqrt(1.0 - ab)) * eh) /
        static_cast<float>(std::sqrt(ab));
    REQUIRE(x0_raw.cwiseAbs().maxCoeff() > 1.0f);  // the clamp must engage
    const MatrixXf x0 = x0_raw.cwiseMax(0.0f).cwiseMin(1.0f);
    pp::Rng twin(22);
    const MatrixXf z = pp::nn::random_normal<float>(3, 8, 1.0, twin);
    const MatrixXf expect =
        static_cast<float>(std::sqrt(abp) * beta / (1.0 - ab)) * x0 +
        static_cast<float>(std::sqrt(alpha) * (1.0 - abp) / (1.0 - ab)) * wk +
        static_cast<float>(std::sqrt(beta)) * z;
    CHECK((out - expect).cwiseAbs().maxCoeff() <= 1e-5f);

    // And the clamp genuinely changes the step.
    pp::Rng r2(22);
    const MatrixXf unclamped = pp::reverse_step_ddpm(s, wk, eh, k, r2);
    CHECK((out - unclamped).cwiseAbs().maxCoeff() > 1e-3f);
  }

  TEST_CASE("ddim reverse step clamps x0 and re-derives the direction noise") {
    const pp::NoiseSchedule s = pp::make_cosine_schedule(50);
    pp::Rng drng(23);
    const MatrixXf wk = 10.0f * random_mat(4, 6, drng);
    const MatrixXf eh = random_mat(4, 6, drng);
    const int k = 40, k_prev = 18;
    const pp::X0Clamp clamp{0.0f, 1.0f};
    pp::Rng step_rng(24);
    const MatrixXf out =
        pp::reverse_step_ddim(s, wk, eh, k, k_prev, 0.0, step_rng, clamp);

    const double ab = s.alpha_bars[k], abp = s.alpha_bars[k_prev];
    const MatrixXf x0_raw =
        (wk - static_cast<float>(std::sqrt(1.0 - ab)) * eh) /
        static_cast<float>(std::sqrt(ab));
    REQUIRE(x0_raw.cwiseAbs().maxCoeff() > 1.0f);
    const MatrixXf x0 = x0_raw.cwiseMax(0.0f).cwiseMin(1.0f);
    const MatrixXf eps_dir =
        (wk - static_cast<float>(std::sqrt(ab)) * x0) /
        static_cast<float>(std::sqrt(1.0 - ab));
    const MatrixXf expect = static_cast<float>(std::sqrt(abp)) * x0 +
                            static_cast<float>(std::sqrt(1.0 - abp)) * eps_dir;
    CHECK((out - expect).cwiseAbs().maxCoeff() <= 1e-5f);

    // Final hop returns the clamped x0 exactly.
    pp::Rng r2(25);
    const MatrixXf last =
        pp::reverse_step_ddim(s, wk, eh, k, 0, 0.0, r2, clamp);
    CHECK((last - x0).cwiseAbs().maxCoeff() <= 1e-6f);
    CHECK(last.minCoeff() >= 0.0f);
    CHECK(last.maxCoeff() <= 1.0f);
  }

  TEST_CASE("sample_times walks the schedule as promised") {
    const pp::DenoiserConfig d = tiny_grid_config();
    const pp::DiffusionModel model(d, 100, 1);
    pp::SampleConfig sc;
    sc.steps = 0;
    auto full = model.sample_times(sc);
    REQUIRE(full.size() == 100);
    CHECK(full.front() == 100);
    CHECK(full.back() == 1);
    for (size_t i = 1; i < full.size(); ++i)
      CHECK(full[i] == full[i - 1] - 1);

    sc.steps = 1;
    const auto one = model.sample_times(sc);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == 100);

    sc.steps = 10;
    const auto ten = model.sample_times(sc);
    REQUIRE(ten.size() == 10);
    CHECK(ten.front() == 100);
    CHECK(ten.back() == 1);
    for (size_t i = 1; i < ten.size(); ++i) CHECK(ten[i] < ten[i - 1]);

    sc.steps = 1000;  // more than K collapses to the full walk
    CHECK(model.sample_times(sc) == full);
  }

  TEST_CASE("warmup+cosine learning rate frozen points") {
    const double peak = 2e-4;
    CHECK(pp::lr_at_step(0, 10, 100, peak) == doctest::Approx(2e-5));
    CHECK(pp::lr_at_step(9, 10, 100, peak) == doctest::Approx(peak));
    CHECK(pp::lr_at_step(55, 10, 100, peak) == doctest::Approx(peak / 2));
    CHECK(pp::lr_at_step(100, 10, 100, peak) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pp::lr_at_step(5, 10, 8, peak) == doctest::Approx(peak * 0.6));
  }

  TEST_CASE("checkpoint round-trips to bit-identical predictions") {
    const std::string dir = "ckpt_roundtrip_tmp";
    std::filesystem::remove_all(dir);
    const pp::DenoiserConfig d = tiny_grid_config();
    pp::DiffusionModel model(d, 20, 42);
    model.save_checkpoint(dir, 0.5f);
    pp::DiffusionModel loaded = pp::DiffusionModel::load_checkpoint(dir);

    const pp::Episode ep = tiny_episode(77);
    const pp::ObsInput obs =
        pp::obs_input_from_observation(pp::observe(ep.state));
    pp::Rng prng(8);
    const MatrixXf plan = random_mat(d.plan_channels(), 64, prng);
    const MatrixXf a =
        model.net().forward(obs, plan, 7, ep.instruction.token_ids);
    const MatrixXf b =
        loaded.net().forward(obs, plan, 7, ep.instruction.token_ids);
    CHECK(a == b);
    CHECK(loaded.epoch() == model.epoch());
    CHECK(loaded.global_step() == model.global_step());
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("training resume reproduces the uninterrupted run") {
    std::filesystem::remove_all("resume_a");
    std::filesystem::remove_all("resume_b");
    std::vector<pp::Episode> data;
    for (uint64_t i = 0; i < 8; ++i) data.push_back(tiny_episode(300 + i));

    pp::TrainConfig tc;
    tc.batch_size = 4;
    tc.warmup_epochs = 1;
    tc.epochs = 3;
    tc.checkpoint_every = 2;
    tc.seed = 21;
    tc.progress_to_stderr = false;

    // Uninterrupted: 3 epochs.
    pp::DiffusionModel a(tiny_grid_config(), 20, 21);
    tc.out_dir = "resume_a";
    const float loss_a = a.train(data, tc);

    // Interrupted mid-run (same config!) after the epoch-2 checkpoint lands,
    // then reloaded and continued.
    struct Interrupt {};
    pp::DiffusionModel b0(tiny_grid_config(), 20, 21);
    tc.out_dir = "resume_b";
    CHECK_THROWS_AS(b0.train(data, tc,
                             [](int epoch, float) {
                               if (epoch == 2) throw Interrupt{};
                             }),
                    Interrupt);
    pp::DiffusionModel b =
        pp::DiffusionModel::load_checkpoint("resume_b/checkpoint");
    CHECK(b.epoch() == 2);
    const float loss_b = b.train(data, tc);

    CHECK(std::abs(loss_a - loss_b) <= 1e-5f);
    CHECK(a.global_step() == b.global_step());

    // Weights agree bit-for-bit after the identical optimizer trajectory.
    const pp::Episode probe = tiny_episode(888);
    const pp::ObsInput obs =
        pp::obs_input_from_observation(pp::observe(probe.state));
    pp::Rng prng(9);
    const MatrixXf plan = random_mat(tiny_grid_config().plan_channels(), 64,
                                     prng);
    CHECK(a.net().forward(obs, plan, 3, probe.instruction.token_ids) ==
          b.net().forward(obs, plan, 3, probe.instruction.token_ids));
    std::filesystem::remove_all("resume_a");
    std::filesystem::remove_all("resume_b");
  }

  TEST_CASE("training marches the loss down on a small dataset") {
    std::vector<pp::Episode> data;
    for (uint64_t i = 0; i < 16; ++i) data.push_back(tiny_episode(600 + i));
    pp::DiffusionModel m(tiny_grid_config(), 20, 31);
    pp::TrainConfig tc;
    tc.batch_size = 4;
    tc.warmup_epochs = 10;
    tc.peak_lr = 2e-3;
    tc.seed = 31;
    tc.progress_to_stderr = false;
    tc.out_dir = "loss_march_tmp";
    std::vector<float> losses;
    tc.epochs = 100;
    m.train(data, tc,
            [&](int, float loss) { losses.push_back(loss); });
    REQUIRE(losses.size() == 100);
    const float tail = (losses[97] + losses[98] + losses[99]) / 3.0f;
    CHECK(tail < losses.front() * 0.7f);
    std::filesystem::remove_all("loss_march_tmp");
  }
}
