#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "planpaint/denoiser.hpp"
#include "planpaint/rng.hpp"

namespace pp = planpaint;

namespace {

pp::DenoiserConfig miniature_config() {
  pp::DenoiserConfig d;
  d.height = 4;
  d.width = 4;
  d.horizon = 2;
  d.goal_channel = true;
  d.obs_mode = pp::ObsMode::kTokens;
  d.object_vocab = pp::kNumReservedTokens + 2;
  d.embed_dim = 3;
  d.text_vocab = 8;
  d.text_embed_dim = 6;
  d.text_len = 4;
  d.depth = 2;
  d.base_channels = {4, 8};
  d.attention_levels = {1};
  d.timestep_embed_dim = 8;
  d.norm_groups = 2;
  d.head_dim = 4;
  return d;
}

struct ParamRef {
  std::string name;
  Eigen::MatrixXd* w;
  Eigen::MatrixXd* g;
};

}  // namespace

// The denoiser backward pass must agree with central finite differences on
// the miniature network: every layer type (conv, linear, group norm, self and
// cross attention, residual blocks, embeddings, up/downsampling) is exercised
// end to end through a scalar probe loss L = sum(eps_hat .* R).
TEST_SUITE("properties") {
  TEST_CASE("denoiser finite-difference gradient check") {
    const pp::DenoiserConfig cfg = miniature_config();
    pp::Denoiser<double> net(cfg, 91);

    // Perturb every parameter away from its init (including the zero-init
    // output head) so no gradient path is trivially zero.
    pp::Rng prng(pp::derive_seed(91, "gradcheck_params"));
    std::vector<ParamRef> params;
    net.visit_params([&](const std::string& name, Eigen::MatrixXd& w,
                         Eigen::MatrixXd& g) {
      for (Eigen::Index i = 0; i < w.size(); ++i)
        w.data()[i] += 0.2 * prng.next_normal();
      params.push_back({name, &w, &g});
    });
    REQUIRE(params.size() > 20);

    const int n = cfg.height * cfg.width;
    pp::Rng irng(pp::derive_seed(91, "gradcheck_inputs"));
    pp::ObsInput obs;
    obs.tokens.resize(n);
    obs.agent.resize(n);
    obs.revealed.resize(n);
    for (int i = 0; i < n; ++i) {
      obs.tokens[i] =
          static_cast<int32_t>(irng.next_below(cfg.object_vocab));
      obs.agent[i] = 0.0f;
      obs.revealed[i] = irng.next_below(2) != 0u ? 1.0f : 0.0f;
    }
    obs.agent[irng.next_below(n)] = 1.0f;

    Eigen::MatrixXd plan(cfg.plan_channels(), n);
    Eigen::MatrixXd probe(cfg.plan_channels(), n);
    for (Eigen::Index i = 0; i < plan.size(); ++i) {
      plan.data()[i] = irng.next_normal();
      probe.data()[i] = irng.next_normal();
    }
    const std::vector<int32_t> instr = {2, 5, 3, 0};  // trailing pad
    const int k = 3;

    const auto loss = [&]() {
      return (net.forward(obs, plan, k, instr).array() * probe.array())
          .sum();
    };

    net.zero_grads();
    const double base_loss = loss();
    net.backward(probe);

    int64_t total = 0;
    double grad_norm2 = 0.0;
    for (const ParamRef& p : params) {
      total += p.w->size();
      grad_norm2 += p.g->squaredNorm();
    }
    REQUIRE(total == net.n_params());
    // Guard against a vacuous pass where the probe never reaches the params.
    REQUIRE(std::abs(base_loss) > 1e-6);
    REQUIRE(grad_norm2 > 1e-6);
    MESSAGE("probe loss ", base_loss, ", grad norm ",
            std::sqrt(grad_norm2));

    pp::Rng crng(pp::derive_seed(91, "gradcheck_coords"));
    const int kCoords = 100;
    int checked = 0;
    double worst = 0.0;
    std::string worst_name;
    for (int c = 0; c < kCoords; ++c) {
      int64_t flat = static_cast<int64_t>(
          crng.next_below(static_cast<uint64_t>(total)));
      size_t pi = 0;
      while (flat >= params[pi].w->size()) {
        flat -= params[pi].w->size();
        ++pi;
      }
      double& w = params[pi].w->data()[flat];
      const double analytic = params[pi].g->data()[flat];
      const double h = 1e-5 * std::max(1.0, std::abs(w));
      const double saved = w;
      w = saved + h;
      const double lp = loss();
      w = saved - h;
      const double lm = loss();
      w = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double err = std::abs(analytic - fd);
      const double scale = std::max(std::abs(analytic), std::abs(fd));
      if (err > worst) {
        worst = err;
        worst_name = params[pi].name;
      }
      const bool ok = err <= 1e-3 * scale || err <= 1e-8;
      if (!ok) {
        CAPTURE(params[pi].name);
        CAPTURE(flat);
        CAPTURE(analytic);
        CAPTURE(fd);
      }
      CHECK(ok);
      ++checked;
    }
    CHECK(checked == kCoords);
    MESSAGE("worst absolute error ", worst, " at ", worst_name);
  }
}
