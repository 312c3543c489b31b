#include "planpaint/schedule.hpp"

#include <cmath>

namespace planpaint {

NoiseSchedule make_cosine_schedule(int K) {
  PP_CHECK_MSG(K >= 2, "schedule needs at least 2 steps");
  constexpr double kS = 0.008;
  constexpr double kPi = 3.14159265358979323846;
  constexpr double kBetaCap = 0.999;
  auto f = [&](int k) {
    const double u = (static_cast<double>(k) / K + kS) / (1.0 + kS);
    const double c = std::cos(u * kPi / 2.0);
    return c * c;
  };

  NoiseSchedule s;
  s.K = K;
  s.betas.assign(K + 1, 0.0);
  s.alphas.assign(K + 1, 0.0);
  s.alpha_bars.assign(K + 1, 0.0);
  s.alpha_bars[0] = 1.0;

  const double f0 = f(0);
  double prev_raw_bar = 1.0;
  for (int k = 1; k <= K; ++k) {
    const double raw_bar = f(k) / f0;
    double beta = 1.0 - raw_bar / prev_raw_bar;
    if (beta > kBetaCap) beta = kBetaCap;
    prev_raw_bar = raw_bar;
    s.betas[k] = beta;
    s.alphas[k] = 1.0 - beta;
    s.alpha_bars[k] = s.alpha_bars[k - 1] * s.alphas[k];
  }

  for (int k = 1; k <= K; ++k) {
    PP_CHECK_MSG(s.betas[k] > 0.0 && s.betas[k] <= kBetaCap,
                 "beta out of (0, 0.999]");
    PP_CHECK_MSG(s.alpha_bars[k] < s.alpha_bars[k - 1],
                 "alpha_bars must be strictly decreasing");
  }
  PP_CHECK_MSG(s.alpha_bars[K] < 0.01, "terminal alpha_bar too large");
  return s;
}

}  // namespace planpaint
