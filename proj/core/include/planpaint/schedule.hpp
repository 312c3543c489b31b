#pragma once

#include <vector>

#include "planpaint/error.hpp"

namespace planpaint {

// Diffusion noise schedule tables, 1-indexed by step k in [1, K];
// alpha_bars[0] = 1 so that alpha_bars[k] = prod_{j<=k} alphas[j] holds for
// every k including the first.
struct NoiseSchedule {
  int K = 0;
  std::vector<double> betas;       // betas[0] unused
  std::vector<double> alphas;      // alphas[k] = 1 - betas[k]
  std::vector<double> alpha_bars;  // cumulative products, alpha_bars[0] = 1
};

// Cosine schedule: alpha_bar(k) tracks f(k)/f(0) with
// f(k) = cos^2(((k/K + s)/(1 + s)) * pi/2), s = 0.008, and per-step betas
// capped at 0.999. The stored alpha_bars are the cumulative products of the
// capped alphas so the product identity stays exact after capping (the raw
// cosine alpha_bar would hit exactly 0 at k = K otherwise).
NoiseSchedule make_cosine_schedule(int K);

}  // namespace planpaint
