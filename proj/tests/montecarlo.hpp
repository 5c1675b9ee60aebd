#pragma once

#include "stagger/simgen.hpp"

namespace montecarlo {

// 200 units over 20 periods, three cohorts and 40% never treated, growing
// effects, i.i.d. N(0, 0.1^2) noise. Dynamic horizons up to 10 are identified.
inline stagger::DgpConfig noisy_config(std::uint64_t seed) {
  stagger::DgpConfig c;
  c.name = "mc-iid";
  c.n_units = 200;
  c.first_period = 1;
  c.last_period = 20;
  c.cohorts = {{5, 0.2, 0.3, 0.02}, {8, 0.2, 0.2, 0.02}, {11, 0.2, 0.4, 0.0}};
  c.never_share = 0.4;
  c.unit_effect_mean = 3.0;
  c.unit_effect_sd = 1.0;
  c.period_trend = 0.02;
  c.period_sd = 0.05;
  c.noise_sd = 0.1;
  c.seed = seed;
  return c;
}

}  // namespace montecarlo
