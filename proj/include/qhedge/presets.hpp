#pragma once

// S&P 500 daily NGARCH(1,1) fits (1992-2003, r = 2.8e-5 per day).

#include "qhedge/distributions.hpp"
#include "qhedge/garch.hpp"

namespace qhedge {

struct ModelPreset {
  NgarchParams params;
  InnovationDistribution dist;
};

inline constexpr double kSpxDailyRate = 2.8e-5;

inline ModelPreset spx_gaussian() {
  NgarchParams p;
  p.alpha0 = 9.941e-7;
  p.alpha1 = 0.041;
  p.beta1 = 0.917;
  p.gamma = 0.863;
  p.lambda = 0.041;
  p.r = kSpxDailyRate;
  return {p, InnovationDistribution::gaussian()};
}

/// NIG shape given as tail parameters (1.322, -0.144); see nig_from_tail.
inline ModelPreset spx_nig() {
  NgarchParams p;
  p.alpha0 = 8.665e-7;
  p.alpha1 = 0.047;
  p.beta1 = 0.909;
  p.gamma = 0.860;
  p.lambda = 0.041;
  p.r = kSpxDailyRate;
  return {p, InnovationDistribution::nig_from_tail(1.322, -0.144)};
}

}  // namespace qhedge
