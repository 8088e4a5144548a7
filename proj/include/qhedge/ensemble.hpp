#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qhedge/distributions.hpp"
#include "qhedge/garch.hpp"

namespace qhedge {

/// Law under which an ensemble's innovations were drawn.
///   physical: eps ~ D under P, paths equally likely
///   egp:      eps* ~ D under the extended Girsanov measure
enum class SimMeasure : std::uint32_t { physical = 0, egp = 1 };

enum class KernelKind { extended_girsanov, esscher, minimal_martingale };

inline std::string kernel_name(KernelKind k) {
  switch (k) {
    case KernelKind::extended_girsanov: return "egp";
    case KernelKind::esscher: return "esscher";
    case KernelKind::minimal_martingale: return "mmm";
  }
  return "?";
}

/// Simulated (or enumerated) paths rooted at a common state.
/// Time index l runs 0..T for prices; step l (1..T) uses
/// variance(p, l-1) and innovation(p, l-1).
struct PathEnsemble {
  std::size_t n_paths = 0;
  std::size_t horizon = 0;  // T
  SimMeasure measure = SimMeasure::physical;
  KernelKind kernel = KernelKind::extended_girsanov;  // expectations taken under this kernel
  NgarchParams params;
  InnovationDistribution dist = InnovationDistribution::gaussian();
  double s0 = 0.0;

  std::vector<double> prices;       // n x (T+1)
  std::vector<double> variances;    // n x (T+1); column l drives step l+1, column T is the forecast
  std::vector<double> innovations;  // n x T; eps* under egp, eps under physical
  std::vector<double> prob;         // path probability (1/n for Monte Carlo)
  std::vector<double> rn_weights;   // density of the pricing measure w.r.t. the simulation measure

  bool ems_applied = false;
  bool enumerated = false;
  std::size_t rejected = 0;

  double price(std::size_t p, std::size_t l) const { return prices[p * (horizon + 1) + l]; }
  double& price(std::size_t p, std::size_t l) { return prices[p * (horizon + 1) + l]; }
  double variance(std::size_t p, std::size_t l) const { return variances[p * (horizon + 1) + l]; }
  double innovation(std::size_t p, std::size_t l) const { return innovations[p * horizon + l]; }

  std::span<const double> path_prices(std::size_t p) const {
    return {prices.data() + p * (horizon + 1), horizon + 1};
  }

  /// Combined weight of a path in expectations under the pricing kernel.
  double weight(std::size_t p) const { return prob[p] * rn_weights[p]; }

  bool unit_weights() const {
    for (double w : rn_weights)
      if (w != 1.0) return false;
    return true;
  }
};

}  // namespace qhedge
