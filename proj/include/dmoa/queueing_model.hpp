#pragma once

// Closed-form per-node rates and the stability condition
//   alpha * ((k+1)M + 1) * lambda < 1
// for the distributed MoA network, with alpha replaced by the slowest node's
// mean inference time when nodes differ.

#include <cstdint>
#include <span>

namespace dmoa {

struct RateSummary {
  double lambda = 0.0;      // per-user prompt arrival rate (1/s)
  double alpha = 0.0;       // mean inference time, or alpha_max (s)
  double r_prop_in = 0.0;   // (k+1) lambda
  double r_layer_in = 0.0;  // (k+1) M lambda
  double r_in = 0.0;        // ((k+1) M + 1) lambda
  double r_out = 0.0;       // 1 / alpha
  double utilization = 0.0; // r_in * alpha, reported even when >= 1
  bool stable = false;      // utilization < 1, strict
};

double proposer_input_rate(double lambda, std::uint32_t k);
double node_input_rate(double lambda, std::uint32_t k, std::uint32_t layers);

RateSummary is_stable(double lambda, std::uint32_t k, std::uint32_t layers,
                      double alpha);

/// Same as is_stable with alpha = max of the per-node means.
/// Throws ConfigError for an empty profile or a nonpositive entry.
RateSummary is_stable_heterogeneous(double lambda, std::uint32_t k,
                                    std::uint32_t layers,
                                    std::span<const double> alphas);

/// Supremum of the stable arrival rates: 1 / (alpha ((k+1)M + 1)).
double max_stable_lambda(std::uint32_t k, std::uint32_t layers, double alpha);

}  // namespace dmoa
