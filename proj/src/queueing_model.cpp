#include "dmoa/queueing_model.hpp"

#include <algorithm>
#include <string>

#include "dmoa/errors.hpp"

namespace dmoa {
namespace {

double inference_multiplier(std::uint32_t k, std::uint32_t layers) {
  return (static_cast<double>(k) + 1.0) * layers + 1.0;
}

}  // namespace

double proposer_input_rate(double lambda, std::uint32_t k) {
  return (static_cast<double>(k) + 1.0) * lambda;
}

double node_input_rate(double lambda, std::uint32_t k, std::uint32_t layers) {
  return inference_multiplier(k, layers) * lambda;
}

RateSummary is_stable(double lambda, std::uint32_t k, std::uint32_t layers,
                      double alpha) {
  if (!(lambda > 0.0)) throw ConfigError("lambda: must be > 0");
  if (!(alpha > 0.0)) throw ConfigError("alpha: must be > 0");

  RateSummary s;
  s.lambda = lambda;
  s.alpha = alpha;
  s.r_prop_in = proposer_input_rate(lambda, k);
  s.r_layer_in = s.r_prop_in * layers;
  s.r_in = node_input_rate(lambda, k, layers);
  s.r_out = 1.0 / alpha;
  s.utilization = alpha * inference_multiplier(k, layers) * lambda;
  s.stable = s.utilization < 1.0;
  return s;
}

RateSummary is_stable_heterogeneous(double lambda, std::uint32_t k,
                                    std::uint32_t layers,
                                    std::span<const double> alphas) {
  if (alphas.empty()) throw ConfigError("alpha: service profile is empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0)) {
      throw ConfigError("alpha[" + std::to_string(i) + "]: must be > 0");
    }
  }
  return is_stable(lambda, k, layers,
                   *std::max_element(alphas.begin(), alphas.end()));
}

double max_stable_lambda(std::uint32_t k, std::uint32_t layers, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("alpha: must be > 0");
  return 1.0 / (alpha * inference_multiplier(k, layers));
}

}  // namespace dmoa
