#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "dmoa/rng.hpp"

namespace dmoa {

enum class ArrivalDist { Poisson, Deterministic };
enum class ServiceDist { Exponential, Deterministic, Lognormal };
enum class DelayDist { Zero, Deterministic, Exponential };

struct ServiceSpec {
  ServiceDist dist = ServiceDist::Exponential;
  double mean = 1.0;  // alpha_i (s)
  double cv = 1.0;    // coefficient of variation, lognormal only

  void validate(std::string_view field) const;
};

struct DelaySpec {
  DelayDist dist = DelayDist::Zero;
  double mean = 0.0;

  void validate(std::string_view field) const;
};

/// Poisson: exponential gaps with mean 1/lambda. Deterministic: exactly 1/lambda.
double sample_interarrival(ArrivalDist dist, double lambda, Rng& rng);

/// Positive variate with the spec's distribution and mean. Lognormal uses
/// sigma^2 = ln(1 + cv^2), mu = ln(mean) - sigma^2 / 2.
double sample_service(const ServiceSpec& spec, Rng& rng);

double sample_delay(const DelaySpec& spec, Rng& rng);

std::string_view to_string(ArrivalDist d);
std::string_view to_string(ServiceDist d);
std::string_view to_string(DelayDist d);

std::optional<ArrivalDist> parse_arrival_dist(std::string_view s);
std::optional<ServiceDist> parse_service_dist(std::string_view s);
std::optional<DelayDist> parse_delay_dist(std::string_view s);

}  // namespace dmoa
