#include "dmoa/distributions.hpp"

#include <cmath>

#include "dmoa/errors.hpp"

namespace dmoa {

void ServiceSpec::validate(std::string_view field) const {
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw ConfigError(std::string(field) + ".mean: must be a positive number");
  }
  if (dist == ServiceDist::Lognormal && (!(cv > 0.0) || !std::isfinite(cv))) {
    throw ConfigError(std::string(field) + ".cv: must be a positive number");
  }
}

void DelaySpec::validate(std::string_view field) const {
  if (dist == DelayDist::Zero) return;
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw ConfigError(std::string(field) + ".mean: must be a positive number");
  }
}

double sample_interarrival(ArrivalDist dist, double lambda, Rng& rng) {
  switch (dist) {
    case ArrivalDist::Poisson:
      return rng.exponential(1.0 / lambda);
    case ArrivalDist::Deterministic:
      return 1.0 / lambda;
  }
  return 1.0 / lambda;
}

double sample_service(const ServiceSpec& spec, Rng& rng) {
  switch (spec.dist) {
    case ServiceDist::Exponential:
      return rng.exponential(spec.mean);
    case ServiceDist::Deterministic:
      return spec.mean;
    case ServiceDist::Lognormal: {
      const double sigma2 = std::log1p(spec.cv * spec.cv);
      const double mu = std::log(spec.mean) - 0.5 * sigma2;
      return std::exp(mu + std::sqrt(sigma2) * rng.standard_normal());
    }
  }
  return spec.mean;
}

double sample_delay(const DelaySpec& spec, Rng& rng) {
  switch (spec.dist) {
    case DelayDist::Zero:
      return 0.0;
    case DelayDist::Deterministic:
      return spec.mean;
    case DelayDist::Exponential:
      return rng.exponential(spec.mean);
  }
  return 0.0;
}

std::string_view to_string(ArrivalDist d) {
  return d == ArrivalDist::Poisson ? "poisson" : "deterministic";
}

std::string_view to_string(ServiceDist d) {
  switch (d) {
    case ServiceDist::Exponential: return "exponential";
    case ServiceDist::Deterministic: return "deterministic";
    case ServiceDist::Lognormal: return "lognormal";
  }
  return "exponential";
}

std::string_view to_string(DelayDist d) {
  switch (d) {
    case DelayDist::Zero: return "zero";
    case DelayDist::Deterministic: return "deterministic";
    case DelayDist::Exponential: return "exponential";
  }
  return "zero";
}

std::optional<ArrivalDist> parse_arrival_dist(std::string_view s) {
  if (s == "poisson") return ArrivalDist::Poisson;
  if (s == "deterministic") return ArrivalDist::Deterministic;
  return std::nullopt;
}

std::optional<ServiceDist> parse_service_dist(std::string_view s) {
  if (s == "exponential") return ServiceDist::Exponential;
  if (s == "deterministic") return ServiceDist::Deterministic;
  if (s == "lognormal") return ServiceDist::Lognormal;
  return std::nullopt;
}

std::optional<DelayDist> parse_delay_dist(std::string_view s) {
  if (s == "zero") return DelayDist::Zero;
  if (s == "deterministic") return DelayDist::Deterministic;
  if (s == "exponential") return DelayDist::Exponential;
  return std::nullopt;
}

}  // namespace dmoa
