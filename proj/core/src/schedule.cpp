#include "csdlab/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "csdlab/errors.hpp"

namespace csdlab {

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::LinearSigma:
      return "linear_sigma";
    case ScheduleKind::CosineAlpha:
      return "cosine_alpha";
  }
  return "?";
}

ScheduleKind schedule_kind_from_string(std::string_view name) {
  if (name == "linear_sigma") return ScheduleKind::LinearSigma;
  if (name == "cosine_alpha") return ScheduleKind::CosineAlpha;
  throw ConfigError("unknown schedule kind '" + std::string(name) +
                    "' (expected linear_sigma or cosine_alpha)");
}

DiffusionSchedule::DiffusionSchedule(ScheduleKind kind, double t_min, double t_max)
    : kind_(kind), t_min_(t_min), t_max_(t_max) {
  if (!(t_min >= 0.0 && t_min < 1.0)) {
    throw ConfigError("schedule t_min must lie in [0, 1), got " + std::to_string(t_min));
  }
  // t_min == t_max is accepted as a degenerate (fixed-timestep) interval.
  if (!(t_max >= t_min && t_max <= 1.0)) {
    throw ConfigError("schedule t_max must lie in [t_min, 1], got " + std::to_string(t_max));
  }
}

NoiseLevel DiffusionSchedule::at(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("diffusion time must lie in [0, 1], got " + std::to_string(t));
  }
  // Endpoints are pinned exactly so that t=0 is the data and t=1 pure noise.
  if (t == 0.0) return {1.0, 0.0};
  if (t == 1.0) return {0.0, 1.0};
  switch (kind_) {
    case ScheduleKind::LinearSigma:
      return {std::sqrt((1.0 - t) * (1.0 + t)), t};
    case ScheduleKind::CosineAlpha: {
      const double angle = 0.5 * std::numbers::pi * t;
      return {std::cos(angle), std::sin(angle)};
    }
  }
  return {1.0, 0.0};
}

Vec DiffusionSchedule::perturb(const Vec& x, double t, const Vec& eps) const {
  if (x.size() != eps.size()) {
    throw DomainError("perturb: x has dimension " + std::to_string(x.size()) +
                      " but eps has " + std::to_string(eps.size()));
  }
  const auto [alpha, sigma] = at(t);
  return alpha * x + sigma * eps;
}

double DiffusionSchedule::sample_timestep(Rng& rng) const {
  return rng.uniform(t_min_, t_max_);
}

}  // namespace csdlab
