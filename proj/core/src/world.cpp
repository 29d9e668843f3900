#include "csdlab/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "csdlab/errors.hpp"

namespace csdlab {
namespace {

constexpr double kSumTolerance = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_dim(const Mixture& m, const Vec& x, const char* op) {
  if (x.size() != m.dim()) {
    std::ostringstream os;
    os << op << ": point has dimension " << x.size() << " but mixture has " << m.dim();
    throw DomainError(os.str());
  }
}

// log w_k + log N(x; alpha mu_k, alpha^2 var_k + sigma^2) for every component.
// Zero-weight components yield -inf.
std::vector<double> component_log_terms(const Mixture& m, NoiseLevel lvl, const Vec& x) {
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> out(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double w = m.weights()[k];
    if (w <= 0.0) {
      out[k] = kNegInf;
      continue;
    }
    const auto& c = m.components()[k];
    double acc = std::log(w);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = lvl.alpha * lvl.alpha * c.var[i] + lvl.sigma * lvl.sigma;
      const double r = x[i] - lvl.alpha * c.mean[i];
      acc -= 0.5 * (log_2pi + std::log(v) + r * r / v);
    }
    out[k] = acc;
  }
  return out;
}

double log_sum_exp(const std::vector<double>& terms) {
  const double peak = *std::max_element(terms.begin(), terms.end());
  if (peak == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double l : terms) acc += std::exp(l - peak);
  return peak + std::log(acc);
}

double diffused_log_density_impl(const Mixture& m, NoiseLevel lvl, const Vec& x) {
  return log_sum_exp(component_log_terms(m, lvl, x));
}

Vec diffused_score_impl(const Mixture& m, NoiseLevel lvl, const Vec& x) {
  const auto terms = component_log_terms(m, lvl, x);
  const double norm = log_sum_exp(terms);
  Vec out = Vec::Zero(x.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (terms[k] == kNegInf) continue;
    const double resp = std::exp(terms[k] - norm);
    const auto& c = m.components()[k];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = lvl.alpha * lvl.alpha * c.var[i] + lvl.sigma * lvl.sigma;
      out[i] -= resp * (x[i] - lvl.alpha * c.mean[i]) / v;
    }
  }
  return out;
}

constexpr NoiseLevel kClean{1.0, 0.0};

Mixture pool(const std::vector<World::Prompt>& prompts, const std::vector<double>& prior) {
  std::vector<GaussianComponent> comps;
  std::vector<double> weights;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& m = prompts[i].mixture;
    for (std::size_t k = 0; k < m.size(); ++k) {
      comps.push_back(m.components()[k]);
      weights.push_back(prior[i] * m.weights()[k]);
    }
  }
  return Mixture(std::move(comps), std::move(weights));
}

std::vector<double> resolve_prior(std::size_t n, std::vector<double> prior) {
  if (n == 0) throw ConfigError("world must declare at least one prompt");
  if (prior.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (prior.size() != n) {
    throw ConfigError("prior has " + std::to_string(prior.size()) + " entries but world has " +
                      std::to_string(n) + " prompts");
  }
  for (double p : prior) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("prior entries must be nonnegative");
  }
  const double sum = std::accumulate(prior.begin(), prior.end(), 0.0);
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "prior must sum to 1 (got " << sum << ")";
    throw ConfigError(os.str());
  }
  return prior;
}

std::vector<World::Prompt> checked_prompts(std::vector<World::Prompt> prompts) {
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].label.empty()) throw ConfigError("prompt labels must be nonempty");
    for (std::size_t j = 0; j < i; ++j) {
      if (prompts[j].label == prompts[i].label) {
        throw ConfigError("duplicate prompt label '" + prompts[i].label + "'");
      }
    }
    if (prompts[i].mixture.dim() != prompts.front().mixture.dim()) {
      throw ConfigError("prompt '" + prompts[i].label + "' has dimension " +
                        std::to_string(prompts[i].mixture.dim()) + ", expected " +
                        std::to_string(prompts.front().mixture.dim()));
    }
  }
  return prompts;
}

}  // namespace

Mixture::Mixture(std::vector<GaussianComponent> components, std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty()) throw ConfigError("mixture must have at least one component");
  if (weights_.size() != components_.size()) {
    throw ConfigError("mixture has " + std::to_string(components_.size()) + " components but " +
                      std::to_string(weights_.size()) + " weights");
  }
  const Eigen::Index d = components_.front().mean.size();
  if (d == 0) throw ConfigError("mixture components must have positive dimension");
  for (const auto& c : components_) {
    if (c.mean.size() != d || c.var.size() != d) {
      throw ConfigError("mixture components must share one dimension");
    }
    if (!c.mean.allFinite()) throw ConfigError("component means must be finite");
    for (Eigen::Index i = 0; i < d; ++i) {
      if (!(c.var[i] > 0.0) || !std::isfinite(c.var[i])) {
        throw ConfigError("component variances must be strictly positive");
      }
    }
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("mixture weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "mixture weights must sum to 1 (got " << sum << ")";
    throw ConfigError(os.str());
  }
}

Vec Mixture::mean() const {
  Vec out = Vec::Zero(dim());
  for (std::size_t k = 0; k < size(); ++k) out += weights_[k] * components_[k].mean;
  return out;
}

Vec Mixture::sample(Rng& rng) const {
  const double u = rng.uniform();
  std::size_t pick = size() - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < size(); ++k) {
    acc += weights_[k];
    if (u < acc) {
      pick = k;
      break;
    }
  }
  const auto& c = components_[pick];
  return c.mean + c.var.cwiseSqrt().cwiseProduct(rng.normal_vec(dim()));
}

Mixture diffused_mixture(const Mixture& m, const DiffusionSchedule& s, double t) {
  const auto [alpha, sigma] = s.at(t);
  std::vector<GaussianComponent> comps;
  comps.reserve(m.size());
  for (const auto& c : m.components()) {
    comps.push_back({alpha * c.mean, (alpha * alpha * c.var).array() + sigma * sigma});
  }
  return Mixture(std::move(comps), m.weights());
}

double log_density(const Mixture& m, const Vec& x) {
  check_dim(m, x, "log_density");
  return diffused_log_density_impl(m, kClean, x);
}

Vec score(const Mixture& m, const Vec& x) {
  check_dim(m, x, "score");
  return diffused_score_impl(m, kClean, x);
}

World::World(std::vector<Prompt> prompts, std::vector<double> prior)
    : prompts_(checked_prompts(std::move(prompts))),
      prior_(resolve_prior(prompts_.size(), std::move(prior))),
      pooled_(pool(prompts_, prior_)),
      dim_(prompts_.front().mixture.dim()) {}

std::size_t World::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    if (prompts_[i].label == label) return i;
  }
  throw LookupError("unknown prompt label '" + std::string(label) + "'");
}

bool World::has_prompt(std::string_view label) const {
  return std::any_of(prompts_.begin(), prompts_.end(),
                     [&](const Prompt& p) { return p.label == label; });
}

const Mixture& World::mixture(Condition y) const {
  if (!y) return pooled_;
  return prompts_[index_of(*y)].mixture;
}

Vec World::eps_pred(const DiffusionSchedule& s, const Vec& x_t, Condition y, double t) const {
  const Mixture& m = mixture(y);
  check_dim(m, x_t, "eps_pred");
  const NoiseLevel lvl = s.at(t);
  if (!(lvl.sigma > 0.0)) {
    throw DomainError("eps_pred requires sigma_t > 0 (t = " + std::to_string(t) + ")");
  }
  return -lvl.sigma * diffused_score_impl(m, lvl, x_t);
}

double World::diffused_log_density(const DiffusionSchedule& s, const Vec& x_t, Condition y,
                                   double t) const {
  const Mixture& m = mixture(y);
  check_dim(m, x_t, "diffused_log_density");
  return diffused_log_density_impl(m, s.at(t), x_t);
}

double World::classifier_logprob(const DiffusionSchedule& s, const Vec& x_t, double t,
                                 std::string_view y) const {
  const std::size_t idx = index_of(y);
  if (prior_[idx] == 0.0) return kNegInf;
  const NoiseLevel lvl = s.at(t);
  check_dim(pooled_, x_t, "classifier_logprob");
  std::vector<double> logits(prompts_.size());
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    logits[i] = prior_[i] > 0.0 ? std::log(prior_[i]) +
                                      diffused_log_density_impl(prompts_[i].mixture, lvl, x_t)
                                : kNegInf;
  }
  const double own = logits[idx];
  if (own == *std::max_element(logits.begin(), logits.end())) {
    // -log1p keeps full relative precision as the posterior saturates at 1.
    double rest = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (i != idx) rest += std::exp(logits[i] - own);
    }
    return -std::log1p(rest);
  }
  return own - log_sum_exp(logits);
}

std::vector<double> World::classifier_probs(const DiffusionSchedule& s, const Vec& x_t,
                                            double t) const {
  const NoiseLevel lvl = s.at(t);
  check_dim(pooled_, x_t, "classifier_probs");
  std::vector<double> logits(prompts_.size());
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    logits[i] = prior_[i] > 0.0 ? std::log(prior_[i]) +
                                      diffused_log_density_impl(prompts_[i].mixture, lvl, x_t)
                                : kNegInf;
  }
  const double norm = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - norm);
  return out;
}

}  // namespace csdlab
