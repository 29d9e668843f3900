#include "csdlab/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "csdlab/errors.hpp"

namespace csdlab {

std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::SDS: return "sds";
    case RuleKind::CSD: return "csd";
    case RuleKind::CSD_NEG: return "csd_neg";
    case RuleKind::CSD_EDIT: return "csd_edit";
    case RuleKind::VSD: return "vsd";
    case RuleKind::DDS: return "dds";
    case RuleKind::DDS_NO_CLS: return "dds_no_cls";
    case RuleKind::CSD_ONLY_FROM_DDS: return "csd_only_from_dds";
  }
  return "?";
}

RuleKind rule_kind_from_string(std::string_view name) {
  for (auto k : {RuleKind::SDS, RuleKind::CSD, RuleKind::CSD_NEG, RuleKind::CSD_EDIT,
                 RuleKind::VSD, RuleKind::DDS, RuleKind::DDS_NO_CLS,
                 RuleKind::CSD_ONLY_FROM_DDS}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown rule kind '" + std::string(name) + "'");
}

bool needs_neg_prompt(RuleKind kind) {
  switch (kind) {
    case RuleKind::CSD_NEG:
    case RuleKind::CSD_EDIT:
    case RuleKind::DDS:
    case RuleKind::DDS_NO_CLS:
    case RuleKind::CSD_ONLY_FROM_DDS:
      return true;
    default:
      return false;
  }
}

bool is_dds_family(RuleKind kind) {
  return kind == RuleKind::DDS || kind == RuleKind::DDS_NO_CLS ||
         kind == RuleKind::CSD_ONLY_FROM_DDS;
}

std::string_view to_string(TimeWeighting w) {
  return w == TimeWeighting::One ? "one" : "sigma_sq";
}

TimeWeighting time_weighting_from_string(std::string_view name) {
  if (name == "one") return TimeWeighting::One;
  if (name == "sigma_sq") return TimeWeighting::SigmaSq;
  throw ConfigError("unknown w_of_t '" + std::string(name) + "' (expected one or sigma_sq)");
}

double time_weight(TimeWeighting w, NoiseLevel lvl) {
  return w == TimeWeighting::One ? 1.0 : lvl.sigma * lvl.sigma;
}

double WeightSchedule::at(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  switch (kind) {
    case Kind::Constant:
      return start;
    case Kind::LinearDecay:
      if (u == 0.0) return start;
      if (u == 1.0) return end;
      return start + (end - start) * u;
    case Kind::CosineDecay:
      if (u == 0.0) return start;
      if (u == 1.0) return end;
      return end + (start - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
  }
  return start;
}

std::string_view to_string(WeightSchedule::Kind kind) {
  switch (kind) {
    case WeightSchedule::Kind::Constant: return "constant";
    case WeightSchedule::Kind::LinearDecay: return "linear_decay";
    case WeightSchedule::Kind::CosineDecay: return "cosine_decay";
  }
  return "?";
}

WeightSchedule::Kind weight_schedule_kind_from_string(std::string_view name) {
  if (name == "constant") return WeightSchedule::Kind::Constant;
  if (name == "linear_decay") return WeightSchedule::Kind::LinearDecay;
  if (name == "cosine_decay") return WeightSchedule::Kind::CosineDecay;
  throw ConfigError("unknown weight schedule '" + std::string(name) +
                    "' (expected constant, linear_decay or cosine_decay)");
}

void RuleConfig::validate(const World& world) const {
  const std::string name(to_string(kind));
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw ConfigError("rule omega must be >= 0");
  if (!(omega1 >= 0.0) || !std::isfinite(omega1)) throw ConfigError("rule omega1 must be >= 0");
  if (!(omega2.start >= 0.0) || !(omega2.end >= 0.0) || !std::isfinite(omega2.start) ||
      !std::isfinite(omega2.end)) {
    throw ConfigError("rule omega2 schedule values must be >= 0");
  }
  if (omega2.kind == WeightSchedule::Kind::Constant && omega2.start != omega2.end) {
    throw ConfigError("constant omega2 schedule must have start == end");
  }
  if (prompt.empty()) throw ConfigError("rule prompt is required");
  world.index_of(prompt);
  if (needs_neg_prompt(kind) && !neg_prompt) {
    throw ConfigError("rule '" + name + "' requires neg_prompt");
  }
  if (!needs_neg_prompt(kind) && neg_prompt) {
    throw ConfigError("rule '" + name + "' does not take neg_prompt");
  }
  if (neg_prompt) world.index_of(*neg_prompt);
}

const RuleTerm* RuleOutput::find(std::string_view name) const {
  for (const auto& term : terms) {
    if (term.name == name) return &term;
  }
  return nullptr;
}

Vec sum_terms(const std::vector<RuleTerm>& terms, Eigen::Index dim) {
  Vec total = Vec::Zero(dim);
  for (const auto& term : terms) total += term.coefficient * term.value;
  return total;
}

VsdSurrogate::VsdSurrogate(Settings settings) : settings_(settings) {
  if (settings_.fit_window == 0) throw ConfigError("VSD fit_window must be positive");
  if (settings_.refresh_every == 0) throw ConfigError("VSD refresh_every must be positive");
  if (!(settings_.variance_floor > 0.0)) throw ConfigError("VSD variance floor must be positive");
}

void VsdSurrogate::fit(std::string_view label, std::span<const Vec> renders) {
  if (renders.empty()) throw StateError("cannot fit VSD surrogate on an empty render window");
  const Eigen::Index d = renders.front().size();
  const double n = static_cast<double>(renders.size());
  Vec mean = Vec::Zero(d);
  for (const auto& r : renders) {
    if (r.size() != d) throw DomainError("VSD renders must share one dimension");
    mean += r;
  }
  mean /= n;
  Vec var = Vec::Zero(d);
  for (const auto& r : renders) var += (r - mean).cwiseAbs2();
  var /= n;
  var = var.cwiseMax(settings_.variance_floor);
  fits_.insert_or_assign(std::string(label), GaussianFit{std::move(mean), std::move(var)});
}

bool VsdSurrogate::has_fit(std::string_view label) const { return fits_.contains(label); }

const VsdSurrogate::GaussianFit& VsdSurrogate::fit_for(std::string_view label) const {
  auto it = fits_.find(label);
  if (it == fits_.end()) {
    throw StateError("VSD surrogate has no fit for prompt '" + std::string(label) + "'");
  }
  return it->second;
}

Vec VsdSurrogate::eps(const DiffusionSchedule& s, const Vec& x_t, std::string_view y,
                      double t) const {
  const auto& g = fit_for(y);
  if (x_t.size() != g.mean.size()) throw DomainError("VSD surrogate: dimension mismatch");
  const auto [alpha, sigma] = s.at(t);
  if (!(sigma > 0.0)) throw DomainError("VSD surrogate requires sigma_t > 0");
  const Vec v = (alpha * alpha * g.var).array() + sigma * sigma;
  // -sigma * score = sigma * (x - alpha mean) / v
  return sigma * ((x_t - alpha * g.mean).array() / v.array()).matrix();
}

Vec delta_gen(const World& w, const DiffusionSchedule& s, const Vec& x_t, std::string_view y,
              double t, const Vec& eps) {
  if (eps.size() != x_t.size()) throw DomainError("delta_gen: eps dimension mismatch");
  return w.eps_pred(s, x_t, y, t) - eps;
}

Vec delta_cls(const World& w, const DiffusionSchedule& s, const Vec& x_t, std::string_view y,
              double t) {
  return w.eps_pred(s, x_t, y, t) - w.eps_pred(s, x_t, kUnconditional, t);
}

RuleOutput rule_delta(const RuleConfig& rule, const RuleState& st) {
  const auto& world = st.world;
  const auto& sched = st.schedule;
  if (st.x_t.size() != world.dim() || st.eps.size() != world.dim()) {
    throw DomainError("rule_delta: state dimension does not match world");
  }
  if (needs_neg_prompt(rule.kind) && !rule.neg_prompt) {
    throw ConfigError("rule '" + std::string(to_string(rule.kind)) + "' requires neg_prompt");
  }
  const NoiseLevel lvl = sched.at(st.t);
  const double wt = time_weight(rule.w_of_t, lvl);
  const std::string_view y = rule.prompt;

  // Conditional and unconditional predictions at x_t are computed once and
  // shared by every term that needs them.
  const Vec eps_y = world.eps_pred(sched, st.x_t, y, st.t);
  const Vec eps_u = world.eps_pred(sched, st.x_t, kUnconditional, st.t);
  Vec cls_pos = eps_y - eps_u;

  std::vector<RuleTerm> terms;
  switch (rule.kind) {
    case RuleKind::SDS:
      terms.push_back({kDeltaGen, wt, eps_y - st.eps});
      terms.push_back({kDeltaClsPos, wt * rule.omega, std::move(cls_pos)});
      break;
    case RuleKind::CSD:
      terms.push_back({kDeltaClsPos, wt, std::move(cls_pos)});
      break;
    case RuleKind::CSD_NEG:
    case RuleKind::CSD_EDIT: {
      const double omega2 = rule.omega2.at(st.progress);
      Vec cls_neg = world.eps_pred(sched, st.x_t, *rule.neg_prompt, st.t) - eps_u;
      terms.push_back({kDeltaClsPos, wt * rule.omega1, std::move(cls_pos)});
      terms.push_back({kDeltaClsNeg, -wt * omega2, std::move(cls_neg)});
      break;
    }
    case RuleKind::VSD: {
      if (st.surrogate == nullptr) throw ConfigError("rule 'vsd' requires a surrogate model");
      terms.push_back({kDeltaVsdResidual, wt, eps_y - st.surrogate->eps(sched, st.x_t, y, st.t)});
      terms.push_back({kDeltaClsPos, wt * rule.omega, std::move(cls_pos)});
      break;
    }
    case RuleKind::DDS:
    case RuleKind::DDS_NO_CLS:
    case RuleKind::CSD_ONLY_FROM_DDS: {
      if (st.dds_ref == nullptr) {
        throw ConfigError("rule '" + std::string(to_string(rule.kind)) +
                          "' requires a DDS reference");
      }
      if (rule.kind == RuleKind::CSD_ONLY_FROM_DDS) {
        terms.push_back({kDeltaClsPos, wt * rule.omega, std::move(cls_pos)});
        break;
      }
      // Reference branch shares t and eps with the optimized branch.
      const auto& ref = *st.dds_ref;
      const Vec ref_t = sched.perturb(ref.x_hat, st.t, st.eps);
      const Vec ref_eps_y = world.eps_pred(sched, ref_t, ref.y_hat, st.t);
      const Vec ref_eps_u = world.eps_pred(sched, ref_t, kUnconditional, st.t);
      Vec ref_sds = (ref_eps_y - st.eps) + rule.omega * (ref_eps_y - ref_eps_u);
      terms.push_back({kDeltaGen, wt, eps_y - st.eps});
      if (rule.kind == RuleKind::DDS) {
        terms.push_back({kDeltaClsPos, wt * rule.omega, std::move(cls_pos)});
      }
      terms.push_back({kDdsRefTerm, -wt, std::move(ref_sds)});
      break;
    }
  }

  RuleOutput out;
  out.total = sum_terms(terms, world.dim());
  out.terms = std::move(terms);
  return out;
}

}  // namespace csdlab
