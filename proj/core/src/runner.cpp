#include "csdlab/runner.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <future>
#include <limits>
#include <sstream>

#include "csdlab/errors.hpp"
#include "csdlab/io.hpp"
#include "csdlab/rng.hpp"

namespace csdlab {
namespace {

// Seed offset for the initialization stream so that theta_init never
// perturbs the optimization stream.
constexpr std::uint64_t kInitStreamSalt = 0x9e3779b97f4a7c15ULL;

void append_optional(std::string& line, const std::optional<double>& v) {
  line += ',';
  if (v) line += format_double(*v);
}

}  // namespace

void RunConfig::validate() const {
  rule.validate(world);
  optimizer.validate();
  if (steps <= 0) throw ConfigError("steps must be > 0");
  if (log_every <= 0) throw ConfigError("log_every must be > 0");
  if (generator.image_dim() != world.dim()) {
    throw ConfigError("generator renders dimension " + std::to_string(generator.image_dim()) +
                      " but world has dimension " + std::to_string(world.dim()));
  }
  if (t_eval && !(*t_eval >= 0.0 && *t_eval <= 1.0)) {
    throw ConfigError("t_eval must lie in [0, 1]");
  }
  if (schedule.at(schedule.t_min()).sigma <= 0.0) {
    throw ConfigError("schedule t_min must give sigma > 0 for noise prediction");
  }
  switch (theta_init.kind) {
    case ThetaInit::Kind::SampleFrom:
      world.index_of(theta_init.label);
      break;
    case ThetaInit::Kind::Explicit:
      if (theta_init.values.size() != generator.param_dim()) {
        throw ConfigError("theta_init has " + std::to_string(theta_init.values.size()) +
                          " entries, generator expects " +
                          std::to_string(generator.param_dim()));
      }
      if (!theta_init.values.allFinite()) throw ConfigError("theta_init must be finite");
      break;
    default:
      break;
  }
  if (rule.kind == RuleKind::VSD) {
    VsdSurrogate check(vsd);
    (void)check;
  }
}

Vec RunConfig::initial_theta() const {
  switch (theta_init.kind) {
    case ThetaInit::Kind::Zeros:
      return Vec::Zero(generator.param_dim());
    case ThetaInit::Kind::UncondMean:
      return generator.preimage(world.pooled().mean());
    case ThetaInit::Kind::SampleFrom: {
      Rng init_rng(seed ^ kInitStreamSalt);
      return generator.preimage(world.mixture(theta_init.label).sample(init_rng));
    }
    case ThetaInit::Kind::Explicit:
      return theta_init.values;
  }
  return Vec::Zero(generator.param_dim());
}

std::string TrajectoryLog::to_csv(Eigen::Index param_dim) const {
  std::string out =
      "step,t,camera,norm_delta_gen,norm_delta_cls_pos,norm_delta_cls_neg,norm_total,"
      "clf_logprob,omega2";
  for (Eigen::Index i = 0; i < param_dim; ++i) out += ",theta_" + std::to_string(i);
  out += '\n';
  for (const auto& r : rows) {
    std::string line = std::to_string(r.step);
    line += ',' + format_double(r.t);
    line += ',' + std::to_string(r.camera);
    append_optional(line, r.norm_delta_gen);
    append_optional(line, r.norm_delta_cls_pos);
    append_optional(line, r.norm_delta_cls_neg);
    line += ',' + format_double(r.norm_total);
    line += ',' + format_double(r.clf_logprob);
    append_optional(line, r.omega2);
    for (Eigen::Index i = 0; i < r.theta.size(); ++i) line += ',' + format_double(r.theta[i]);
    out += line;
    out += '\n';
  }
  return out;
}

double RunResult::prob_of(std::string_view label) const {
  for (const auto& p : clf_probs) {
    if (p.label == label) return p.prob;
  }
  throw LookupError("no classifier probability for prompt '" + std::string(label) + "'");
}

std::vector<PromptProb> classifier_probs_of(const RunConfig& config, const Vec& theta) {
  const auto& world = config.world;
  std::vector<double> acc(world.prompt_count(), 0.0);
  const std::size_t cams = config.generator.camera_count();
  for (std::size_t c = 0; c < cams; ++c) {
    const auto probs = world.classifier_probs(config.schedule, config.generator.render(theta, c),
                                              config.eval_time());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += probs[i];
  }
  std::vector<PromptProb> out;
  out.reserve(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.push_back({world.prompts()[i].label, acc[i] / static_cast<double>(cams)});
  }
  return out;
}

RunResult run(const RunConfig& config, const StepObserver& observer) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();

  const auto& world = config.world;
  const auto& sched = config.schedule;
  const auto& gen = config.generator;
  const auto& rule = config.rule;
  const double t_eval = config.eval_time();

  Rng rng(config.seed);
  Vec theta = config.initial_theta();
  Optimizer opt(config.optimizer, gen.param_dim());

  std::vector<DdsReference> dds_refs;
  if (is_dds_family(rule.kind)) {
    for (std::size_t c = 0; c < gen.camera_count(); ++c) {
      dds_refs.push_back({gen.render(theta, c), *rule.neg_prompt});
    }
  }

  std::optional<VsdSurrogate> surrogate;
  std::deque<Vec> render_window;
  if (rule.kind == RuleKind::VSD) surrogate.emplace(config.vsd);

  RunResult result;
  result.trajectory.rows.reserve(static_cast<std::size_t>(config.steps / config.log_every));

  for (std::int64_t step = 0; step < config.steps; ++step) {
    const double u =
        config.steps > 1 ? static_cast<double>(step) / static_cast<double>(config.steps - 1) : 0.0;
    const double t = sched.sample_timestep(rng);
    const Vec eps = rng.normal_vec(world.dim());
    const std::size_t cam = rng.index(gen.camera_count());

    const Vec x = gen.render(theta, cam);
    const Vec x_t = sched.perturb(x, t, eps);

    if (surrogate) {
      render_window.push_back(x);
      if (render_window.size() > config.vsd.fit_window) render_window.pop_front();
      if (step % static_cast<std::int64_t>(config.vsd.refresh_every) == 0) {
        const std::vector<Vec> window(render_window.begin(), render_window.end());
        surrogate->fit(rule.prompt, window);
      }
    }

    RuleState state{world, sched, x_t, t, eps, u,
                    surrogate ? &*surrogate : nullptr,
                    dds_refs.empty() ? nullptr : &dds_refs[cam]};
    const RuleOutput out = rule_delta(rule, state);
    const Vec grad = gen.pullback(cam, out.total);
    opt.step(theta, grad);

    if (!theta.allFinite()) {
      throw DivergedError(step, "parameters became non-finite at step " + std::to_string(step));
    }
    if (observer) observer(step, out);

    if ((step + 1) % config.log_every == 0) {
      TrajectoryRow row;
      row.step = step;
      row.t = t;
      row.camera = cam;
      if (const auto* term = out.find(kDeltaGen)) row.norm_delta_gen = term->value.norm();
      if (const auto* term = out.find(kDeltaClsPos)) row.norm_delta_cls_pos = term->value.norm();
      if (const auto* term = out.find(kDeltaClsNeg)) row.norm_delta_cls_neg = term->value.norm();
      row.norm_total = out.total.norm();
      row.clf_logprob = world.classifier_logprob(sched, gen.render(theta, cam), t_eval, rule.prompt);
      if (rule.kind == RuleKind::CSD_NEG || rule.kind == RuleKind::CSD_EDIT) {
        row.omega2 = rule.omega2.at(u);
      }
      row.theta = theta;
      result.trajectory.rows.push_back(std::move(row));
    }
  }

  result.final_theta = theta;
  for (std::size_t c = 0; c < gen.camera_count(); ++c) {
    result.final_renders.push_back(gen.render(theta, c));
  }
  result.clf_probs = classifier_probs_of(config, theta);
  result.wall_time_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  return result;
}

std::string GradNormTable::to_csv() const {
  std::string out = "step,norm_delta_gen,norm_delta_cls,running_mean_gen,running_mean_cls\n";
  for (std::size_t i = 0; i < step.size(); ++i) {
    out += std::to_string(step[i]) + ',' + format_double(norm_gen[i]) + ',' +
           format_double(norm_cls[i]) + ',' + format_double(running_mean_gen[i]) + ',' +
           format_double(running_mean_cls[i]) + '\n';
  }
  return out;
}

GradNormTable gradient_norm_experiment(const RunConfig& config) {
  if (config.rule.kind != RuleKind::SDS) {
    throw ConfigError("gradient norm experiment requires rule kind sds, got " +
                      std::string(to_string(config.rule.kind)));
  }
  GradNormTable table;
  table.run = run(config);
  double sum_gen = 0.0;
  double sum_cls = 0.0;
  for (const auto& row : table.run.trajectory.rows) {
    const double g = row.norm_delta_gen.value_or(0.0);
    const double c = row.norm_delta_cls_pos.value_or(0.0);
    sum_gen += g;
    sum_cls += c;
    const auto n = static_cast<double>(table.step.size() + 1);
    table.step.push_back(row.step);
    table.norm_gen.push_back(g);
    table.norm_cls.push_back(c);
    table.running_mean_gen.push_back(sum_gen / n);
    table.running_mean_cls.push_back(sum_cls / n);
  }
  if (sum_cls == 0.0) {
    table.ratio = std::numeric_limits<double>::infinity();
    table.ratio_infinite = true;
  } else {
    // Equal row counts cancel in the ratio of means.
    table.ratio = sum_gen / sum_cls;
  }
  return table;
}

std::vector<RunResult> omega_sweep(const RunConfig& base, std::span<const double> omegas) {
  if (omegas.empty()) throw ConfigError("omega sweep needs at least one omega");
  std::vector<RunConfig> configs;
  configs.reserve(omegas.size());
  for (double w : omegas) {
    RunConfig c = base;
    c.rule.omega = w;
    c.validate();
    configs.push_back(std::move(c));
  }
  // Members own their configs and streams; order of completion does not matter.
  std::vector<std::future<RunResult>> pending;
  pending.reserve(configs.size());
  for (const auto& c : configs) {
    pending.push_back(std::async(std::launch::async, [&c] { return run(c); }));
  }
  std::vector<RunResult> out;
  out.reserve(pending.size());
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

AnnealComparison anneal_comparison(const RunConfig& base) {
  if (base.rule.kind != RuleKind::CSD_NEG) {
    throw ConfigError("anneal comparison requires rule kind csd_neg, got " +
                      std::string(to_string(base.rule.kind)));
  }
  const double start = base.rule.omega2.start;
  RunConfig fixed = base;
  fixed.rule.omega2 = WeightSchedule::constant(start);
  RunConfig annealed = base;
  annealed.rule.omega2 = WeightSchedule::linear(start, 0.0);

  auto fixed_run = std::async(std::launch::async, [&fixed] { return run(fixed); });
  RunResult annealed_result = run(annealed);
  return {fixed_run.get(), std::move(annealed_result)};
}

RunConfig make_edit_config(const RunConfig& source, const std::string& target,
                           const std::string& edit, double w1, double w2) {
  source.world.index_of(source.rule.prompt);
  source.world.index_of(target);
  source.world.index_of(edit);
  RunConfig cfg = source;
  cfg.theta_init = ThetaInit::explicit_values(source.initial_theta());
  cfg.rule.kind = RuleKind::CSD_EDIT;
  cfg.rule.prompt = target;
  cfg.rule.neg_prompt = edit;
  cfg.rule.omega1 = w1;
  cfg.rule.omega2 = WeightSchedule::constant(w2);
  return cfg;
}

EditResult edit_experiment(const RunConfig& source, const std::string& target,
                           const std::string& edit, double w1, double w2) {
  const RunConfig cfg = make_edit_config(source, target, edit, w1, w2);
  const std::vector<std::string> labels{source.rule.prompt, target, edit};

  auto pick = [&](const std::vector<PromptProb>& all) {
    std::vector<PromptProb> out;
    for (const auto& label : labels) {
      for (const auto& p : all) {
        if (p.label == label) out.push_back(p);
      }
    }
    return out;
  };

  EditResult result;
  result.before = pick(classifier_probs_of(cfg, cfg.theta_init.values));
  result.run = run(cfg);
  result.after = pick(result.run.clf_probs);
  return result;
}

}  // namespace csdlab
