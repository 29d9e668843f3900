#include "cli.hpp"

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "csdlab/config.hpp"
#include "csdlab/io.hpp"
#include "csdlab/presets.hpp"
#include "csdlab/runner.hpp"

namespace csdlab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<std::string> out;
};

std::string format_prob(double p) {
  std::ostringstream os;
  os << std::setprecision(6) << p;
  return os.str();
}

std::string format_ms(double ms) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << ms << " ms";
  return os.str();
}

void write_run(const fs::path& dir, const RunResult& r, const RunConfig& cfg, json extra = {}) {
  write_file_atomic(dir / "trajectory.csv", r.trajectory.to_csv(cfg.generator.param_dim()));
  json j = run_result_to_json(r);
  if (extra.is_object()) j.update(extra);
  write_file_atomic(dir / "result.json", j.dump(2) + "\n");
}

int execute(ExperimentKind kind, const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  write_file_atomic(dir / "config.resolved.json", resolved_json(cfg).dump(2) + "\n");
  const auto& base = cfg.base;
  const std::string& y = base.rule.prompt;

  switch (kind) {
    case ExperimentKind::Run: {
      const RunResult r = run(base);
      write_run(dir, r, base);
      out << "run: p(" << y << ")=" << format_prob(r.prob_of(y)) << " wall=" << format_ms(r.wall_time_ms)
          << "\n";
      break;
    }
    case ExperimentKind::Sweep: {
      const auto results = omega_sweep(base, cfg.omegas);
      json runs = json::array();
      double wall = 0.0;
      for (std::size_t i = 0; i < results.size(); ++i) {
        const fs::path sub = dir / ("omega_" + std::to_string(i));
        write_run(sub, results[i], base, {{"omega", cfg.omegas[i]}});
        json j = run_result_to_json(results[i]);
        j["omega"] = cfg.omegas[i];
        j["trajectory"] = (fs::path("omega_" + std::to_string(i)) / "trajectory.csv").string();
        runs.push_back(std::move(j));
        wall += results[i].wall_time_ms;
      }
      write_file_atomic(dir / "result.json", json{{"runs", runs}, {"wall_time_ms", wall}}.dump(2) + "\n");
      out << "sweep:";
      for (std::size_t i = 0; i < results.size(); ++i) {
        out << " omega=" << cfg.omegas[i] << " p(" << y << ")=" << format_prob(results[i].prob_of(y));
      }
      out << " wall=" << format_ms(wall) << "\n";
      break;
    }
    case ExperimentKind::Anneal: {
      const auto cmp = anneal_comparison(base);
      write_run(dir / "fixed", cmp.fixed, base);
      write_run(dir / "annealed", cmp.annealed, base);
      const double wall = cmp.fixed.wall_time_ms + cmp.annealed.wall_time_ms;
      write_file_atomic(dir / "result.json",
                        json{{"fixed", run_result_to_json(cmp.fixed)},
                             {"annealed", run_result_to_json(cmp.annealed)},
                             {"wall_time_ms", wall}}
                                .dump(2) +
                            "\n");
      out << "anneal: fixed p(" << y << ")=" << format_prob(cmp.fixed.prob_of(y)) << " annealed p(" << y
          << ")=" << format_prob(cmp.annealed.prob_of(y)) << " wall=" << format_ms(wall) << "\n";
      break;
    }
    case ExperimentKind::Edit: {
      const auto res = edit_experiment(base, cfg.edit.target, cfg.edit.edit, cfg.edit.w1, cfg.edit.w2);
      auto probs = [](const std::vector<PromptProb>& ps) {
        json j = json::object();
        for (const auto& p : ps) j[p.label] = p.prob;
        return j;
      };
      write_run(dir, res.run, base,
                {{"probs_before", probs(res.before)}, {"probs_after", probs(res.after)}});
      out << "edit: p(" << cfg.edit.target << ") " << format_prob(res.before[1].prob) << " -> "
          << format_prob(res.after[1].prob) << " wall=" << format_ms(res.run.wall_time_ms) << "\n";
      break;
    }
    case ExperimentKind::GradNorm: {
      const auto table = gradient_norm_experiment(base);
      write_file_atomic(dir / "gradnorm.csv", table.to_csv());
      // JSON has no infinity; the flag carries the sentinel.
      json extra = {{"ratio_infinite", table.ratio_infinite}};
      extra["ratio"] = table.ratio_infinite ? json(nullptr) : json(table.ratio);
      write_run(dir, table.run, base, extra);
      out << "gradnorm: mean|delta_gen|/mean|delta_cls|="
          << (table.ratio_infinite ? std::string("inf") : format_prob(table.ratio)) << " p(" << y
          << ")=" << format_prob(table.run.prob_of(y)) << " wall=" << format_ms(table.run.wall_time_ms)
          << "\n";
      break;
    }
  }
  return kExitOk;
}

ExperimentConfig load(const Options& opts) {
  ExperimentConfig cfg = load_experiment(opts.config_path);
  Overrides ov{opts.seed, opts.steps, opts.out};
  apply_overrides(cfg, ov);
  return cfg;
}

}  // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"csdlab: score-distillation rules on exact Gaussian-mixture diffusion worlds", "csdlab"};
  app.require_subcommand(1);

  Options opts;
  struct Sub {
    ExperimentKind kind;
    CLI::App* app;
  };
  std::vector<Sub> experiments;
  const std::pair<ExperimentKind, const char*> specs[] = {
      {ExperimentKind::Run, "run a single optimization"},
      {ExperimentKind::Sweep, "run one optimization per guidance weight"},
      {ExperimentKind::Anneal, "compare fixed and annealed negative-prompt weights"},
      {ExperimentKind::Edit, "continue from a source under the editing rule"},
      {ExperimentKind::GradNorm, "track generative vs classifier gradient norms under SDS"},
  };
  for (const auto& [kind, desc] : specs) {
    auto* sub = app.add_subcommand(std::string(to_string(kind)), desc);
    sub->add_option("config", opts.config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", opts.seed, "override the run seed");
    sub->add_option("--steps", opts.steps, "override the step count");
    sub->add_option("--out", opts.out, "override output_dir");
    experiments.push_back({kind, sub});
  }
  auto* validate = app.add_subcommand("validate", "parse and check a config without running it");
  validate->add_option("config", opts.config_path, "experiment config (JSON)")->required();
  validate->add_option("--seed", opts.seed, "override the run seed");
  validate->add_option("--steps", opts.steps, "override the step count");
  validate->add_option("--out", opts.out, "override output_dir");
  auto* presets = app.add_subcommand("presets", "list built-in worlds");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();  // program name
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    if (presets->parsed()) {
      for (const auto& p : world_presets()) out << p.name << "\t" << p.description << "\n";
      return kExitOk;
    }
    if (validate->parsed()) {
      const ExperimentConfig cfg = load(opts);
      out << "ok: " << to_string(cfg.kind) << " experiment, rule " << to_string(cfg.base.rule.kind)
          << ", " << cfg.base.steps << " steps\n";
      return kExitOk;
    }
    for (const auto& sub : experiments) {
      if (!sub.app->parsed()) continue;
      const ExperimentConfig cfg = load(opts);
      if (cfg.kind != sub.kind) {
        err << opts.config_path << ": config declares a " << to_string(cfg.kind)
            << " experiment; use 'csdlab " << to_string(cfg.kind) << "'\n";
        return kExitConfigError;
      }
      return execute(sub.kind, cfg, out);
    }
  } catch (const DivergedError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitConfigError;
}

}  // namespace csdlab::cli
