#include "csdlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "csdlab/io.hpp"
#include "csdlab/presets.hpp"

namespace csdlab {
namespace {

using nlohmann::json;

constexpr int kConfigVersion = 1;

// A JSON value together with its dotted path, for error reporting.
class Node {
 public:
  Node(const json& value, std::string path) : value_(value), path_(std::move(path)) {}

  const json& value() const { return value_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigFieldError(path_, message);
  }

  void expect_object() const {
    if (!value_.is_object()) fail("expected an object");
  }

  void allow_keys(std::initializer_list<std::string_view> keys) const {
    expect_object();
    for (const auto& [k, _] : value_.items()) {
      bool known = false;
      for (auto allowed : keys) known = known || allowed == k;
      if (!known) child_path_fail(k, "unknown key");
    }
  }

  bool has(std::string_view key) const { return value_.is_object() && value_.contains(key); }

  Node operator[](std::string_view key) const {
    expect_object();
    auto it = value_.find(key);
    if (it == value_.end()) fail("missing required key '" + std::string(key) + "'");
    return Node(*it, join(key));
  }

  std::optional<Node> get(std::string_view key) const {
    expect_object();
    auto it = value_.find(key);
    if (it == value_.end()) return std::nullopt;
    return Node(*it, join(key));
  }

  Node at(std::size_t i) const {
    return Node(value_.at(i), path_ + "[" + std::to_string(i) + "]");
  }

  std::size_t array_size() const {
    if (!value_.is_array()) fail("expected an array");
    return value_.size();
  }

  double number() const {
    if (!value_.is_number()) fail("expected a number");
    return value_.get<double>();
  }

  std::int64_t integer() const {
    if (!value_.is_number_integer()) fail("expected an integer");
    return value_.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer() const {
    if (value_.is_number_unsigned()) return value_.get<std::uint64_t>();
    if (value_.is_number_integer() && value_.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(value_.get<std::int64_t>());
    }
    fail("expected a nonnegative integer");
  }

  std::string string() const {
    if (!value_.is_string()) fail("expected a string");
    return value_.get<std::string>();
  }

  Vec vector() const {
    const std::size_t n = array_size();
    Vec out(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out[static_cast<Eigen::Index>(i)] = at(i).number();
    return out;
  }

  std::vector<double> doubles() const {
    const std::size_t n = array_size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = at(i).number();
    return out;
  }

  Mat matrix() const {
    const std::size_t rows = array_size();
    if (rows == 0) fail("matrix must have at least one row");
    const std::size_t cols = at(0).array_size();
    Mat out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      Node row = at(r);
      if (row.array_size() != cols) row.fail("ragged matrix row");
      for (std::size_t c = 0; c < cols; ++c) {
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row.at(c).number();
      }
    }
    return out;
  }

  // Runs f, converting semantic errors into field errors at this path.
  template <class F>
  auto guard(F&& f) const -> decltype(f()) {
    try {
      return f();
    } catch (const ConfigFieldError&) {
      throw;
    } catch (const ConfigError& e) {
      fail(e.what());
    } catch (const LookupError& e) {
      fail(e.what());
    } catch (const DomainError& e) {
      fail(e.what());
    }
  }

 private:
  std::string join(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  [[noreturn]] void child_path_fail(std::string_view key, const std::string& message) const {
    throw ConfigFieldError(join(key), message);
  }

  const json& value_;
  std::string path_;
};

World parse_world(const Node& n) {
  if (n.value().is_string()) {
    return n.guard([&] { return make_world_preset(n.string()); });
  }
  n.allow_keys({"prompts", "prior"});
  Node prompts = n["prompts"];
  const std::size_t count = prompts.array_size();
  if (count == 0) prompts.fail("world must declare at least one prompt");
  std::vector<World::Prompt> parsed;
  for (std::size_t i = 0; i < count; ++i) {
    Node p = prompts.at(i);
    p.allow_keys({"label", "components"});
    std::string label = p["label"].string();
    Node comps = p["components"];
    const std::size_t k = comps.array_size();
    if (k == 0) comps.fail("mixture must have at least one component");
    std::vector<GaussianComponent> gcs;
    std::vector<double> weights;
    bool any_weight = false;
    for (std::size_t j = 0; j < k; ++j) {
      Node c = comps.at(j);
      c.allow_keys({"mean", "var", "weight"});
      gcs.push_back({c["mean"].vector(), c["var"].vector()});
      if (auto w = c.get("weight")) {
        weights.push_back(w->number());
        any_weight = true;
      } else {
        weights.push_back(1.0 / static_cast<double>(k));
      }
    }
    if (any_weight) {
      for (std::size_t j = 0; j < k; ++j) {
        if (!comps.at(j).has("weight")) comps.at(j).fail("either all or no components set 'weight'");
      }
    }
    parsed.push_back(comps.guard([&] {
      return World::Prompt{std::move(label), Mixture(std::move(gcs), std::move(weights))};
    }));
  }
  std::vector<double> prior;
  if (auto pr = n.get("prior")) {
    prior = pr->doubles();
    return pr->guard([&] { return World(std::move(parsed), std::move(prior)); });
  }
  return n.guard([&] { return World(std::move(parsed)); });
}

DiffusionSchedule parse_schedule(const std::optional<Node>& n) {
  if (!n) return DiffusionSchedule();
  n->allow_keys({"kind", "t_min", "t_max"});
  ScheduleKind kind = ScheduleKind::LinearSigma;
  if (auto k = n->get("kind")) kind = k->guard([&] { return schedule_kind_from_string(k->string()); });
  const double t_min = n->get("t_min") ? (*n)["t_min"].number() : DiffusionSchedule::kDefaultTMin;
  const double t_max = n->get("t_max") ? (*n)["t_max"].number() : DiffusionSchedule::kDefaultTMax;
  return n->guard([&] { return DiffusionSchedule(kind, t_min, t_max); });
}

Generator parse_generator_preset(const Node& n, const std::string& name, std::uint64_t seed,
                                 Eigen::Index dim) {
  if (name == "identity") return Generator::identity(dim);
  constexpr std::string_view kOrtho = "random-orthonormal:";
  if (name.starts_with(kOrtho)) {
    const std::string_view rest = std::string_view(name).substr(kOrtho.size());
    std::size_t k = 0;
    const auto res = std::from_chars(rest.data(), rest.data() + rest.size(), k);
    if (res.ec != std::errc() || res.ptr != rest.data() + rest.size() || k == 0) {
      n.fail("random-orthonormal preset needs a positive camera count, e.g. random-orthonormal:3");
    }
    return Generator::random_orthonormal(dim, k, seed);
  }
  n.fail("unknown generator preset '" + name + "'");
}

Generator parse_generator(const std::optional<Node>& n, Eigen::Index dim) {
  if (!n) return Generator::identity(dim);
  if (n->value().is_string()) return parse_generator_preset(*n, n->string(), 0, dim);
  n->expect_object();
  if (n->has("preset")) {
    n->allow_keys({"preset", "seed"});
    const std::uint64_t seed = n->has("seed") ? (*n)["seed"].unsigned_integer() : 0;
    return parse_generator_preset((*n)["preset"], (*n)["preset"].string(), seed, dim);
  }
  n->allow_keys({"cameras"});
  Node cams = (*n)["cameras"];
  std::vector<Camera> cameras;
  for (std::size_t i = 0; i < cams.array_size(); ++i) {
    Node c = cams.at(i);
    c.allow_keys({"matrix", "offset"});
    Mat m = c["matrix"].matrix();
    Vec off = c.has("offset") ? c["offset"].vector() : Vec::Zero(m.rows());
    cameras.push_back({std::move(m), std::move(off)});
  }
  return cams.guard([&] { return Generator::affine(std::move(cameras)); });
}

WeightSchedule parse_weight_schedule(const Node& n) {
  if (n.value().is_number()) return WeightSchedule::constant(n.number());
  n.allow_keys({"kind", "start", "end"});
  WeightSchedule ws;
  ws.kind = n["kind"].guard([&] { return weight_schedule_kind_from_string(n["kind"].string()); });
  ws.start = n["start"].number();
  ws.end = n.has("end") ? n["end"].number() : ws.start;
  return ws;
}

RuleConfig parse_rule(const Node& n) {
  n.allow_keys({"kind", "omega", "omega1", "omega2", "prompt", "neg_prompt", "w_of_t"});
  RuleConfig r;
  r.kind = n["kind"].guard([&] { return rule_kind_from_string(n["kind"].string()); });
  if (auto v = n.get("omega")) r.omega = v->number();
  if (auto v = n.get("omega1")) r.omega1 = v->number();
  if (auto v = n.get("omega2")) r.omega2 = parse_weight_schedule(*v);
  r.prompt = n["prompt"].string();
  if (auto v = n.get("neg_prompt")) r.neg_prompt = v->string();
  if (auto v = n.get("w_of_t")) {
    r.w_of_t = v->guard([&] { return time_weighting_from_string(v->string()); });
  }
  return r;
}

OptimizerConfig parse_optimizer(const std::optional<Node>& n) {
  OptimizerConfig o;
  if (!n) return o;
  n->allow_keys({"kind", "lr", "beta1", "beta2", "eps"});
  if (auto v = n->get("kind")) o.kind = v->guard([&] { return optimizer_kind_from_string(v->string()); });
  if (auto v = n->get("lr")) o.lr = v->number();
  if (auto v = n->get("beta1")) o.beta1 = v->number();
  if (auto v = n->get("beta2")) o.beta2 = v->number();
  if (auto v = n->get("eps")) o.eps = v->number();
  n->guard([&] { o.validate(); });
  return o;
}

ThetaInit parse_theta_init(const std::optional<Node>& n) {
  if (!n) return ThetaInit::zeros();
  if (n->value().is_string()) {
    const std::string s = n->string();
    if (s == "zeros") return ThetaInit::zeros();
    if (s == "uncond_mean") return ThetaInit::uncond_mean();
    n->fail("unknown theta_init preset '" + s + "' (expected zeros, uncond_mean, {\"sample_from\": label} or a vector)");
  }
  if (n->value().is_array()) return ThetaInit::explicit_values(n->vector());
  n->allow_keys({"sample_from"});
  return ThetaInit::sample_from((*n)["sample_from"].string());
}

VsdSurrogate::Settings parse_vsd(const std::optional<Node>& n) {
  VsdSurrogate::Settings s;
  if (!n) return s;
  n->allow_keys({"fit_window", "refresh_every", "variance_floor"});
  if (auto v = n->get("fit_window")) s.fit_window = v->unsigned_integer();
  if (auto v = n->get("refresh_every")) s.refresh_every = v->unsigned_integer();
  if (auto v = n->get("variance_floor")) s.variance_floor = v->number();
  return s;
}

RunConfig parse_run(const Node& n, const World& world, const DiffusionSchedule& schedule,
                    const Generator& generator) {
  n.allow_keys({"rule", "steps", "optimizer", "seed", "log_every", "theta_init", "t_eval", "vsd"});
  RunConfig cfg{.world = world, .schedule = schedule, .generator = generator, .rule = parse_rule(n["rule"])};
  if (auto v = n.get("steps")) cfg.steps = v->integer();
  cfg.optimizer = parse_optimizer(n.get("optimizer"));
  if (auto v = n.get("seed")) cfg.seed = v->unsigned_integer();
  if (auto v = n.get("log_every")) cfg.log_every = v->integer();
  cfg.theta_init = parse_theta_init(n.get("theta_init"));
  if (auto v = n.get("t_eval")) cfg.t_eval = v->number();
  cfg.vsd = parse_vsd(n.get("vsd"));

  if (cfg.steps <= 0) n["steps"].fail("steps must be > 0");
  if (cfg.log_every <= 0) n["log_every"].fail("log_every must be > 0");
  // Field-specific anchors for the common failure points, then the full check.
  n["rule"].guard([&] { cfg.rule.validate(world); });
  if (auto v = n.get("theta_init")) v->guard([&] { (void)cfg.initial_theta(); });
  n.guard([&] { cfg.validate(); });
  return cfg;
}

void check_stanza(const Node& root, ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::Sweep:
      for (std::size_t i = 0; i < cfg.omegas.size(); ++i) {
        if (!(cfg.omegas[i] >= 0.0)) root["sweep"]["omegas"].at(i).fail("omega must be >= 0");
      }
      if (cfg.omegas.empty()) root["sweep"]["omegas"].fail("sweep needs at least one omega");
      break;
    case ExperimentKind::Anneal:
      if (cfg.base.rule.kind != RuleKind::CSD_NEG) {
        root["anneal"]["base"]["rule"]["kind"].fail("anneal requires rule kind csd_neg");
      }
      break;
    case ExperimentKind::GradNorm:
      if (cfg.base.rule.kind != RuleKind::SDS) {
        root["gradnorm"]["base"]["rule"]["kind"].fail("gradnorm requires rule kind sds");
      }
      break;
    case ExperimentKind::Edit: {
      Node e = root["edit"];
      e["target"].guard([&] { cfg.base.world.index_of(cfg.edit.target); });
      e["edit"].guard([&] { cfg.base.world.index_of(cfg.edit.edit); });
      if (!(cfg.edit.w1 >= 0.0)) e["w1"].fail("w1 must be >= 0");
      if (!(cfg.edit.w2 >= 0.0)) e["w2"].fail("w2 must be >= 0");
      e.guard([&] {
        make_edit_config(cfg.base, cfg.edit.target, cfg.edit.edit, cfg.edit.w1, cfg.edit.w2)
            .validate();
      });
      break;
    }
    case ExperimentKind::Run:
      break;
  }
}

json schedule_json(const DiffusionSchedule& s) {
  return {{"kind", to_string(s.kind())}, {"t_min", s.t_min()}, {"t_max", s.t_max()}};
}

json world_json(const World& w) {
  json prompts = json::array();
  for (const auto& p : w.prompts()) {
    json comps = json::array();
    for (std::size_t k = 0; k < p.mixture.size(); ++k) {
      const auto& c = p.mixture.components()[k];
      comps.push_back({{"mean", vec_to_json(c.mean)},
                       {"var", vec_to_json(c.var)},
                       {"weight", p.mixture.weights()[k]}});
    }
    prompts.push_back({{"label", p.label}, {"components", std::move(comps)}});
  }
  return {{"prompts", std::move(prompts)}, {"prior", w.prior()}};
}

json generator_json(const Generator& g) {
  if (g.kind() == GeneratorKind::Identity) return "identity";
  json cams = json::array();
  for (const auto& c : g.cameras()) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < c.matrix.rows(); ++r) rows.push_back(vec_to_json(c.matrix.row(r).transpose()));
    cams.push_back({{"matrix", std::move(rows)}, {"offset", vec_to_json(c.offset)}});
  }
  return {{"cameras", std::move(cams)}};
}

json weight_schedule_json(const WeightSchedule& ws) {
  return {{"kind", to_string(ws.kind)}, {"start", ws.start}, {"end", ws.end}};
}

json run_json(const RunConfig& c) {
  json rule = {{"kind", to_string(c.rule.kind)},
               {"omega", c.rule.omega},
               {"omega1", c.rule.omega1},
               {"omega2", weight_schedule_json(c.rule.omega2)},
               {"prompt", c.rule.prompt},
               {"w_of_t", to_string(c.rule.w_of_t)}};
  if (c.rule.neg_prompt) rule["neg_prompt"] = *c.rule.neg_prompt;
  json theta;
  switch (c.theta_init.kind) {
    case ThetaInit::Kind::Zeros: theta = "zeros"; break;
    case ThetaInit::Kind::UncondMean: theta = "uncond_mean"; break;
    case ThetaInit::Kind::SampleFrom: theta = {{"sample_from", c.theta_init.label}}; break;
    case ThetaInit::Kind::Explicit: theta = vec_to_json(c.theta_init.values); break;
  }
  return {{"rule", std::move(rule)},
          {"steps", c.steps},
          {"optimizer",
           {{"kind", to_string(c.optimizer.kind)},
            {"lr", c.optimizer.lr},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps}}},
          {"seed", c.seed},
          {"log_every", c.log_every},
          {"theta_init", std::move(theta)},
          {"t_eval", c.eval_time()},
          {"vsd",
           {{"fit_window", c.vsd.fit_window},
            {"refresh_every", c.vsd.refresh_every},
            {"variance_floor", c.vsd.variance_floor}}}};
}

// 1-based line of the first occurrence of each path key in sequence.
std::optional<std::size_t> locate(const std::string& text, const std::string& path) {
  std::size_t pos = 0;
  bool found_any = false;
  std::size_t i = 0;
  while (i < path.size()) {
    std::size_t j = path.find_first_of(".[", i);
    std::string key = path.substr(i, j == std::string::npos ? std::string::npos : j - i);
    if (j != std::string::npos && path[j] == '[') {
      j = path.find(']', j);
      if (j != std::string::npos) ++j;
      if (j < path.size() && path[j] == '.') ++j;
    } else if (j != std::string::npos) {
      ++j;
    }
    if (!key.empty()) {
      const auto hit = text.find('"' + key + '"', pos);
      if (hit == std::string::npos) break;
      pos = hit;
      found_any = true;
    }
    if (j == std::string::npos) break;
    i = j;
  }
  if (!found_any) return std::nullopt;
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Run: return "run";
    case ExperimentKind::Sweep: return "sweep";
    case ExperimentKind::Anneal: return "anneal";
    case ExperimentKind::Edit: return "edit";
    case ExperimentKind::GradNorm: return "gradnorm";
  }
  return "?";
}

ExperimentConfig parse_experiment(const json& doc) {
  Node root(doc, "");
  root.allow_keys({"version", "world", "schedule", "generator", "output_dir", "run", "sweep",
                   "anneal", "edit", "gradnorm"});
  Node version = root["version"];
  if (version.integer() != kConfigVersion) version.fail("unsupported config version (expected 1)");

  const World world = parse_world(root["world"]);
  const DiffusionSchedule schedule = parse_schedule(root.get("schedule"));
  const Generator generator = parse_generator(root.get("generator"), world.dim());

  int stanzas = 0;
  for (auto key : {"run", "sweep", "anneal", "edit", "gradnorm"}) stanzas += root.has(key) ? 1 : 0;
  if (stanzas != 1) {
    root.fail("exactly one experiment stanza (run, sweep, anneal, edit, gradnorm) is required, found " +
              std::to_string(stanzas));
  }

  std::string output_dir = "out";
  if (auto v = root.get("output_dir")) output_dir = v->string();

  ExperimentKind kind = ExperimentKind::Run;
  std::vector<double> omegas;
  EditSpec edit;
  std::optional<RunConfig> base;

  if (auto n = root.get("run")) {
    base = parse_run(*n, world, schedule, generator);
  } else if (auto n = root.get("sweep")) {
    kind = ExperimentKind::Sweep;
    n->allow_keys({"base", "omegas"});
    base = parse_run((*n)["base"], world, schedule, generator);
    omegas = (*n)["omegas"].doubles();
  } else if (auto n = root.get("anneal")) {
    kind = ExperimentKind::Anneal;
    n->allow_keys({"base"});
    base = parse_run((*n)["base"], world, schedule, generator);
  } else if (auto n = root.get("edit")) {
    kind = ExperimentKind::Edit;
    n->allow_keys({"source", "target", "edit", "w1", "w2"});
    base = parse_run((*n)["source"], world, schedule, generator);
    edit.target = (*n)["target"].string();
    edit.edit = (*n)["edit"].string();
    if (auto v = n->get("w1")) edit.w1 = v->number();
    if (auto v = n->get("w2")) edit.w2 = v->number();
  } else if (auto n = root.get("gradnorm")) {
    kind = ExperimentKind::GradNorm;
    n->allow_keys({"base"});
    base = parse_run((*n)["base"], world, schedule, generator);
  }

  ExperimentConfig cfg{kConfigVersion, kind, std::move(*base), std::move(omegas), std::move(edit),
                       std::move(output_dir)};
  check_stanza(root, cfg);
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();

  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    const std::size_t upto = std::min(byte, text.size());
    const auto line =
        std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n') + 1;
    const auto last_nl = text.rfind('\n', upto == 0 ? 0 : upto - 1);
    const std::size_t col = last_nl == std::string::npos || upto == 0 ? upto + 1 : upto - last_nl;
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": invalid JSON: " + e.what());
  }

  try {
    return parse_experiment(doc);
  } catch (const ConfigFieldError& e) {
    const auto line = locate(text, e.path());
    throw ConfigError(path.string() + ":" + std::to_string(line.value_or(1)) + ": " + e.what());
  }
}

void apply_overrides(ExperimentConfig& config, const Overrides& overrides) {
  if (overrides.seed) config.base.seed = *overrides.seed;
  if (overrides.steps) {
    if (*overrides.steps <= 0) throw ConfigError("--steps must be > 0");
    config.base.steps = *overrides.steps;
  }
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
  config.base.validate();
}

json resolved_json(const ExperimentConfig& config) {
  json doc = {{"version", config.version},
              {"world", world_json(config.base.world)},
              {"schedule", schedule_json(config.base.schedule)},
              {"generator", generator_json(config.base.generator)},
              {"output_dir", config.output_dir}};
  const json base = run_json(config.base);
  switch (config.kind) {
    case ExperimentKind::Run:
      doc["run"] = base;
      break;
    case ExperimentKind::Sweep:
      doc["sweep"] = {{"base", base}, {"omegas", config.omegas}};
      break;
    case ExperimentKind::Anneal:
      doc["anneal"] = {{"base", base}};
      break;
    case ExperimentKind::Edit:
      doc["edit"] = {{"source", base},
                     {"target", config.edit.target},
                     {"edit", config.edit.edit},
                     {"w1", config.edit.w1},
                     {"w2", config.edit.w2}};
      break;
    case ExperimentKind::GradNorm:
      doc["gradnorm"] = {{"base", base}};
      break;
  }
  return doc;
}

}  // namespace csdlab
