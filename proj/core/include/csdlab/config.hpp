#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csdlab/errors.hpp"
#include "csdlab/runner.hpp"

namespace csdlab {

enum class ExperimentKind { Run, Sweep, Anneal, Edit, GradNorm };

std::string_view to_string(ExperimentKind kind);

struct EditSpec {
  std::string target;
  std::string edit;
  double w1 = 1.0;
  double w2 = 0.5;
};

/// One experiment file, fully resolved and statically validated.
///
/// `base` holds the run stanza, the sweep/anneal/gradnorm base, or the edit source.
struct ExperimentConfig {
  int version = 1;
  ExperimentKind kind = ExperimentKind::Run;
  RunConfig base;
  std::vector<double> omegas;  // sweep
  EditSpec edit;               // edit
  std::string output_dir = "out";
};

/// Config error carrying the dotted JSON path of the offending field.
class ConfigFieldError : public ConfigError {
 public:
  ConfigFieldError(std::string path, const std::string& message)
      : ConfigError(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Parses and validates a config document. Throws ConfigFieldError.
ExperimentConfig parse_experiment(const nlohmann::json& doc);

/// Reads a config file. Errors are rethrown as ConfigError whose message is
/// anchored at "<file>:<line>:" (syntax errors also carry the column).
ExperimentConfig load_experiment(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<std::string> output_dir;
};

/// Applies CLI overrides and revalidates.
void apply_overrides(ExperimentConfig& config, const Overrides& overrides);

/// Fully resolved config with every default filled in; parse_experiment
/// accepts it and reproduces the same experiment.
nlohmann::json resolved_json(const ExperimentConfig& config);

}  // namespace csdlab
