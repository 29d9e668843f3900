#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "csdlab/types.hpp"

namespace csdlab {

struct RunResult;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

nlohmann::json vec_to_json(const Vec& v);

/// {final_theta, final_renders, clf_probs, wall_time_ms}
nlohmann::json run_result_to_json(const RunResult& result);

}  // namespace csdlab
