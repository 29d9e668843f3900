#include "csdlab/io.hpp"

#include <charconv>
#include <fstream>
#include <system_error>

#include "csdlab/runner.hpp"

namespace csdlab {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::system_error(errno, std::generic_category(), "open " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw std::system_error(errno, std::generic_category(), "write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json vec_to_json(const Vec& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

nlohmann::json run_result_to_json(const RunResult& result) {
  nlohmann::json j;
  j["final_theta"] = vec_to_json(result.final_theta);
  auto renders = nlohmann::json::array();
  for (const auto& r : result.final_renders) renders.push_back(vec_to_json(r));
  j["final_renders"] = std::move(renders);
  auto probs = nlohmann::json::object();
  for (const auto& p : result.clf_probs) probs[p.label] = p.prob;
  j["clf_probs"] = std::move(probs);
  j["wall_time_ms"] = result.wall_time_ms;
  return j;
}

}  // namespace csdlab
