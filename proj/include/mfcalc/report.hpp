#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace mfcalc {

/// One gated comparison: passes iff value <= limit (and value is finite).
struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
  bool finite_only = false;
};

Check gate(std::string name, double value, double limit);
/// Passes iff value is finite.
Check gate_finite(std::string name, double value);

nlohmann::json to_json(const std::vector<Check>& checks);
bool all_pass(const std::vector<Check>& checks);

/// Output root: the explicit flag, else $MFCALC_OUT, else "out".
std::filesystem::path resolve_out_root(const std::string& flag);

/// out/<scenario>/<subcommand>/<timestamp>/ with report.json, params.json and
/// tables/*.csv. The timestamp is UTC; a numeric suffix keeps runs apart.
class RunDirectory {
 public:
  RunDirectory(const std::filesystem::path& root, const std::string& scenario,
               const std::string& subcommand);

  const std::filesystem::path& path() const noexcept { return dir_; }
  void write_report(const nlohmann::json& report) const;
  void write_params(const nlohmann::json& params) const;
  void write_table(const std::string& name, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows) const;
  /// Path of tables/<name>.csv for callers that stream their own CSV.
  std::filesystem::path table_path(const std::string& name) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace mfcalc
