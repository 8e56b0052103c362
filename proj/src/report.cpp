#include "mfcalc/report.hpp"

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mfcalc/error.hpp"

namespace mfcalc {

Check gate(std::string name, double value, double limit) {
  return {std::move(name), value, limit, std::isfinite(value) && value <= limit};
}

Check gate_finite(std::string name, double value) {
  return {std::move(name), value, 0.0, std::isfinite(value), true};
}

namespace {

// JSON has no inf/nan; write them as strings.
nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream os(p);
  if (!os) throw InvalidInput("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

}  // namespace

nlohmann::json to_json(const std::vector<Check>& checks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : checks) {
    nlohmann::json j{{"name", c.name}, {"value", number(c.value)}, {"pass", c.pass}};
    if (c.finite_only) {
      j["limit"] = "finite";
    } else {
      j["limit"] = c.limit;
    }
    out.push_back(std::move(j));
  }
  return out;
}

bool all_pass(const std::vector<Check>& checks) {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

std::filesystem::path resolve_out_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MFCALC_OUT"); env != nullptr && *env != '\0') return env;
  return "out";
}

RunDirectory::RunDirectory(const std::filesystem::path& root, const std::string& scenario,
                           const std::string& subcommand) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream stamp;
  stamp << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  const auto base = root / scenario / subcommand;
  dir_ = base / stamp.str();
  for (int i = 1; std::filesystem::exists(dir_); ++i) {
    dir_ = base / (stamp.str() + "-" + std::to_string(i));
  }
  std::filesystem::create_directories(dir_ / "tables");
}

void RunDirectory::write_report(const nlohmann::json& report) const {
  write_json(dir_ / "report.json", report);
}

void RunDirectory::write_params(const nlohmann::json& params) const {
  write_json(dir_ / "params.json", params);
}

std::filesystem::path RunDirectory::table_path(const std::string& name) const {
  return dir_ / "tables" / (name + ".csv");
}

void RunDirectory::write_table(const std::string& name, const std::vector<std::string>& header,
                               const std::vector<std::vector<double>>& rows) const {
  std::ofstream os(table_path(name));
  if (!os) throw InvalidInput("cannot write table " + name);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
}

}  // namespace mfcalc
