#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfcalc/cylinder.hpp"
#include "mfcalc/engine.hpp"
#include "mfcalc/measure.hpp"
#include "mfcalc/pde.hpp"

namespace mfcalc {

/// Initial law: a named sampler (gaussian, uniform, dirac) or explicit samples.
struct InitialLaw {
  std::string sampler;            // "gaussian" | "uniform" | "dirac" | "samples"
  std::vector<double> p1, p2;     // mean/std, lo/hi, point
  std::vector<double> samples;    // row-major, for "samples"
  std::size_t dim = 1;

  /// Explicit samples ignore n.
  EmpiricalMeasure materialize(std::size_t n, std::uint64_t seed) const;
  bool fixed_size() const { return sampler == "samples"; }
};

struct TaylorSpec {
  CylinderFunctional f;
  std::vector<double> base;
  std::vector<double> direction;
  std::vector<double> x;
};

struct Scenario {
  std::string name;
  std::size_t dim = 1;
  CoefficientSet coeffs;
  InitialLaw init;
  std::optional<CylinderFunctional> phi;
  std::shared_ptr<const TimeFunctional> candidate;
  SimConfig sim;

  std::vector<double> x;
  std::size_t pilots = 1024;
  std::vector<std::vector<double>> probes;
  std::vector<double> times;
  // Expected pilot law-tangent U(y) at the final step, when known in closed form.
  std::vector<double> u_pilot_y, u_pilot_expected;
  std::optional<TaylorSpec> taylor;
  std::map<std::string, double> tolerances;
  nlohmann::json raw;

  EmpiricalMeasure initial_measure() const { return init.materialize(sim.n_particles, sim.seed); }
  /// tolerances[key] if present, otherwise fallback.
  double tolerance(const std::string& key, double fallback) const;
};

/// Functional catalog:
///   {"kernels": [{"type": "identity", "index": 0} | {"type": "square_half"} |
///                {"type": "cos"|"sin", "index": i, "param": w} | {"type": "gauss", "param": s}],
///    "outer": {"type": "linear", "a": [...], "c": c, "ax": [...]} |
///             {"type": "quadratic", "Q": [...], "a": [...], "c": c} |
///             {"type": "polynomial", "terms": [{"coef": c, "x": [...], "z": [...]}]} |
///             {"type": "composed", "fn": "tanh"|"sin"|"cos"|"exp"|"identity",
///              "scale": s, "inner": {outer}}}
/// or the shorthands {"type": "zero"} and {"type": "constant", "c": c}.
CylinderFunctional parse_functional(const nlohmann::json& j, std::size_t dim,
                                    const std::string& location);

/// {"type": "phi_sum", "terms": [{"a", "c", "lambda", "e", "functional"}]} or
/// {"type": "mean_ratio", "a": a}; the horizon is sim.t_end.
std::shared_ptr<const TimeFunctional> parse_time_functional(const nlohmann::json& j,
                                                            std::size_t dim, double horizon,
                                                            const std::string& location);

Scenario parse_scenario(const nlohmann::json& j, const std::string& fallback_name = "scenario");
Scenario load_scenario(const std::string& path);

}  // namespace mfcalc
