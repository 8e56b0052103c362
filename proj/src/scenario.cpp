#include "mfcalc/scenario.hpp"

#include <filesystem>
#include <fstream>

#include "mfcalc/error.hpp"

namespace mfcalc {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, const std::string& loc) {
  if (!j.is_object()) throw ConfigError(loc, "expected an object");
  if (!j.contains(key)) throw ConfigError(loc + "/" + key, "missing");
  return j.at(key);
}

std::string get_string(const json& j, const char* key, const std::string& loc) {
  const auto& v = require(j, key, loc);
  if (!v.is_string()) throw ConfigError(loc + "/" + key, "expected a string");
  return v.get<std::string>();
}

double get_double(const json& j, const std::string& loc) {
  if (!j.is_number()) throw ConfigError(loc, "expected a number");
  return j.get<double>();
}

double opt_double(const json& j, const char* key, double fallback, const std::string& loc) {
  if (!j.contains(key)) return fallback;
  return get_double(j.at(key), loc + "/" + key);
}

std::size_t get_size(const json& j, const std::string& loc) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError(loc, "expected a nonnegative integer");
  }
  return j.get<std::size_t>();
}

std::vector<double> get_vector(const json& j, const std::string& loc) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array()) throw ConfigError(loc, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_double(j[i], loc + "/" + std::to_string(i)));
  return out;
}

std::vector<unsigned> get_powers(const json& j, std::size_t n, const std::string& loc) {
  if (j.is_null()) return std::vector<unsigned>(n, 0);
  if (!j.is_array() || j.size() != n) {
    throw ConfigError(loc, "expected " + std::to_string(n) + " integer powers");
  }
  std::vector<unsigned> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<unsigned>(get_size(j[i], loc + "/" + std::to_string(i))));
  return out;
}

// Samples as [[x0, x1], ...] or a flat list for d = 1.
std::vector<double> get_samples(const json& j, std::size_t d, const std::string& loc) {
  if (!j.is_array() || j.empty()) throw ConfigError(loc, "expected a nonempty sample list");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto row = get_vector(j[i], loc + "/" + std::to_string(i));
    if (row.size() != d) throw ConfigError(loc + "/" + std::to_string(i), "sample has wrong dimension");
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

Kernel parse_kernel(const json& j, std::size_t dim, const std::string& loc) {
  const std::string type = get_string(j, "type", loc);
  Kernel k;
  k.index = j.contains("index") ? get_size(j.at("index"), loc + "/index") : 0;
  k.param = opt_double(j, "param", 1.0, loc);
  if (type == "identity") {
    k.type = KernelType::identity;
  } else if (type == "square_half") {
    k.type = KernelType::square_half;
  } else if (type == "cos") {
    k.type = KernelType::cos;
  } else if (type == "sin") {
    k.type = KernelType::sin;
  } else if (type == "gauss") {
    k.type = KernelType::gauss;
    if (!(k.param > 0.0)) throw ConfigError(loc + "/param", "gauss width must be positive");
  } else {
    throw ConfigError(loc + "/type", "unknown kernel '" + type + "'");
  }
  if (k.index >= dim) throw ConfigError(loc + "/index", "coordinate index out of range");
  return k;
}

std::shared_ptr<const Outer> parse_outer(const json& j, std::size_t dim, std::size_t m,
                                         const std::string& loc) {
  const std::string type = get_string(j, "type", loc);
  if (type == "linear") {
    auto a = j.contains("a") ? get_vector(j.at("a"), loc + "/a") : std::vector<double>{};
    if (a.size() != m) throw ConfigError(loc + "/a", "needs one coefficient per kernel");
    auto ax = j.contains("ax") ? get_vector(j.at("ax"), loc + "/ax") : std::vector<double>{};
    if (!ax.empty() && ax.size() != dim) throw ConfigError(loc + "/ax", "needs d coefficients");
    return PolynomialOuter::linear(dim, a, opt_double(j, "c", 0.0, loc), ax);
  }
  if (type == "quadratic") {
    auto q = get_vector(require(j, "Q", loc), loc + "/Q");
    if (q.size() != m * m) throw ConfigError(loc + "/Q", "needs m*m entries");
    auto a = j.contains("a") ? get_vector(j.at("a"), loc + "/a") : std::vector<double>{};
    if (!a.empty() && a.size() != m) throw ConfigError(loc + "/a", "needs one coefficient per kernel");
    return PolynomialOuter::quadratic(dim, q, a, opt_double(j, "c", 0.0, loc));
  }
  if (type == "polynomial") {
    const auto& terms = require(j, "terms", loc);
    if (!terms.is_array()) throw ConfigError(loc + "/terms", "expected an array");
    std::vector<PolynomialOuter::Term> out;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string tl = loc + "/terms/" + std::to_string(i);
      PolynomialOuter::Term t;
      t.coef = get_double(require(terms[i], "coef", tl), tl + "/coef");
      t.x_powers = get_powers(terms[i].value("x", json()), dim, tl + "/x");
      t.z_powers = get_powers(terms[i].value("z", json()), m, tl + "/z");
      out.push_back(std::move(t));
    }
    return std::make_shared<PolynomialOuter>(dim, m, std::move(out));
  }
  if (type == "composed") {
    const std::string fn = get_string(j, "fn", loc);
    ScalarFn f;
    if (fn == "identity") f = ScalarFn::identity;
    else if (fn == "tanh") f = ScalarFn::tanh;
    else if (fn == "sin") f = ScalarFn::sin;
    else if (fn == "cos") f = ScalarFn::cos;
    else if (fn == "exp") f = ScalarFn::exp;
    else throw ConfigError(loc + "/fn", "unknown function '" + fn + "'");
    auto inner = parse_outer(require(j, "inner", loc), dim, m, loc + "/inner");
    return std::make_shared<ComposedOuter>(f, opt_double(j, "scale", 1.0, loc), inner, dim, m);
  }
  throw ConfigError(loc + "/type", "unknown outer function '" + type + "'");
}

}  // namespace

CylinderFunctional parse_functional(const json& j, std::size_t dim, const std::string& loc) {
  if (!j.is_object()) throw ConfigError(loc, "expected a functional object");
  if (j.contains("type")) {
    const std::string type = get_string(j, "type", loc);
    if (type == "zero") return CylinderFunctional::zero(dim);
    if (type == "constant") return CylinderFunctional::constant(dim, opt_double(j, "c", 0.0, loc));
    throw ConfigError(loc + "/type", "unknown functional shorthand '" + type + "'");
  }
  std::vector<Kernel> kernels;
  if (j.contains("kernels")) {
    const auto& ks = j.at("kernels");
    if (!ks.is_array()) throw ConfigError(loc + "/kernels", "expected an array");
    for (std::size_t i = 0; i < ks.size(); ++i) {
      kernels.push_back(parse_kernel(ks[i], dim, loc + "/kernels/" + std::to_string(i)));
    }
  }
  auto outer = parse_outer(require(j, "outer", loc), dim, kernels.size(), loc + "/outer");
  try {
    return CylinderFunctional(dim, std::move(kernels), std::move(outer));
  } catch (const InvalidInput& e) {
    throw ConfigError(loc, e.what());
  }
}

std::shared_ptr<const TimeFunctional> parse_time_functional(const json& j, std::size_t dim,
                                                            double horizon,
                                                            const std::string& loc) {
  const std::string type = get_string(j, "type", loc);
  if (type == "phi_sum") {
    const auto& terms = require(j, "terms", loc);
    if (!terms.is_array() || terms.empty()) throw ConfigError(loc + "/terms", "expected a nonempty array");
    std::vector<PhiSumFunctional::Term> out;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string tl = loc + "/terms/" + std::to_string(i);
      const auto& t = terms[i];
      out.push_back({opt_double(t, "a", 0.0, tl), opt_double(t, "c", 0.0, tl),
                     opt_double(t, "lambda", 0.0, tl), opt_double(t, "e", 0.0, tl),
                     parse_functional(require(t, "functional", tl), dim, tl + "/functional")});
    }
    return std::make_shared<PhiSumFunctional>(horizon, std::move(out));
  }
  if (type == "mean_ratio") {
    return std::make_shared<MeanRatioFunctional>(dim, horizon, opt_double(j, "a", 1.0, loc));
  }
  throw ConfigError(loc + "/type", "unknown time functional '" + type + "'");
}

EmpiricalMeasure InitialLaw::materialize(std::size_t n, std::uint64_t seed) const {
  if (sampler == "samples") return EmpiricalMeasure(samples, dim);
  if (sampler == "gaussian") return sample_gaussian(p1, p2, n, seed);
  if (sampler == "uniform") return sample_uniform(p1, p2, n, seed);
  if (sampler == "dirac") return sample_dirac(p1, n);
  throw ConfigError("/initial_law", "unknown sampler '" + sampler + "'");
}

double Scenario::tolerance(const std::string& key, double fallback) const {
  auto it = tolerances.find(key);
  return it == tolerances.end() ? fallback : it->second;
}

namespace {

InitialLaw parse_initial_law(const json& j, std::size_t dim, const std::string& loc) {
  InitialLaw law;
  law.dim = dim;
  if (j.contains("samples")) {
    law.sampler = "samples";
    law.samples = get_samples(j.at("samples"), dim, loc + "/samples");
    return law;
  }
  law.sampler = get_string(j, "sampler", loc);
  auto vec = [&](const char* key) {
    auto v = get_vector(require(j, key, loc), loc + "/" + key);
    if (v.size() != dim) throw ConfigError(loc + "/" + key, "needs d entries");
    return v;
  };
  if (law.sampler == "gaussian") {
    law.p1 = vec("mean");
    law.p2 = vec("std");
    for (double s : law.p2) {
      if (s < 0.0) throw ConfigError(loc + "/std", "standard deviation must be nonnegative");
    }
  } else if (law.sampler == "uniform") {
    law.p1 = vec("lo");
    law.p2 = vec("hi");
  } else if (law.sampler == "dirac") {
    law.p1 = vec("at");
  } else {
    throw ConfigError(loc + "/sampler", "unknown sampler '" + law.sampler + "'");
  }
  return law;
}

std::vector<CylinderFunctional> parse_list(const json& j, std::size_t count, std::size_t dim,
                                           const std::string& loc) {
  if (!j.is_array() || j.size() != count) {
    throw ConfigError(loc, "expected " + std::to_string(count) + " functionals");
  }
  std::vector<CylinderFunctional> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(parse_functional(j[i], dim, loc + "/" + std::to_string(i)));
  return out;
}

}  // namespace

Scenario parse_scenario(const json& j, const std::string& fallback_name) {
  if (!j.is_object()) throw ConfigError("", "scenario must be a JSON object");
  const std::size_t dim = j.contains("dimension") ? get_size(j.at("dimension"), "/dimension") : 1;
  if (dim == 0) throw ConfigError("/dimension", "must be positive");
  const auto& co = require(j, "coefficients", "");
  auto sigma = co.contains("sigma") ? parse_list(co.at("sigma"), dim * dim, dim, "/coefficients/sigma")
                                    : std::vector<CylinderFunctional>(dim * dim, CylinderFunctional::zero(dim));
  auto drift = co.contains("drift") ? parse_list(co.at("drift"), dim, dim, "/coefficients/drift")
                                    : std::vector<CylinderFunctional>(dim, CylinderFunctional::zero(dim));

  std::string name = fallback_name;
  if (j.contains("name")) name = get_string(j, "name", "");
  Scenario s{name, dim, CoefficientSet(dim, std::move(sigma), std::move(drift)),
             parse_initial_law(require(j, "initial_law", ""), dim, "/initial_law"),
             std::nullopt, nullptr, SimConfig{}, {}, 1024, {}, {}, {}, {}, std::nullopt, {}, j};

  if (j.contains("sim")) {
    const auto& sm = j.at("sim");
    const std::string l = "/sim";
    if (sm.contains("n_particles")) s.sim.n_particles = get_size(sm.at("n_particles"), l + "/n_particles");
    if (sm.contains("n_steps")) s.sim.n_steps = get_size(sm.at("n_steps"), l + "/n_steps");
    s.sim.t_start = opt_double(sm, "t_start", s.sim.t_start, l);
    s.sim.t_end = opt_double(sm, "t_end", s.sim.t_end, l);
    if (sm.contains("seed")) {
      const auto& seed = sm.at("seed");
      if (!seed.is_number_unsigned()) throw ConfigError(l + "/seed", "expected a nonnegative integer");
      s.sim.seed = seed.get<std::uint64_t>();
    }
  }
  if (s.init.fixed_size()) s.sim.n_particles = s.init.samples.size() / dim;
  try {
    s.sim.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("/sim", e.what());
  }

  if (j.contains("phi")) s.phi = parse_functional(j.at("phi"), dim, "/phi");
  if (j.contains("candidate")) {
    s.candidate = parse_time_functional(j.at("candidate"), dim, s.sim.t_end, "/candidate");
  }
  s.x.assign(dim, 0.0);
  if (j.contains("value")) {
    const auto& v = j.at("value");
    if (v.contains("x")) {
      s.x = get_vector(v.at("x"), "/value/x");
      if (s.x.size() != dim) throw ConfigError("/value/x", "needs d entries");
    }
    if (v.contains("m")) s.pilots = get_size(v.at("m"), "/value/m");
    if (v.contains("probes")) {
      const auto& pr = v.at("probes");
      if (!pr.is_array()) throw ConfigError("/value/probes", "expected an array");
      for (std::size_t i = 0; i < pr.size(); ++i) {
        auto y = get_vector(pr[i], "/value/probes/" + std::to_string(i));
        if (y.size() != dim) throw ConfigError("/value/probes/" + std::to_string(i), "needs d entries");
        s.probes.push_back(std::move(y));
      }
    }
    if (v.contains("times")) s.times = get_vector(v.at("times"), "/value/times");
    if (v.contains("u_pilot")) {
      const auto& u = v.at("u_pilot");
      s.u_pilot_y = get_vector(require(u, "y", "/value/u_pilot"), "/value/u_pilot/y");
      s.u_pilot_expected = get_vector(require(u, "expected", "/value/u_pilot"), "/value/u_pilot/expected");
      if (s.u_pilot_y.size() != dim || s.u_pilot_expected.size() != dim * dim) {
        throw ConfigError("/value/u_pilot", "needs y in R^d and a d x d expected block");
      }
    }
  }
  if (j.contains("taylor")) {
    const auto& t = j.at("taylor");
    TaylorSpec ts{parse_functional(require(t, "functional", "/taylor"), dim, "/taylor/functional"),
                  get_samples(require(t, "base", "/taylor"), dim, "/taylor/base"),
                  get_samples(require(t, "direction", "/taylor"), dim, "/taylor/direction"),
                  t.contains("x") ? get_vector(t.at("x"), "/taylor/x") : std::vector<double>(dim, 0.0)};
    if (ts.base.size() != ts.direction.size()) {
      throw ConfigError("/taylor/direction", "must match the base sample count");
    }
    s.taylor = std::move(ts);
  }
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    if (!t.is_object()) throw ConfigError("/tolerances", "expected an object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      const double v = get_double(it.value(), "/tolerances/" + it.key());
      if (!(v > 0.0)) throw ConfigError("/tolerances/" + it.key(), "tolerance must be positive");
      s.tolerances[it.key()] = v;
    }
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open scenario file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(j, std::filesystem::path(path).stem().string());
}

}  // namespace mfcalc
