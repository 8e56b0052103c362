#include "mfcalc/lions.hpp"

#include <algorithm>
#include <cmath>

#include "mfcalc/error.hpp"

namespace mfcalc {

namespace {

double fd_step(double v) { return 1e-4 * (1.0 + std::abs(v)); }

struct KernelJet {
  std::vector<double> value;  // m
  std::vector<double> grad;   // m*d
  std::vector<double> hess;   // m*d*d
};

KernelJet kernel_jet(const CylinderFunctional& f, std::span<const double> y) {
  const std::size_t d = f.dim();
  const std::size_t m = f.num_kernels();
  KernelJet j{std::vector<double>(m), std::vector<double>(m * d), std::vector<double>(m * d * d)};
  for (std::size_t s = 0; s < m; ++s) {
    f.kernels()[s].eval(y, j.value[s], std::span<double>(j.grad).subspan(s * d, d),
                        std::span<double>(j.hess).subspan(s * d * d, d * d));
  }
  return j;
}

OuterDerivatives outer_at(const CylinderFunctional& f, std::span<const double> x,
                          std::span<const double> z) {
  OuterDerivatives g;
  g.resize(f.dim(), f.num_kernels());
  f.derivatives(x, z, g);
  return g;
}

}  // namespace

std::vector<double> lions_derivative_fd(const CylinderFunctional& f, std::span<const double> x,
                                        const EmpiricalMeasure& samples, std::size_t index) {
  const std::size_t n = samples.size();
  const std::size_t d = samples.dim();
  if (index >= n) throw InvalidInput("lions_derivative_fd: index out of range");
  std::vector<double> buf(samples.samples().begin(), samples.samples().end());
  std::vector<double> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    double& c = buf[index * d + k];
    const double orig = c;
    const double h = fd_step(orig);
    c = orig + h;
    const double up = f.eval(x, EmpiricalMeasure(buf, d));
    c = orig - h;
    const double dn = f.eval(x, EmpiricalMeasure(buf, d));
    c = orig;
    out[k] = static_cast<double>(n) * (up - dn) / (2.0 * h);
  }
  return out;
}

LionsDerivativeValue second_lions_derivatives(const CylinderFunctional& f,
                                              std::span<const double> x,
                                              const EmpiricalMeasure& mu,
                                              std::span<const double> y,
                                              std::span<const double> z) {
  const std::size_t d = f.dim();
  const std::size_t m = f.num_kernels();
  if (y.size() != d || z.size() != d) throw InvalidInput("second_lions_derivatives: bad point");
  const auto g = outer_at(f, x, f.moments(mu));
  const auto jy = kernel_jet(f, y);
  const auto jz = kernel_jet(f, z);
  LionsDerivativeValue r{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0),
                         std::vector<double>(d * d, 0.0)};
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t a = 0; a < d; ++a) {
      r.first[a] += g.dz[s] * jy.grad[s * d + a];
      for (std::size_t b = 0; b < d; ++b) {
        r.y_jacobian[a * d + b] += g.dz[s] * jy.hess[s * d * d + a * d + b];
      }
    }
    for (std::size_t t = 0; t < m; ++t) {
      const double c = g.dzz[s * m + t];
      if (c == 0.0) continue;
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) {
          r.second[a * d + b] += c * jy.grad[s * d + a] * jz.grad[t * d + b];
        }
      }
    }
  }
  for (double v : r.first) {
    if (!std::isfinite(v)) throw NumericError("second_lions_derivatives: non-finite first");
  }
  for (double v : r.second) {
    if (!std::isfinite(v)) throw NumericError("second_lions_derivatives: non-finite second");
  }
  return r;
}

std::vector<double> mixed_x_mu(const CylinderFunctional& f, std::span<const double> x,
                               const EmpiricalMeasure& mu, std::span<const double> y) {
  const std::size_t d = f.dim();
  const std::size_t m = f.num_kernels();
  const auto g = outer_at(f, x, f.moments(mu));
  const auto jy = kernel_jet(f, y);
  std::vector<double> out(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t s = 0; s < m; ++s) {
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] += g.dxdz[i * m + s] * jy.grad[s * d + k];
    }
  }
  return out;
}

TaylorRecord taylor_expansion_check(const CylinderFunctional& f, const PairedSample& p,
                                    std::span<const double> x) {
  const auto& base = p.base;
  const auto& dir = p.direction;
  const std::size_t n = base.size();
  const std::size_t d = base.dim();
  const std::size_t m = f.num_kernels();
  if (d != f.dim()) throw InvalidInput("taylor_expansion_check: dimension mismatch");

  TaylorRecord r;
  const auto z0 = f.moments(base);
  r.lhs = f.eval_at(x, f.moments(shift(p, 1.0))) - f.eval_at(x, z0);

  const auto g = outer_at(f, x, z0);
  // Per-index kernel gradients contracted with eta: a[i*m + s] = grad kappa_s(b_i) . eta_i
  std::vector<double> a(n * m, 0.0);
  double first = 0.0, diag = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto jet = kernel_jet(f, base.point(i));
    const auto eta = dir.point(i);
    for (std::size_t s = 0; s < m; ++s) {
      double dot = 0.0, quad = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        dot += jet.grad[s * d + k] * eta[k];
        for (std::size_t l = 0; l < d; ++l) quad += jet.hess[s * d * d + k * d + l] * eta[k] * eta[l];
      }
      a[i * m + s] = dot;
      first += g.dz[s] * dot;
      diag += g.dz[s] * quad;
    }
    double e2 = 0.0;
    for (double v : eta) e2 += v * v;
    tail += std::min(e2 * std::sqrt(e2), e2);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  // Full double average over (i, j) of sum_{st} g_zz[s,t] a_i[s] a_j[t].
  double cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t s = 0; s < m; ++s) {
        for (std::size_t t = 0; t < m; ++t) acc += g.dzz[s * m + t] * a[i * m + s] * a[j * m + t];
      }
      cross += acc;
    }
  }
  r.expansion = first * inv_n + 0.5 * cross * inv_n * inv_n + 0.5 * diag * inv_n;
  r.remainder = r.lhs - r.expansion;
  r.bound_ratio = std::abs(r.remainder) / std::max(tail * inv_n, 1e-300);
  return r;
}

double coefficient_symmetry_check(const CylinderFunctional& f, const EmpiricalMeasure& mu,
                                  std::span<const std::vector<double>> xs) {
  const std::size_t d = f.dim();
  const std::size_t n = mu.size();
  double worst = 0.0;
  for (const auto& x0 : xs) {
    if (x0.size() != d) throw InvalidInput("coefficient_symmetry_check: bad x");
    for (std::size_t j = 0; j < n; ++j) {
      const auto y = mu.point(j);
      const auto closed = mixed_x_mu(f, x0, mu, y);

      // Route 1: FD in x of d_mu f(x, mu, y).
      std::vector<double> route1(d * d);
      std::vector<double> xp = x0;
      for (std::size_t i = 0; i < d; ++i) {
        const double h = fd_step(x0[i]);
        xp[i] = x0[i] + h;
        const auto up = f.lions_derivative(xp, mu, y);
        xp[i] = x0[i] - h;
        const auto dn = f.lions_derivative(xp, mu, y);
        xp[i] = x0[i];
        for (std::size_t k = 0; k < d; ++k) route1[i * d + k] = (up[k] - dn[k]) / (2.0 * h);
      }

      // Route 2: lifted FD over sample j of d_x f(x, mu).
      std::vector<double> route2(d * d);
      std::vector<double> buf(mu.samples().begin(), mu.samples().end());
      for (std::size_t k = 0; k < d; ++k) {
        double& c = buf[j * d + k];
        const double orig = c;
        const double h = fd_step(orig);
        c = orig + h;
        const auto up = f.x_gradient(x0, EmpiricalMeasure(buf, d));
        c = orig - h;
        const auto dn = f.x_gradient(x0, EmpiricalMeasure(buf, d));
        c = orig;
        for (std::size_t i = 0; i < d; ++i) {
          route2[i * d + k] = static_cast<double>(n) * (up[i] - dn[i]) / (2.0 * h);
        }
      }
      for (std::size_t e = 0; e < d * d; ++e) {
        const double scale = 1.0 + std::abs(closed[e]);
        worst = std::max(worst, std::abs(route1[e] - closed[e]) / scale);
        worst = std::max(worst, std::abs(route2[e] - closed[e]) / scale);
      }
    }
  }
  return worst;
}

double indicator_expansion_ratio(std::size_t n, std::size_t count, double c) {
  if (n == 0 || count == 0 || count > n) throw InvalidInput("indicator_expansion_ratio: bad sizes");
  double tail = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eta = i < count ? c : 0.0;
    const double e2 = eta * eta;
    tail += std::min(e2 * std::abs(eta), e2);
    l2 += e2;
  }
  return tail / l2;
}

}  // namespace mfcalc
