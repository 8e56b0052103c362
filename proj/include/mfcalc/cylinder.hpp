#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mfcalc/measure.hpp"

namespace mfcalc {

enum class KernelType { identity, square_half, cos, sin, gauss };

/// Smooth scalar kernel kappa on R^d with closed-form gradient and Hessian.
///   identity:    x[index]
///   square_half: |x|^2 / 2
///   cos / sin:   cos(param * x[index]) / sin(param * x[index])
///   gauss:       exp(-|x|^2 / (2 param^2))
struct Kernel {
  KernelType type = KernelType::identity;
  std::size_t index = 0;
  double param = 1.0;

  double value(std::span<const double> x) const;
  /// grad has d entries, hess d*d (row-major); both are overwritten.
  void eval(std::span<const double> x, double& value, std::span<double> grad,
            std::span<double> hess) const;

  std::string name() const;
};

/// All partials of g(x, z) through order two. Buffers are sized once by
/// resize() and reused in hot loops.
struct OuterDerivatives {
  double value = 0.0;
  std::vector<double> dx;    // d
  std::vector<double> dxx;   // d*d
  std::vector<double> dz;    // m
  std::vector<double> dxdz;  // d*m, [i*m + j] = d^2 g / dx_i dz_j
  std::vector<double> dzz;   // m*m

  void resize(std::size_t d, std::size_t m);
};

/// Outer function g : R^d x R^m -> R of a cylinder functional.
class Outer {
 public:
  virtual ~Outer() = default;
  virtual void eval(std::span<const double> x, std::span<const double> z,
                    OuterDerivatives& out) const = 0;
  /// g(x, z) alone, bit-identical to eval().value.
  virtual double value(std::span<const double> x, std::span<const double> z) const = 0;
  virtual bool depends_on_x() const = 0;
  virtual bool depends_on_z() const = 0;
  virtual bool is_zero() const { return false; }
  virtual std::string describe() const = 0;
};

/// Sum of monomials coef * prod x_i^{px_i} * prod z_j^{pz_j}.
class PolynomialOuter final : public Outer {
 public:
  struct Term {
    double coef = 0.0;
    std::vector<unsigned> x_powers;  // length d
    std::vector<unsigned> z_powers;  // length m
  };

  PolynomialOuter(std::size_t d, std::size_t m, std::vector<Term> terms);

  /// c + sum_j a_j z_j + sum_i ax_i x_i
  static std::shared_ptr<PolynomialOuter> linear(std::size_t d, std::vector<double> a, double c,
                                                 std::vector<double> ax = {});
  /// c + a.z + z^T Q z
  static std::shared_ptr<PolynomialOuter> quadratic(std::size_t d, std::vector<double> q_rowmajor,
                                                    std::vector<double> a = {}, double c = 0.0);

  void eval(std::span<const double> x, std::span<const double> z,
            OuterDerivatives& out) const override;
  double value(std::span<const double> x, std::span<const double> z) const override;
  bool depends_on_x() const override;
  bool depends_on_z() const override;
  bool is_zero() const override { return terms_.empty(); }
  std::string describe() const override;

  const std::vector<Term>& terms() const noexcept { return terms_; }

 private:
  std::size_t d_;
  std::size_t m_;
  std::vector<Term> terms_;
};

enum class ScalarFn { identity, tanh, sin, cos, exp };

/// scale * fn(inner(x, z)).
class ComposedOuter final : public Outer {
 public:
  ComposedOuter(ScalarFn fn, double scale, std::shared_ptr<const Outer> inner, std::size_t d,
                std::size_t m);

  void eval(std::span<const double> x, std::span<const double> z,
            OuterDerivatives& out) const override;
  double value(std::span<const double> x, std::span<const double> z) const override;
  bool depends_on_x() const override { return inner_->depends_on_x(); }
  bool depends_on_z() const override { return inner_->depends_on_z(); }
  std::string describe() const override;

 private:
  ScalarFn fn_;
  double scale_;
  std::shared_ptr<const Outer> inner_;
  std::size_t d_;
  std::size_t m_;
};

/// f(x, mu) = g(x, <mu, kappa_1>, ..., <mu, kappa_m>).
///
/// Lions derivatives are closed-form:
///   d_mu f(x, mu, y)         = sum_j dg/dz_j * grad kappa_j(y)
///   d_y d_mu f(x, mu, y)     = sum_j dg/dz_j * hess kappa_j(y)
///   d^2_mu f(x, mu, y, w)    = sum_{jk} d^2g/dz_j dz_k * grad kappa_j(y) grad kappa_k(w)^T
///   d_x d_mu f(x, mu, y)     = sum_j d^2g/dx dz_j * grad kappa_j(y)^T
class CylinderFunctional {
 public:
  CylinderFunctional(std::size_t dim, std::vector<Kernel> kernels,
                     std::shared_ptr<const Outer> outer);

  static CylinderFunctional zero(std::size_t dim);
  static CylinderFunctional constant(std::size_t dim, double c);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_kernels() const noexcept { return kernels_.size(); }
  const std::vector<Kernel>& kernels() const noexcept { return kernels_; }
  const Outer& outer() const noexcept { return *outer_; }
  bool depends_on_x() const { return outer_->depends_on_x(); }
  bool depends_on_measure() const { return !kernels_.empty() && outer_->depends_on_z(); }
  bool is_zero() const { return outer_->is_zero(); }

  /// z_j = <mu, kappa_j>.
  std::vector<double> moments(const EmpiricalMeasure& mu) const;
  /// Same as moments() over a raw row-major sample buffer of `count` points.
  void moments(std::span<const double> samples, std::size_t count, std::span<double> out) const;

  double eval(std::span<const double> x, const EmpiricalMeasure& mu) const;
  double eval_at(std::span<const double> x, std::span<const double> z) const;
  /// eval_at without the finiteness check, for hot loops.
  double value_at(std::span<const double> x, std::span<const double> z) const {
    return outer_->value(x_or_zero(x), z);
  }
  void derivatives(std::span<const double> x, std::span<const double> z,
                   OuterDerivatives& out) const;

  /// d_mu f(x, mu, y) in R^d.
  std::vector<double> lions_derivative(std::span<const double> x, const EmpiricalMeasure& mu,
                                       std::span<const double> y) const;
  /// d_x f(x, mu) in R^d.
  std::vector<double> x_gradient(std::span<const double> x, const EmpiricalMeasure& mu) const;

  std::string describe() const;

 private:
  std::span<const double> x_or_zero(std::span<const double> x) const;

  std::size_t dim_;
  std::vector<Kernel> kernels_;
  std::shared_ptr<const Outer> outer_;
  std::vector<double> zero_point_;
};

}  // namespace mfcalc
