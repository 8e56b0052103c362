#include "mfcalc/cylinder.hpp"

#include <cmath>
#include <memory>
#include <sstream>

#include "mfcalc/error.hpp"

namespace mfcalc {

namespace {

double ipow(double base, unsigned p) {
  double r = 1.0;
  for (unsigned k = 0; k < p; ++k) r *= base;
  return r;
}

void require_index(std::size_t index, std::size_t d, const char* what) {
  if (index >= d) throw InvalidInput(std::string(what) + ": coordinate index out of range");
}

}  // namespace

double Kernel::value(std::span<const double> x) const {
  switch (type) {
    case KernelType::identity:
      return x[index];
    case KernelType::square_half: {
      double s = 0.0;
      for (double v : x) s += v * v;
      return 0.5 * s;
    }
    case KernelType::cos:
      return std::cos(param * x[index]);
    case KernelType::sin:
      return std::sin(param * x[index]);
    case KernelType::gauss: {
      double s = 0.0;
      for (double v : x) s += v * v;
      return std::exp(-s / (2.0 * param * param));
    }
  }
  return 0.0;
}

void Kernel::eval(std::span<const double> x, double& v, std::span<double> grad,
                  std::span<double> hess) const {
  const std::size_t d = x.size();
  std::fill(grad.begin(), grad.end(), 0.0);
  std::fill(hess.begin(), hess.end(), 0.0);
  switch (type) {
    case KernelType::identity:
      v = x[index];
      grad[index] = 1.0;
      return;
    case KernelType::square_half: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        s += x[i] * x[i];
        grad[i] = x[i];
        hess[i * d + i] = 1.0;
      }
      v = 0.5 * s;
      return;
    }
    case KernelType::cos: {
      const double a = param * x[index];
      v = std::cos(a);
      grad[index] = -param * std::sin(a);
      hess[index * d + index] = -param * param * v;
      return;
    }
    case KernelType::sin: {
      const double a = param * x[index];
      v = std::sin(a);
      grad[index] = param * std::cos(a);
      hess[index * d + index] = -param * param * v;
      return;
    }
    case KernelType::gauss: {
      const double s2 = param * param;
      double r2 = 0.0;
      for (double c : x) r2 += c * c;
      v = std::exp(-r2 / (2.0 * s2));
      for (std::size_t i = 0; i < d; ++i) {
        grad[i] = -x[i] / s2 * v;
        for (std::size_t j = 0; j < d; ++j) {
          hess[i * d + j] = (x[i] * x[j] / (s2 * s2) - (i == j ? 1.0 / s2 : 0.0)) * v;
        }
      }
      return;
    }
  }
}

std::string Kernel::name() const {
  std::ostringstream os;
  switch (type) {
    case KernelType::identity: os << "identity(" << index << ")"; break;
    case KernelType::square_half: os << "square_half"; break;
    case KernelType::cos: os << "cos(" << param << "*x" << index << ")"; break;
    case KernelType::sin: os << "sin(" << param << "*x" << index << ")"; break;
    case KernelType::gauss: os << "gauss(" << param << ")"; break;
  }
  return os.str();
}

void OuterDerivatives::resize(std::size_t d, std::size_t m) {
  dx.assign(d, 0.0);
  dxx.assign(d * d, 0.0);
  dz.assign(m, 0.0);
  dxdz.assign(d * m, 0.0);
  dzz.assign(m * m, 0.0);
}

// ---------------------------------------------------------------------------

PolynomialOuter::PolynomialOuter(std::size_t d, std::size_t m, std::vector<Term> terms)
    : d_(d), m_(m) {
  for (auto& t : terms) {
    if (t.x_powers.empty()) t.x_powers.assign(d, 0);
    if (t.z_powers.empty()) t.z_powers.assign(m, 0);
    if (t.x_powers.size() != d || t.z_powers.size() != m) {
      throw InvalidInput("polynomial outer: power vector length mismatch");
    }
    if (t.coef != 0.0) terms_.push_back(std::move(t));
  }
}

std::shared_ptr<PolynomialOuter> PolynomialOuter::linear(std::size_t d, std::vector<double> a,
                                                         double c, std::vector<double> ax) {
  const std::size_t m = a.size();
  if (!ax.empty() && ax.size() != d) throw InvalidInput("linear outer: ax must have d entries");
  std::vector<Term> terms;
  terms.push_back({c, {}, {}});
  for (std::size_t j = 0; j < m; ++j) {
    Term t{a[j], {}, std::vector<unsigned>(m, 0)};
    t.z_powers[j] = 1;
    terms.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < ax.size(); ++i) {
    Term t{ax[i], std::vector<unsigned>(d, 0), {}};
    t.x_powers[i] = 1;
    terms.push_back(std::move(t));
  }
  return std::make_shared<PolynomialOuter>(d, m, std::move(terms));
}

std::shared_ptr<PolynomialOuter> PolynomialOuter::quadratic(std::size_t d,
                                                            std::vector<double> q,
                                                            std::vector<double> a, double c) {
  const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(q.size()))));
  if (m * m != q.size()) throw InvalidInput("quadratic outer: Q must be square");
  if (!a.empty() && a.size() != m) throw InvalidInput("quadratic outer: a must have m entries");
  std::vector<Term> terms;
  terms.push_back({c, {}, {}});
  for (std::size_t j = 0; j < a.size(); ++j) {
    Term t{a[j], {}, std::vector<unsigned>(m, 0)};
    t.z_powers[j] = 1;
    terms.push_back(std::move(t));
  }
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < m; ++k) {
      Term t{q[j * m + k], {}, std::vector<unsigned>(m, 0)};
      t.z_powers[j] += 1;
      t.z_powers[k] += 1;
      terms.push_back(std::move(t));
    }
  }
  return std::make_shared<PolynomialOuter>(d, m, std::move(terms));
}

void PolynomialOuter::eval(std::span<const double> x, std::span<const double> z,
                           OuterDerivatives& out) const {
  const std::size_t n = d_ + m_;
  out.value = 0.0;
  std::fill(out.dx.begin(), out.dx.end(), 0.0);
  std::fill(out.dxx.begin(), out.dxx.end(), 0.0);
  std::fill(out.dz.begin(), out.dz.end(), 0.0);
  std::fill(out.dxdz.begin(), out.dxdz.end(), 0.0);
  std::fill(out.dzz.begin(), out.dzz.end(), 0.0);

  // Work on the stacked variable v = (x, z) with powers p.
  double v[16];
  unsigned p[16];
  double grad[16];
  double hess[256];
  if (n > 16) throw UnsupportedConfiguration("polynomial outer: more than 16 variables");
  for (std::size_t i = 0; i < d_; ++i) v[i] = x[i];
  for (std::size_t j = 0; j < m_; ++j) v[d_ + j] = z[j];

  for (const auto& t : terms_) {
    for (std::size_t i = 0; i < d_; ++i) p[i] = t.x_powers[i];
    for (std::size_t j = 0; j < m_; ++j) p[d_ + j] = t.z_powers[j];
    double val = t.coef;
    for (std::size_t k = 0; k < n; ++k) val *= ipow(v[k], p[k]);
    for (std::size_t k = 0; k < n; ++k) {
      if (p[k] == 0) {
        grad[k] = 0.0;
        continue;
      }
      double g = t.coef * p[k] * ipow(v[k], p[k] - 1);
      for (std::size_t l = 0; l < n; ++l) {
        if (l != k) g *= ipow(v[l], p[l]);
      }
      grad[k] = g;
    }
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = k; l < n; ++l) {
        double h = 0.0;
        if (k == l) {
          if (p[k] >= 2) {
            h = t.coef * p[k] * (p[k] - 1) * ipow(v[k], p[k] - 2);
            for (std::size_t r = 0; r < n; ++r) {
              if (r != k) h *= ipow(v[r], p[r]);
            }
          }
        } else if (p[k] >= 1 && p[l] >= 1) {
          h = t.coef * p[k] * p[l] * ipow(v[k], p[k] - 1) * ipow(v[l], p[l] - 1);
          for (std::size_t r = 0; r < n; ++r) {
            if (r != k && r != l) h *= ipow(v[r], p[r]);
          }
        }
        hess[k * n + l] = h;
        hess[l * n + k] = h;
      }
    }
    out.value += val;
    for (std::size_t i = 0; i < d_; ++i) {
      out.dx[i] += grad[i];
      for (std::size_t k = 0; k < d_; ++k) out.dxx[i * d_ + k] += hess[i * n + k];
      for (std::size_t j = 0; j < m_; ++j) out.dxdz[i * m_ + j] += hess[i * n + d_ + j];
    }
    for (std::size_t j = 0; j < m_; ++j) {
      out.dz[j] += grad[d_ + j];
      for (std::size_t k = 0; k < m_; ++k) out.dzz[j * m_ + k] += hess[(d_ + j) * n + d_ + k];
    }
  }
}

double PolynomialOuter::value(std::span<const double> x, std::span<const double> z) const {
  double sum = 0.0;
  for (const auto& t : terms_) {
    double val = t.coef;
    for (std::size_t i = 0; i < d_; ++i) val *= ipow(x[i], t.x_powers[i]);
    for (std::size_t j = 0; j < m_; ++j) val *= ipow(z[j], t.z_powers[j]);
    sum += val;
  }
  return sum;
}

bool PolynomialOuter::depends_on_x() const {
  for (const auto& t : terms_) {
    for (unsigned p : t.x_powers) {
      if (p) return true;
    }
  }
  return false;
}

bool PolynomialOuter::depends_on_z() const {
  for (const auto& t : terms_) {
    for (unsigned p : t.z_powers) {
      if (p) return true;
    }
  }
  return false;
}

std::string PolynomialOuter::describe() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& t : terms_) {
    os << (first ? "" : " + ") << t.coef;
    first = false;
    for (std::size_t i = 0; i < t.x_powers.size(); ++i) {
      if (t.x_powers[i]) os << "*x" << i << "^" << t.x_powers[i];
    }
    for (std::size_t j = 0; j < t.z_powers.size(); ++j) {
      if (t.z_powers[j]) os << "*z" << j << "^" << t.z_powers[j];
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------

ComposedOuter::ComposedOuter(ScalarFn fn, double scale, std::shared_ptr<const Outer> inner,
                             std::size_t d, std::size_t m)
    : fn_(fn), scale_(scale), inner_(std::move(inner)), d_(d), m_(m) {
  if (!inner_) throw InvalidInput("composed outer: missing inner function");
}

namespace {

// Per-thread scratch for nested composed outers, one slot per nesting depth.
class ScratchSlot {
 public:
  ScratchSlot() {
    if (depth() == pool().size()) pool().push_back(std::make_unique<OuterDerivatives>());
    slot_ = pool()[depth()++].get();
  }
  ~ScratchSlot() { --depth(); }
  ScratchSlot(const ScratchSlot&) = delete;
  ScratchSlot& operator=(const ScratchSlot&) = delete;
  OuterDerivatives& get() { return *slot_; }

 private:
  static std::vector<std::unique_ptr<OuterDerivatives>>& pool() {
    thread_local std::vector<std::unique_ptr<OuterDerivatives>> p;
    return p;
  }
  static std::size_t& depth() {
    thread_local std::size_t d = 0;
    return d;
  }
  OuterDerivatives* slot_;
};

double apply_scalar(ScalarFn fn, double h) {
  switch (fn) {
    case ScalarFn::identity: return h;
    case ScalarFn::tanh: return std::tanh(h);
    case ScalarFn::sin: return std::sin(h);
    case ScalarFn::cos: return std::cos(h);
    case ScalarFn::exp: return std::exp(h);
  }
  return h;
}

}  // namespace

double ComposedOuter::value(std::span<const double> x, std::span<const double> z) const {
  return scale_ * apply_scalar(fn_, inner_->value(x, z));
}

void ComposedOuter::eval(std::span<const double> x, std::span<const double> z,
                         OuterDerivatives& out) const {
  ScratchSlot slot;
  OuterDerivatives& in = slot.get();
  in.resize(d_, m_);
  inner_->eval(x, z, in);
  const double h = in.value;
  double f0 = h, f1 = 1.0, f2 = 0.0;
  switch (fn_) {
    case ScalarFn::identity:
      break;
    case ScalarFn::tanh: {
      const double th = std::tanh(h);
      f0 = th;
      f1 = 1.0 - th * th;
      f2 = -2.0 * th * f1;
      break;
    }
    case ScalarFn::sin:
      f0 = std::sin(h);
      f1 = std::cos(h);
      f2 = -f0;
      break;
    case ScalarFn::cos:
      f0 = std::cos(h);
      f1 = -std::sin(h);
      f2 = -f0;
      break;
    case ScalarFn::exp:
      f0 = f1 = f2 = std::exp(h);
      break;
  }
  out.value = scale_ * f0;
  for (std::size_t i = 0; i < d_; ++i) {
    out.dx[i] = scale_ * f1 * in.dx[i];
    for (std::size_t k = 0; k < d_; ++k) {
      out.dxx[i * d_ + k] = scale_ * (f2 * in.dx[i] * in.dx[k] + f1 * in.dxx[i * d_ + k]);
    }
    for (std::size_t j = 0; j < m_; ++j) {
      out.dxdz[i * m_ + j] = scale_ * (f2 * in.dx[i] * in.dz[j] + f1 * in.dxdz[i * m_ + j]);
    }
  }
  for (std::size_t j = 0; j < m_; ++j) {
    out.dz[j] = scale_ * f1 * in.dz[j];
    for (std::size_t k = 0; k < m_; ++k) {
      out.dzz[j * m_ + k] = scale_ * (f2 * in.dz[j] * in.dz[k] + f1 * in.dzz[j * m_ + k]);
    }
  }
}

std::string ComposedOuter::describe() const {
  const char* names[] = {"id", "tanh", "sin", "cos", "exp"};
  std::ostringstream os;
  os << scale_ << "*" << names[static_cast<int>(fn_)] << "(" << inner_->describe() << ")";
  return os.str();
}

// ---------------------------------------------------------------------------

CylinderFunctional::CylinderFunctional(std::size_t dim, std::vector<Kernel> kernels,
                                       std::shared_ptr<const Outer> outer)
    : dim_(dim), kernels_(std::move(kernels)), outer_(std::move(outer)), zero_point_(dim, 0.0) {
  if (dim_ == 0) throw InvalidInput("cylinder functional: dimension must be positive");
  if (!outer_) throw InvalidInput("cylinder functional: missing outer function");
  for (const auto& k : kernels_) {
    if (k.type == KernelType::identity || k.type == KernelType::cos ||
        k.type == KernelType::sin) {
      require_index(k.index, dim_, "kernel");
    }
    if (k.type == KernelType::gauss && !(k.param > 0.0)) {
      throw InvalidInput("gauss kernel: width must be positive");
    }
  }
}

CylinderFunctional CylinderFunctional::zero(std::size_t dim) {
  return CylinderFunctional(dim, {}, std::make_shared<PolynomialOuter>(
                                         dim, 0, std::vector<PolynomialOuter::Term>{}));
}

CylinderFunctional CylinderFunctional::constant(std::size_t dim, double c) {
  return CylinderFunctional(dim, {}, PolynomialOuter::linear(dim, {}, c));
}

std::vector<double> CylinderFunctional::moments(const EmpiricalMeasure& mu) const {
  if (mu.dim() != dim_) throw InvalidInput("cylinder functional: measure dimension mismatch");
  std::vector<double> z(kernels_.size());
  moments(mu.samples(), mu.size(), z);
  return z;
}

void CylinderFunctional::moments(std::span<const double> samples, std::size_t count,
                                 std::span<double> out) const {
  for (std::size_t j = 0; j < kernels_.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = kernels_[j].value(samples.subspan(i * dim_, dim_));
      if (!std::isfinite(v)) throw NumericError("kernel " + kernels_[j].name() + " non-finite", i);
      acc += v;
    }
    out[j] = acc / static_cast<double>(count);
  }
}

std::span<const double> CylinderFunctional::x_or_zero(std::span<const double> x) const {
  if (x.empty()) {
    if (depends_on_x()) throw InvalidInput("cylinder functional: x required but absent");
    return zero_point_;
  }
  if (x.size() != dim_) throw InvalidInput("cylinder functional: x dimension mismatch");
  return x;
}

double CylinderFunctional::eval_at(std::span<const double> x, std::span<const double> z) const {
  const double v = value_at(x, z);
  if (!std::isfinite(v)) throw NumericError("cylinder functional: non-finite value");
  return v;
}

double CylinderFunctional::eval(std::span<const double> x, const EmpiricalMeasure& mu) const {
  const auto z = moments(mu);
  return eval_at(x, z);
}

void CylinderFunctional::derivatives(std::span<const double> x, std::span<const double> z,
                                     OuterDerivatives& out) const {
  outer_->eval(x_or_zero(x), z, out);
}

std::vector<double> CylinderFunctional::lions_derivative(std::span<const double> x,
                                                         const EmpiricalMeasure& mu,
                                                         std::span<const double> y) const {
  if (y.size() != dim_) throw InvalidInput("lions_derivative: y dimension mismatch");
  const auto z = moments(mu);
  OuterDerivatives g;
  g.resize(dim_, kernels_.size());
  derivatives(x, z, g);
  std::vector<double> out(dim_, 0.0), grad(dim_), hess(dim_ * dim_);
  for (std::size_t j = 0; j < kernels_.size(); ++j) {
    double v;
    kernels_[j].eval(y, v, grad, hess);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += g.dz[j] * grad[i];
  }
  return out;
}

std::vector<double> CylinderFunctional::x_gradient(std::span<const double> x,
                                                   const EmpiricalMeasure& mu) const {
  const auto z = moments(mu);
  OuterDerivatives g;
  g.resize(dim_, kernels_.size());
  derivatives(x, z, g);
  return g.dx;
}

std::string CylinderFunctional::describe() const {
  std::ostringstream os;
  os << "g = " << outer_->describe() << "; kernels = [";
  for (std::size_t j = 0; j < kernels_.size(); ++j) os << (j ? ", " : "") << kernels_[j].name();
  os << "]";
  return os.str();
}

}  // namespace mfcalc
