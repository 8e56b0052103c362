#include "mfcalc/measure.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "mfcalc/error.hpp"

namespace mfcalc {

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> samples, std::size_t dim)
    : samples_(std::move(samples)), dim_(dim) {
  if (dim_ == 0) throw InvalidInput("empirical measure: dimension must be positive");
  if (samples_.empty()) throw InvalidInput("empirical measure: needs at least one sample");
  if (samples_.size() % dim_ != 0) {
    throw InvalidInput("empirical measure: sample buffer is not a multiple of the dimension");
  }
  for (std::size_t k = 0; k < samples_.size(); ++k) {
    if (!std::isfinite(samples_[k])) {
      throw NumericError("empirical measure: non-finite coordinate", k / dim_);
    }
  }
}

EmpiricalMeasure EmpiricalMeasure::from_scalars(std::vector<double> values) {
  return EmpiricalMeasure(std::move(values), 1);
}

double EmpiricalMeasure::second_moment() const {
  double acc = 0.0;
  for (double v : samples_) acc += v * v;
  return acc / static_cast<double>(size());
}

EmpiricalMeasure EmpiricalMeasure::canonical() const {
  return permuted(canonical_permutation(*this));
}

std::vector<std::size_t> canonical_permutation(const EmpiricalMeasure& mu) {
  std::vector<std::size_t> order(mu.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto pa = mu.point(a);
    const auto pb = mu.point(b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  });
  return order;
}

EmpiricalMeasure EmpiricalMeasure::permuted(std::span<const std::size_t> order) const {
  if (order.size() != size()) throw InvalidInput("permuted: order has wrong length");
  std::vector<double> out;
  out.reserve(samples_.size());
  for (std::size_t i : order) {
    if (i >= size()) throw InvalidInput("permuted: index out of range");
    const auto p = point(i);
    out.insert(out.end(), p.begin(), p.end());
  }
  return EmpiricalMeasure(std::move(out), dim_);
}

PairedSample::PairedSample(EmpiricalMeasure b, EmpiricalMeasure d)
    : base(std::move(b)), direction(std::move(d)) {
  if (base.size() != direction.size() || base.dim() != direction.dim()) {
    throw InvalidInput("paired sample: base and direction must have equal size and dimension");
  }
}

namespace {

// W2^2 between two sorted 1-d samples of possibly different sizes, via the
// quantile functions on the merged breakpoint grid of (0, 1].
double w2_squared_sorted_1d(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::size_t i = 0, j = 0;
  double u = 0.0, acc = 0.0;
  while (i < n && j < m) {
    const double next_a = static_cast<double>(i + 1) / static_cast<double>(n);
    const double next_b = static_cast<double>(j + 1) / static_cast<double>(m);
    const double next = std::min(next_a, next_b);
    const double diff = a[i] - b[j];
    acc += (next - u) * diff * diff;
    u = next;
    // exact ties happen when (i+1)*m == (j+1)*n
    const bool adv_a = (i + 1) * m <= (j + 1) * n;
    const bool adv_b = (j + 1) * n <= (i + 1) * m;
    if (adv_a) ++i;
    if (adv_b) ++j;
  }
  return acc;
}

}  // namespace

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw InvalidInput("assignment: cost matrix must be n x n");
  // Shortest augmenting path with row/column potentials, O(n^3).
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double w2_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                   std::size_t max_assignment_size) {
  if (mu.dim() != nu.dim()) throw InvalidInput("w2_distance: dimension mismatch");
  if (mu.dim() == 1) {
    std::vector<double> a(mu.samples().begin(), mu.samples().end());
    std::vector<double> b(nu.samples().begin(), nu.samples().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return std::sqrt(std::max(0.0, w2_squared_sorted_1d(a, b)));
  }
  if (mu.size() != nu.size()) {
    throw UnsupportedConfiguration("w2_distance: d > 1 requires equal sample counts");
  }
  const std::size_t n = mu.size();
  if (n > max_assignment_size) {
    throw UnsupportedConfiguration("w2_distance: assignment size " + std::to_string(n) +
                                   " exceeds limit " + std::to_string(max_assignment_size));
  }
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = mu.point(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto y = nu.point(j);
      double c = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) c += (x[k] - y[k]) * (x[k] - y[k]);
      cost[i * n + j] = c;
    }
  }
  const auto assignment = solve_assignment(cost, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + assignment[i]];
  return std::sqrt(total / static_cast<double>(n));
}

double moment(const EmpiricalMeasure& mu, const ScalarKernel& kernel) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double v = kernel(mu.point(i));
    if (!std::isfinite(v)) throw NumericError("moment: non-finite kernel value", i);
    acc += v;
  }
  return acc / static_cast<double>(mu.size());
}

EmpiricalMeasure shift(const PairedSample& p, double h) {
  if (!std::isfinite(h)) throw InvalidInput("shift: step must be finite");
  const auto b = p.base.samples();
  const auto d = p.direction.samples();
  std::vector<double> out(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) out[k] = b[k] + h * d[k];
  return EmpiricalMeasure(std::move(out), p.base.dim());
}

void write_csv(std::ostream& os, const EmpiricalMeasure& mu) {
  for (std::size_t k = 0; k < mu.dim(); ++k) os << (k ? "," : "") << 'x' << k;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto p = mu.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) os << (k ? "," : "") << p[k];
    os << '\n';
  }
}

EmpiricalMeasure read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("read_csv: missing header");
  std::size_t dim = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      if (cell != "x" + std::to_string(dim)) {
        throw InvalidInput("read_csv: header must be x0,...,x{d-1}, got '" + cell + "'");
      }
      ++dim;
    }
  }
  if (dim == 0) throw InvalidInput("read_csv: empty header");
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InvalidInput("read_csv: bad number '" + cell + "' in row " + std::to_string(row));
      }
      ++cols;
    }
    if (cols != dim) throw InvalidInput("read_csv: row " + std::to_string(row) + " has wrong width");
    ++row;
  }
  return EmpiricalMeasure(std::move(values), dim);
}

}  // namespace mfcalc
