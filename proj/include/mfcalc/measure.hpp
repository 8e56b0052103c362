#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace mfcalc {

/// Uniform empirical measure (1/N) sum_i delta_{x_i} on R^d.
/// Samples are stored row-major: sample i occupies [i*d, (i+1)*d).
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::vector<double> samples, std::size_t dim);

  /// d = 1 convenience constructor.
  static EmpiricalMeasure from_scalars(std::vector<double> values);

  std::size_t size() const noexcept { return samples_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> point(std::size_t i) const {
    return {samples_.data() + i * dim_, dim_};
  }
  std::span<const double> samples() const noexcept { return samples_; }

  double second_moment() const;

  /// Copy with samples sorted lexicographically. Two measures are equal as
  /// measures iff their canonical forms are equal sample-by-sample.
  EmpiricalMeasure canonical() const;

  /// Copy with samples reordered: result.point(i) = point(order[i]).
  EmpiricalMeasure permuted(std::span<const std::size_t> order) const;

 private:
  std::vector<double> samples_;
  std::size_t dim_;
};

/// Stable lexicographic sort order: canonical().point(i) == point(order[i]).
std::vector<std::size_t> canonical_permutation(const EmpiricalMeasure& mu);

/// Two random variables on the same N probability indices:
/// `base` realizes theta_0 and `direction` realizes eta = theta - theta_0.
struct PairedSample {
  PairedSample(EmpiricalMeasure base, EmpiricalMeasure direction);

  EmpiricalMeasure base;
  EmpiricalMeasure direction;
};

using ScalarKernel = std::function<double(std::span<const double>)>;

/// Exact W2 between uniform empirical measures. d = 1 uses the quantile
/// coupling (any sizes); d > 1 needs equal sizes and solves the assignment
/// problem exactly (N <= max_assignment_size).
double w2_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                   std::size_t max_assignment_size = 512);

/// (1/N) sum_i kernel(x_i).
double moment(const EmpiricalMeasure& mu, const ScalarKernel& kernel);

/// Empirical measure of {base_i + h * direction_i}.
EmpiricalMeasure shift(const PairedSample& p, double h);

/// Minimum-cost perfect assignment on a dense n x n cost matrix (row-major).
/// Returns assignment[row] = column.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

void write_csv(std::ostream& os, const EmpiricalMeasure& mu);
EmpiricalMeasure read_csv(std::istream& is);

}  // namespace mfcalc
