#pragma once

// Observation models mapping a latent response probability to the
// distribution of an observed effort count, and the grid-discretized kernel
// matrix whose columns are those distributions.
//
// Two models are provided:
//  * TruncatedGeometric: an item is contacted repeatedly, each attempt
//    succeeding independently with per-attempt probability p~; the observed
//    count Y is the attempt number of the first success, and items needing
//    more than attempt_cap attempts never respond.  Conditional on response,
//    P(Y = j) = (1-p~)^(j-1) p~ / (1 - (1-p~)^cap) for j = 1..cap.  The
//    overall response probability is p* = 1 - (1-p~)^cap.
//  * ShiftedBinomial: Y = 1 + W with W ~ Binomial(n, p*); here the parameter
//    is the overall response probability itself and the support is 1..n+1.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <variant>
#include <vector>

#include "deconvht/grid.hpp"

namespace deconvht {

// Whether kernel-matrix columns are indexed by the per-attempt success
// probability p~ or by the overall response probability p*.
enum class Parametrization { PerAttempt, Overall };

struct TruncatedGeometric {
  int attempt_cap = 4;  // maximal number of attempts (support size)
  Parametrization parametrization = Parametrization::PerAttempt;
};

struct ShiftedBinomial {
  int extra_draws = 3;  // n; observed count support is 1..n+1
};

using ObservationKernel = std::variant<TruncatedGeometric, ShiftedBinomial>;

// Overall response probability 1 - (1-p~)^cap, computed via expm1/log1p so
// small p~ and large caps stay accurate.
inline double response_prob(double p_tilde, int attempt_cap) {
  if (!(p_tilde > 0.0) || p_tilde > 1.0)
    throw std::domain_error("response_prob: p~ must lie in (0, 1]");
  if (attempt_cap < 1) throw std::domain_error("response_prob: attempt cap must be >= 1");
  if (p_tilde >= 1.0) return 1.0;
  return -std::expm1(static_cast<double>(attempt_cap) * std::log1p(-p_tilde));
}

// Per-attempt probability recovering a given overall response probability:
// the inverse of response_prob in its first argument.
inline double per_attempt_prob(double p_star, int attempt_cap) {
  if (!(p_star > 0.0) || p_star > 1.0)
    throw std::domain_error("per_attempt_prob: p* must lie in (0, 1]");
  if (attempt_cap < 1) throw std::domain_error("per_attempt_prob: attempt cap must be >= 1");
  if (p_star >= 1.0) return 1.0;
  return -std::expm1(std::log1p(-p_star) / static_cast<double>(attempt_cap));
}

// P(Y = j | p~), j = 1..cap, for the capped-attempts model conditional on
// response.  p~ = 1 gives a point mass at j = 1.  The vector is normalized by
// its computed sum, so entries total 1 to machine accuracy.
inline Eigen::VectorXd truncated_geometric_pmf(double p_tilde, int attempt_cap) {
  if (!(p_tilde > 0.0) || p_tilde > 1.0)
    throw std::domain_error("truncated_geometric_pmf: p~ must lie in (0, 1]");
  if (attempt_cap < 1) throw std::domain_error("truncated_geometric_pmf: attempt cap must be >= 1");
  Eigen::VectorXd v(attempt_cap);
  const double q = 1.0 - p_tilde;
  double term = p_tilde;
  double sum = 0.0;
  for (int j = 0; j < attempt_cap; ++j) {
    v[j] = term;
    sum += term;
    term *= q;
  }
  v /= sum;
  return v;
}

// P(Y = j | p*), j = 1..n+1, where Y - 1 ~ Binomial(n, p*).  Normalized by
// the computed sum.
inline Eigen::VectorXd shifted_binomial_pmf(double p_star, int extra_draws) {
  if (p_star < 0.0 || p_star > 1.0)
    throw std::domain_error("shifted_binomial_pmf: p* must lie in [0, 1]");
  if (extra_draws < 1) throw std::domain_error("shifted_binomial_pmf: n must be >= 1");
  const int n = extra_draws;
  Eigen::VectorXd v(n + 1);
  const double q = 1.0 - p_star;
  double coeff = 1.0;  // C(n, k), built multiplicatively
  double sum = 0.0;
  for (int k = 0; k <= n; ++k) {
    double val = coeff;
    // p^k and q^(n-k) with the 0^0 = 1 convention at the endpoints.
    for (int t = 0; t < k; ++t) val *= p_star;
    for (int t = 0; t < n - k; ++t) val *= q;
    v[k] = val;
    sum += val;
    coeff = coeff * static_cast<double>(n - k) / static_cast<double>(k + 1);
  }
  v /= sum;
  return v;
}

// Support size (number of distinct observable counts) of a kernel.
inline int support_size(const ObservationKernel& kernel) {
  if (const auto* tg = std::get_if<TruncatedGeometric>(&kernel)) return tg->attempt_cap;
  return std::get<ShiftedBinomial>(kernel).extra_draws + 1;
}

// J x kappa matrix whose column i is the observed-count distribution at grid
// point i.  Alongside the construction grid it carries the overall response
// probability p* of every column: fitted mixtures live on those p* values,
// and every downstream division by a response probability uses them (for a
// per-attempt-parametrized geometric kernel the construction grid holds p~
// values, which must NOT be divided by).
class KernelMatrix {
 public:
  KernelMatrix(Eigen::MatrixXd entries, Grid grid, std::vector<double> p_star,
               ObservationKernel kernel)
      : entries_(std::move(entries)),
        grid_(std::move(grid)),
        p_star_(std::move(p_star)),
        kernel_(kernel) {
    if (static_cast<std::size_t>(entries_.cols()) != grid_.size() ||
        p_star_.size() != grid_.size())
      throw std::invalid_argument("KernelMatrix: inconsistent dimensions");
    for (Eigen::Index i = 0; i < entries_.cols(); ++i) {
      if (std::fabs(entries_.col(i).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("KernelMatrix: column does not sum to 1");
      if (!(p_star_[static_cast<std::size_t>(i)] > 0.0))
        throw std::invalid_argument("KernelMatrix: response probabilities must be positive");
    }
  }

  Eigen::Index rows() const { return entries_.rows(); }
  Eigen::Index cols() const { return entries_.cols(); }
  const Eigen::MatrixXd& matrix() const { return entries_; }
  Eigen::MatrixXd::ConstColXpr column(Eigen::Index i) const { return entries_.col(i); }
  const Grid& grid() const { return grid_; }
  const std::vector<double>& p_star() const { return p_star_; }
  const ObservationKernel& kernel() const { return kernel_; }

 private:
  Eigen::MatrixXd entries_;
  Grid grid_;
  std::vector<double> p_star_;
  ObservationKernel kernel_;
};

inline KernelMatrix build_kernel_matrix(const Grid& grid, const ObservationKernel& kernel) {
  const auto kappa = static_cast<Eigen::Index>(grid.size());
  const int j = support_size(kernel);
  if (const auto* tg = std::get_if<TruncatedGeometric>(&kernel)) {
    if (tg->attempt_cap < 2)
      throw std::invalid_argument("build_kernel_matrix: attempt cap must be >= 2");
  }
  Eigen::MatrixXd entries(j, kappa);
  std::vector<double> p_star(grid.size());
  for (Eigen::Index i = 0; i < kappa; ++i) {
    const double s = grid[static_cast<std::size_t>(i)];
    if (const auto* tg = std::get_if<TruncatedGeometric>(&kernel)) {
      double p_tilde;
      if (tg->parametrization == Parametrization::PerAttempt) {
        p_tilde = s;
        p_star[static_cast<std::size_t>(i)] = response_prob(s, tg->attempt_cap);
      } else {
        p_tilde = per_attempt_prob(s, tg->attempt_cap);
        p_star[static_cast<std::size_t>(i)] = s;
      }
      entries.col(i) = truncated_geometric_pmf(p_tilde, tg->attempt_cap);
    } else {
      const auto& sb = std::get<ShiftedBinomial>(kernel);
      entries.col(i) = shifted_binomial_pmf(s, sb.extra_draws);
      p_star[static_cast<std::size_t>(i)] = s;
    }
  }
  return KernelMatrix(std::move(entries), grid, std::move(p_star), kernel);
}

// Default discretization: per-attempt probabilities 0.1, 0.12, ..., 1.0 for
// the capped-attempts model; overall probabilities 0.10, 0.11, ..., 1.0 for
// the shifted-binomial model.
inline Grid default_grid(const ObservationKernel& kernel) {
  if (std::holds_alternative<TruncatedGeometric>(kernel)) return Grid::linspace(0.1, 0.02, 1.0);
  return Grid::linspace(0.1, 0.01, 1.0);
}

}  // namespace deconvht
