#pragma once

// Discrete mixing distributions over response probabilities, observed-count
// summaries, and the count-vector covariance used to weight refined fits.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "deconvht/kernels.hpp"

namespace deconvht {

struct EmptySampleError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Probability distribution with finite support on response probabilities.
// Support values must be positive (they are divided by) and weights must be
// non-negative and sum to 1 within 1e-9.
class DiscreteMixture {
 public:
  DiscreteMixture(std::vector<double> support, Eigen::VectorXd weights)
      : support_(std::move(support)), weights_(std::move(weights)) {
    if (support_.size() != static_cast<std::size_t>(weights_.size()) || support_.empty())
      throw std::invalid_argument("DiscreteMixture: size mismatch or empty");
    for (double s : support_)
      if (!(s > 0.0) || s > 1.0)
        throw std::invalid_argument("DiscreteMixture: support must lie in (0, 1]");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < weights_.size(); ++i) {
      if (weights_[i] < 0.0) throw std::invalid_argument("DiscreteMixture: negative weight");
      sum += weights_[i];
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("DiscreteMixture: weights must sum to 1");
  }

  std::size_t size() const { return support_.size(); }
  const std::vector<double>& support() const { return support_; }
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  std::vector<double> support_;
  Eigen::VectorXd weights_;
};

// Observed-count tallies: counts[j] is the number of responders with count
// j+1 (support position j).
struct CountVector {
  std::vector<std::int64_t> counts;

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) {
      if (c < 0) throw std::invalid_argument("CountVector: negative count");
      t += c;
    }
    return t;
  }
};

// Relative frequencies counts / total.  Errors on an empty sample.
inline Eigen::VectorXd counts_to_freq(const CountVector& counts) {
  const std::int64_t m = counts.total();
  if (m == 0) throw EmptySampleError("counts_to_freq: empty sample");
  Eigen::VectorXd f(static_cast<Eigen::Index>(counts.counts.size()));
  for (Eigen::Index j = 0; j < f.size(); ++j)
    f[j] = static_cast<double>(counts.counts[static_cast<std::size_t>(j)]) /
           static_cast<double>(m);
  return f;
}

namespace detail {
inline void require_support_matches(const KernelMatrix& kernel, const DiscreteMixture& g,
                                    const char* where) {
  if (g.size() != kernel.p_star().size())
    throw std::invalid_argument(std::string(where) + ": mixture support size differs from kernel");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::fabs(g.support()[i] - kernel.p_star()[i]) > 1e-12)
      throw std::invalid_argument(std::string(where) +
                                  ": mixture support differs from kernel response probabilities");
}
}  // namespace detail

// Marginal observed-count distribution P * g of a mixture over the kernel's
// columns.  The mixture must live on the kernel's response probabilities.
inline Eigen::VectorXd mixture_pmf(const KernelMatrix& kernel, const DiscreteMixture& g) {
  detail::require_support_matches(kernel, g, "mixture_pmf");
  return kernel.matrix() * g.weights();
}

// E[1/S] under the mixture.
inline double expected_inverse(const DiscreteMixture& g) {
  double e = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    e += g.weights()[static_cast<Eigen::Index>(i)] / g.support()[i];
  return e;
}

// E[h(S)] under the mixture.
template <class F>
double expected_functional(const DiscreteMixture& g, F&& h) {
  double e = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    e += g.weights()[static_cast<Eigen::Index>(i)] * h(g.support()[i]);
  return e;
}

// Sampling model behind the count-vector covariance: either every responder's
// parameter is an independent draw from the mixture (ExchangeableDraws), or
// the sample is a fixed composition with an m*g_i share at each support point
// (FixedComposition).  The two differ by the between-support-point spread.
enum class CovarianceModel { ExchangeableDraws, FixedComposition };

// Covariance of the first J-1 coordinates of the count vector C for a sample
// of size m (the last coordinate is dropped because the full vector is
// linearly constrained to sum to m).
inline Eigen::MatrixXd covariance_star(const KernelMatrix& kernel, const DiscreteMixture& g,
                                       std::int64_t m, CovarianceModel model) {
  detail::require_support_matches(kernel, g, "covariance_star");
  if (m <= 0) throw EmptySampleError("covariance_star: sample size must be positive");
  const Eigen::Index j = kernel.rows();
  Eigen::MatrixXd full(j, j);
  const double md = static_cast<double>(m);
  if (model == CovarianceModel::ExchangeableDraws) {
    // C ~ Multinomial(m, f) with f = P g:  m (diag(f) - f f').
    Eigen::VectorXd f = kernel.matrix() * g.weights();
    full = md * (Eigen::MatrixXd(f.asDiagonal()) - f * f.transpose());
  } else {
    // Sum over support points of m g_i Multinoulli covariances.
    full.setZero();
    for (Eigen::Index i = 0; i < kernel.cols(); ++i) {
      const double w = g.weights()[i];
      if (w == 0.0) continue;
      Eigen::VectorXd p = kernel.column(i);
      full += (md * w) * (Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose());
    }
  }
  return full.topLeftCorner(j - 1, j - 1);
}

// Regularization applied before inverting a possibly singular covariance:
// when the smallest eigenvalue falls below 1e-10 * trace, add
// (1e-8 * trace / dim) * I.  A zero-trace matrix has no usable scale; callers
// detect that case via `applied == false` together with `trace == 0`.
struct RidgeResult {
  Eigen::MatrixXd matrix;
  bool applied = false;
  double epsilon = 0.0;
  double trace = 0.0;
};

inline RidgeResult regularize_covariance(Eigen::MatrixXd sigma) {
  RidgeResult out;
  out.trace = sigma.trace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  const double lambda_min = es.eigenvalues().minCoeff();
  if (out.trace > 0.0 && lambda_min < 1e-10 * out.trace) {
    out.epsilon = 1e-8 * out.trace / static_cast<double>(sigma.rows());
    sigma.diagonal().array() += out.epsilon;
    out.applied = true;
  }
  out.matrix = std::move(sigma);
  return out;
}

}  // namespace deconvht
