#pragma once

// Independent verification utilities for the test suites.  These deliberately
// avoid the library's solver internals: the grid searcher enumerates weight
// vectors exhaustively, the KKT checker reconstructs multipliers with its own
// SVD-based least squares, and the support pruner is plain linear algebra.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "deconvht/qp.hpp"

namespace testsupport {

// Exhaustive search over simplex weight vectors with entries k/steps,
// sum k = steps.  Returns the best objective value of
// (P g - target)' W (P g - target) (W = identity when empty) and the argmin.
struct GridSearchResult {
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd g;
};

inline void grid_search_recurse(const Eigen::MatrixXd& p, const Eigen::VectorXd& target,
                                const Eigen::MatrixXd& weight, Eigen::VectorXd& g,
                                Eigen::Index pos, int remaining, int steps,
                                GridSearchResult& best) {
  const Eigen::Index kappa = p.cols();
  if (pos == kappa - 1) {
    g[pos] = static_cast<double>(remaining) / static_cast<double>(steps);
    const Eigen::VectorXd r = p * g - target;
    const double obj = (weight.size() == 0) ? r.squaredNorm() : r.dot(weight * r);
    if (obj < best.objective) {
      best.objective = obj;
      best.g = g;
    }
    return;
  }
  for (int k = 0; k <= remaining; ++k) {
    g[pos] = static_cast<double>(k) / static_cast<double>(steps);
    grid_search_recurse(p, target, weight, g, pos + 1, remaining - k, steps, best);
  }
}

inline GridSearchResult simplex_grid_search(const Eigen::MatrixXd& p,
                                            const Eigen::VectorXd& target, int steps = 100,
                                            const Eigen::MatrixXd& weight = Eigen::MatrixXd()) {
  GridSearchResult best;
  Eigen::VectorXd g(p.cols());
  grid_search_recurse(p, target, weight, g, 0, steps, steps, best);
  return best;
}

// Independent first-order optimality check for
//   min 0.5 x'Qx + c'x  s.t.  A x = b, l <= x <= u.
// Classifies coordinates by a margin, recovers equality multipliers by SVD
// least squares on the interior coordinates, and verifies sign conditions on
// the bound multipliers.  Returns the largest violation found.
struct KktReport {
  double primal_eq = 0.0;      // |Ax - b|_inf over unit-scaled rows
  double primal_box = 0.0;     // bound violation
  double stationarity = 0.0;   // |grad + A'lambda| on interior coordinates
  double bound_signs = 0.0;    // wrong-signed bound multipliers
  double worst() const {
    return std::max(std::max(primal_eq, primal_box), std::max(stationarity, bound_signs));
  }
};

inline KktReport check_kkt(const deconvht::QpProblem& prob, const Eigen::VectorXd& x,
                           double active_margin = 1e-7) {
  KktReport base;
  const Eigen::Index n = x.size();
  const Eigen::Index r = prob.A_eq.rows();

  for (Eigen::Index i = 0; i < n; ++i) {
    base.primal_box = std::max(base.primal_box, prob.lower[i] - x[i]);
    base.primal_box = std::max(base.primal_box, x[i] - prob.upper[i]);
  }

  Eigen::MatrixXd a_s(r, n);
  Eigen::VectorXd b_s(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double s = std::max(
        {prob.A_eq.row(i).template lpNorm<Eigen::Infinity>(), std::fabs(prob.b_eq[i]), 1e-300});
    a_s.row(i) = prob.A_eq.row(i) / s;
    b_s[i] = prob.b_eq[i] / s;
  }
  if (r > 0) base.primal_eq = (a_s * x - b_s).template lpNorm<Eigen::Infinity>();

  const Eigen::VectorXd grad = prob.Q * x + prob.c;
  std::vector<Eigen::Index> interior;
  std::vector<Eigen::Index> at_lower_set;
  std::vector<Eigen::Index> at_upper_set;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool lo = x[i] <= prob.lower[i] + active_margin;
    const bool hi = x[i] >= prob.upper[i] - active_margin;
    if (!lo && !hi)
      interior.push_back(i);
    else if (lo && !hi)
      at_lower_set.push_back(i);
    else if (hi && !lo)
      at_upper_set.push_back(i);
  }

  // Dual variables for the bounds are free to be zero, so a valid certificate
  // may set the equality multipliers from any subset of coordinates that
  // contains the interior.  Try the natural recoveries and keep the best:
  // the certificate only has to exist, not to be unique.
  const auto score = [&](const Eigen::VectorXd& lambda) {
    KktReport rep = base;
    const Eigen::VectorXd mu = grad + (r > 0 ? (a_s.transpose() * lambda).eval()
                                             : Eigen::VectorXd::Zero(n).eval());
    const double gscale = std::max(1.0, grad.template lpNorm<Eigen::Infinity>());
    for (Eigen::Index i : interior)
      rep.stationarity = std::max(rep.stationarity, std::fabs(mu[i]) / gscale);
    for (Eigen::Index i : at_lower_set)
      rep.bound_signs = std::max(rep.bound_signs, -mu[i] / gscale);
    for (Eigen::Index i : at_upper_set)
      rep.bound_signs = std::max(rep.bound_signs, mu[i] / gscale);
    return rep;
  };

  if (r == 0) return score(Eigen::VectorXd());

  const auto lambda_from = [&](const std::vector<Eigen::Index>& coords) {
    const auto nc = static_cast<Eigen::Index>(coords.size());
    Eigen::MatrixXd at(nc, r);
    Eigen::VectorXd rhs(nc);
    for (Eigen::Index k = 0; k < nc; ++k) {
      at.row(k) = a_s.col(coords[static_cast<std::size_t>(k)]).transpose();
      rhs[k] = -grad[coords[static_cast<std::size_t>(k)]];
    }
    return Eigen::VectorXd(at.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs));
  };

  std::vector<std::vector<Eigen::Index>> candidates;
  if (!interior.empty()) candidates.push_back(interior);
  for (const auto* extra : {&at_upper_set, &at_lower_set}) {
    std::vector<Eigen::Index> coords = interior;
    coords.insert(coords.end(), extra->begin(), extra->end());
    if (!coords.empty()) candidates.push_back(std::move(coords));
  }
  {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    candidates.push_back(std::move(all));
  }

  KktReport best;
  bool have = false;
  for (const auto& coords : candidates) {
    const KktReport rep = score(lambda_from(coords));
    if (!have || rep.worst() < best.worst()) {
      best = rep;
      have = true;
    }
  }
  return best;
}

// Reduces the support of simplex weights g to at most rank([P; 1']) columns
// while preserving P g and the total weight exactly (up to roundoff): move
// along null vectors of the stacked matrix until a weight hits zero.
inline Eigen::VectorXd caratheodory_prune(const Eigen::MatrixXd& p, Eigen::VectorXd g,
                                          double weight_floor = 1e-12) {
  const Eigen::Index j = p.rows();
  for (int guard = 0; guard < 4 * static_cast<int>(g.size()); ++guard) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (g[i] > weight_floor) support.push_back(i);
    const auto s = static_cast<Eigen::Index>(support.size());
    if (s <= j) break;

    Eigen::MatrixXd stacked(j + 1, s);
    for (Eigen::Index k = 0; k < s; ++k) {
      stacked.col(k).head(j) = p.col(support[static_cast<std::size_t>(k)]);
      stacked(j, k) = 1.0;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(stacked);
    lu.setThreshold(1e-10);
    const Eigen::MatrixXd kernel = lu.kernel();
    if (kernel.cols() == 0 || kernel.isZero(0.0)) break;
    Eigen::VectorXd d = kernel.col(0);

    // Step in the direction that first drives a positive weight to zero.
    double tau = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < s; ++k) {
      if (d[k] < -1e-14) {
        const double cand = -g[support[static_cast<std::size_t>(k)]] / d[k];
        tau = std::min(tau, cand);
      }
    }
    if (!std::isfinite(tau)) {
      d = -d;
      tau = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < s; ++k) {
        if (d[k] < -1e-14) {
          const double cand = -g[support[static_cast<std::size_t>(k)]] / d[k];
          tau = std::min(tau, cand);
        }
      }
    }
    if (!std::isfinite(tau)) break;
    for (Eigen::Index k = 0; k < s; ++k) {
      const Eigen::Index i = support[static_cast<std::size_t>(k)];
      g[i] = std::max(0.0, g[i] + tau * d[k]);
    }
  }
  return g;
}

}  // namespace testsupport
