#pragma once

// Convex quadratic programming over box bounds and linear equality
// constraints, solved with a deterministic primal active-set method:
//
//   minimize    0.5 x'Qx + c'x
//   subject to  A_eq x = b_eq,   lower <= x <= upper
//
// with Q symmetric positive semidefinite (possibly singular).  Identical
// inputs produce bitwise-identical outputs: pivoting is most-negative-
// multiplier with smallest-index tie-breaking, and no randomness or
// data-dependent parallelism is involved.
//
// Feasibility is established first (phase 1) by minimizing the equality
// residual over the box; a residual that cannot be driven to ~0 means the
// constraints are inconsistent and the problem is reported Infeasible along
// with the most violated row.  Phase 2 then iterates equality-constrained
// subproblems on the free variables, taking the largest in-bounds step and
// exchanging active bounds until the KKT conditions hold.
//
// For objectives of least-squares shape |Bx - t|^2 the problem can carry the
// factor (B, t); the solver then works on B directly, which is faster and
// better conditioned than forming Q = 2B'B.  Solutions of singular problems
// are minimum-norm stationary points of each subproblem; for semidefinite Q
// the minimizer set may be non-unique, so the contract is the objective
// value and feasibility rather than a particular x.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace deconvht {

enum class QpStatus { Converged, MaxIterations, Infeasible };

// Optional least-squares factorization of the objective:
// 0.5 x'Qx + c'x = |Bx - t|^2 - t't  with  Q = 2B'B, c = -2B't.
struct LeastSquaresForm {
  Eigen::MatrixXd B;
  Eigen::VectorXd target;
};

struct QpProblem {
  Eigen::MatrixXd Q;      // n x n, symmetric PSD
  Eigen::VectorXd c;      // n
  Eigen::MatrixXd A_eq;   // r x n, r >= 0
  Eigen::VectorXd b_eq;   // r
  Eigen::VectorXd lower;  // n
  Eigen::VectorXd upper;  // n
  std::optional<LeastSquaresForm> ls;
};

struct QpSolution {
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::quiet_NaN();  // 0.5 x'Qx + c'x
  QpStatus status = QpStatus::MaxIterations;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  // Objective after the initial point and after every accepted step; it is
  // non-increasing up to roundoff.
  std::vector<double> objective_trace;
  // When Infeasible: index of the equality row with the largest scaled
  // residual at the best box-feasible point.
  int infeasible_row = -1;
};

namespace qp_detail {

// Variable states for the working set.
enum class Bound : std::uint8_t { Free = 0, Lower = 1, Upper = 2 };

struct Evaluator {
  const Eigen::MatrixXd* Q = nullptr;
  const Eigen::VectorXd* c = nullptr;
  const LeastSquaresForm* ls = nullptr;

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    if (ls) return 2.0 * (ls->B.transpose() * (ls->B * x - ls->target));
    return (*Q) * x + (*c);
  }

  double objective(const Eigen::VectorXd& x) const {
    if (ls) {
      const Eigen::VectorXd r = ls->B * x - ls->target;
      return r.squaredNorm() - ls->target.squaredNorm();
    }
    return 0.5 * x.dot((*Q) * x) + c->dot(x);
  }
};

struct CoreResult {
  Eigen::VectorXd x;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<Eigen::Index> free_indices(const std::vector<Bound>& state) {
  std::vector<Eigen::Index> f;
  f.reserve(state.size());
  for (std::size_t i = 0; i < state.size(); ++i)
    if (state[i] == Bound::Free) f.push_back(static_cast<Eigen::Index>(i));
  return f;
}

// Minimizing step in null-space coordinates: argmin over y of the objective
// at x + (p_part + Z y) spread over the free variables.  Uses the
// least-squares factor when available; otherwise the reduced Hessian with a
// minimum-norm solve, following the zero-curvature descent ray when the
// reduced system is inconsistent (flat directions with nonzero slope).
inline Eigen::VectorXd reduced_step(const Evaluator& eval, const Eigen::VectorXd& x,
                                    const std::vector<Eigen::Index>& F,
                                    const Eigen::VectorXd& p_part, const Eigen::MatrixXd& z,
                                    const Eigen::VectorXd& g) {
  const auto nf = static_cast<Eigen::Index>(F.size());
  if (eval.ls) {
    const Eigen::MatrixXd& B = eval.ls->B;
    Eigen::MatrixXd b_f(B.rows(), nf);
    for (Eigen::Index k = 0; k < nf; ++k) b_f.col(k) = B.col(F[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd resid = B * x + b_f * p_part - eval.ls->target;
    const Eigen::MatrixXd m = b_f * z;
    return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(m).solve(-resid);
  }
  const Eigen::MatrixXd& Q = *eval.Q;
  Eigen::MatrixXd q_ff(nf, nf);
  for (Eigen::Index a = 0; a < nf; ++a)
    for (Eigen::Index b = 0; b < nf; ++b)
      q_ff(a, b) = Q(F[static_cast<std::size_t>(a)], F[static_cast<std::size_t>(b)]);
  Eigen::VectorXd g_f(nf);
  for (Eigen::Index k = 0; k < nf; ++k) g_f[k] = g[F[static_cast<std::size_t>(k)]];
  const Eigen::MatrixXd h = z.transpose() * q_ff * z;
  const Eigen::VectorXd rhs = -z.transpose() * (g_f + q_ff * p_part);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_h(h);
  Eigen::VectorXd y = cod_h.solve(rhs);
  const Eigen::VectorXd resid = h * y - rhs;
  const double rscale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
  if (resid.lpNorm<Eigen::Infinity>() > 1e-10 * rscale) {
    // Inconsistent: rhs - H y lies in null(H) and is a strict-descent flat
    // direction; follow it (the box bounds cap the step).
    y = -resid / std::max(resid.lpNorm<Eigen::Infinity>(), 1e-300);
  }
  return y;
}

// Active-set iteration shared by both phases.  `A` may have zero rows; the
// start point must satisfy the box and (approximately) the equalities.
inline CoreResult active_set(const Evaluator& eval, const Eigen::MatrixXd& A,
                             const Eigen::VectorXd& b, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, Eigen::VectorXd x, double tol,
                             int max_iter, std::vector<double>* trace) {
  const Eigen::Index n = x.size();
  const Eigen::Index r = A.rows();
  CoreResult out;

  std::vector<Bound> state(static_cast<std::size_t>(n), Bound::Free);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] <= lower[i]) {
      x[i] = lower[i];
      state[static_cast<std::size_t>(i)] = Bound::Lower;
    } else if (x[i] >= upper[i]) {
      x[i] = upper[i];
      state[static_cast<std::size_t>(i)] = Bound::Upper;
    }
  }
  if (trace) trace->push_back(eval.objective(x));

  Eigen::VectorXd lambda;  // equality multipliers from the last check
  int iter = 0;
  bool converged = false;
  while (iter < max_iter) {
    const std::vector<Eigen::Index> F = free_indices(state);
    const auto nf = static_cast<Eigen::Index>(F.size());

    // Equality-constrained step p on the free variables (p = 0 elsewhere).
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd g = eval.gradient(x);
    if (nf > 0) {
      Eigen::VectorXd p_free;
      if (r > 0) {
        Eigen::MatrixXd a_f(r, nf);
        for (Eigen::Index k = 0; k < nf; ++k) a_f.col(k) = A.col(F[static_cast<std::size_t>(k)]);
        const Eigen::VectorXd rhs = b - A * x;  // drift correction, ~0
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_af(a_f);
        const Eigen::VectorXd p_part = cod_af.solve(rhs);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_aft(a_f.transpose());
        const Eigen::Index rank = qr_aft.rank();
        const Eigen::Index nd = nf - rank;
        if (nd > 0) {
          Eigen::MatrixXd z = Eigen::MatrixXd(qr_aft.householderQ()).rightCols(nd);
          p_free = p_part + z * reduced_step(eval, x, F, p_part, z, g);
        } else {
          p_free = p_part;
        }
      } else {
        const Eigen::MatrixXd z = Eigen::MatrixXd::Identity(nf, nf);
        p_free = reduced_step(eval, x, F, Eigen::VectorXd::Zero(nf), z, g);
      }
      for (Eigen::Index k = 0; k < nf; ++k) p[F[static_cast<std::size_t>(k)]] = p_free[k];
    }

    const double step_scale = std::max(1.0, x.lpNorm<Eigen::Infinity>());
    if (p.lpNorm<Eigen::Infinity>() <= tol * step_scale) {
      // Stationary on the current working set: check bound multipliers.
      if (r > 0) {
        if (nf > 0) {
          Eigen::MatrixXd a_ft(nf, r);
          for (Eigen::Index k = 0; k < nf; ++k)
            a_ft.row(k) = A.col(F[static_cast<std::size_t>(k)]).transpose();
          Eigen::VectorXd g_f(nf);
          for (Eigen::Index k = 0; k < nf; ++k) g_f[k] = g[F[static_cast<std::size_t>(k)]];
          lambda = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(a_ft).solve(-g_f);
        } else {
          lambda =
              Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(A.transpose()).solve(-g);
        }
      } else {
        lambda.resize(0);
      }
      Eigen::VectorXd mu = g;
      if (r > 0) mu += A.transpose() * lambda;

      const double mtol = tol * std::max(1.0, g.lpNorm<Eigen::Infinity>());
      double worst = 0.0;
      Eigen::Index worst_idx = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto st = state[static_cast<std::size_t>(i)];
        if (st == Bound::Free || lower[i] == upper[i]) continue;
        const double viol = (st == Bound::Lower) ? -mu[i] : mu[i];
        if (viol > worst) {
          worst = viol;
          worst_idx = i;
        }
      }
      if (worst_idx < 0 || worst <= mtol) {
        converged = true;
        break;
      }
      state[static_cast<std::size_t>(worst_idx)] = Bound::Free;
      ++iter;
      continue;
    }

    // Largest step along p keeping the box; the blocking index joins the
    // working set.  Ties keep the smallest index.
    double alpha = 1.0;
    Eigen::Index blocker = -1;
    Bound blocker_side = Bound::Free;
    const double ptol = 1e-14 * std::max(1.0, p.lpNorm<Eigen::Infinity>());
    for (Eigen::Index k = 0; k < nf; ++k) {
      const Eigen::Index i = F[static_cast<std::size_t>(k)];
      double cand;
      Bound side;
      if (p[i] > ptol) {
        cand = (upper[i] - x[i]) / p[i];
        side = Bound::Upper;
      } else if (p[i] < -ptol) {
        cand = (lower[i] - x[i]) / p[i];
        side = Bound::Lower;
      } else {
        continue;
      }
      if (cand < 0.0) cand = 0.0;
      if (cand < alpha) {
        alpha = cand;
        blocker = i;
        blocker_side = side;
      }
    }
    x += alpha * p;
    for (Eigen::Index i = 0; i < n; ++i) x[i] = std::min(std::max(x[i], lower[i]), upper[i]);
    if (blocker >= 0 && alpha < 1.0) {
      x[blocker] = (blocker_side == Bound::Lower) ? lower[blocker] : upper[blocker];
      state[static_cast<std::size_t>(blocker)] = blocker_side;
    }
    if (trace) trace->push_back(eval.objective(x));
    ++iter;
  }

  // Final KKT residual with the last multipliers.
  Eigen::VectorXd g = eval.gradient(x);
  Eigen::VectorXd mu = g;
  if (r > 0 && lambda.size() == r) mu += A.transpose() * lambda;
  double kkt = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    kkt = std::max(kkt, lower[i] - x[i]);
    kkt = std::max(kkt, x[i] - upper[i]);
    const auto st = state[static_cast<std::size_t>(i)];
    if (lower[i] == upper[i]) continue;
    if (st == Bound::Free) {
      kkt = std::max(kkt, std::fabs(mu[i]));
    } else {
      kkt = std::max(kkt, (st == Bound::Lower) ? -mu[i] : mu[i]);
    }
  }
  if (r > 0) kkt = std::max(kkt, (A * x - b).lpNorm<Eigen::Infinity>());

  out.x = std::move(x);
  out.status = converged ? QpStatus::Converged : QpStatus::MaxIterations;
  out.iterations = iter;
  out.kkt_residual = kkt;
  return out;
}

}  // namespace qp_detail

inline QpSolution solve(const QpProblem& prob, double tol = 1e-9, int max_iter = -1) {
  const Eigen::Index n = prob.c.size();
  const Eigen::Index r = prob.A_eq.rows();
  if (prob.Q.rows() != n || prob.Q.cols() != n || prob.lower.size() != n ||
      prob.upper.size() != n || prob.b_eq.size() != r || (r > 0 && prob.A_eq.cols() != n))
    throw std::invalid_argument("solve: inconsistent dimensions");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(prob.lower[i] <= prob.upper[i]))
      throw std::invalid_argument("solve: lower bound exceeds upper bound");
  {
    const double qn = prob.Q.lpNorm<Eigen::Infinity>();
    if ((prob.Q - prob.Q.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * (1.0 + qn))
      throw std::invalid_argument("solve: Q is not symmetric");
    if (!prob.ls && n <= 512) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(prob.Q, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-8 * std::max(qn, 1.0))
        throw std::invalid_argument("solve: Q is not positive semidefinite");
    }
  }
  if (max_iter < 0) max_iter = static_cast<int>(10 * n * n);

  qp_detail::Evaluator eval;
  eval.Q = &prob.Q;
  eval.c = &prob.c;
  eval.ls = prob.ls ? &*prob.ls : nullptr;

  QpSolution out;

  // Row-equilibrated copy of the equality system for conditioning; residual
  // tolerances below refer to these unit-scale rows.
  Eigen::MatrixXd a_s(r, n);
  Eigen::VectorXd b_s(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double scale =
        std::max({prob.A_eq.row(i).lpNorm<Eigen::Infinity>(), std::fabs(prob.b_eq[i]), 1e-300});
    a_s.row(i) = prob.A_eq.row(i) / scale;
    b_s[i] = prob.b_eq[i] / scale;
  }

  Eigen::VectorXd x0(n);
  for (Eigen::Index i = 0; i < n; ++i) x0[i] = 0.5 * (prob.lower[i] + prob.upper[i]);

  if (r > 0) {
    // Phase 1: box-constrained least squares on the equality residual.
    qp_detail::Evaluator feas;
    const LeastSquaresForm feas_ls{a_s, b_s};
    feas.ls = &feas_ls;
    auto ph1 = qp_detail::active_set(feas, Eigen::MatrixXd(0, n), Eigen::VectorXd(0), prob.lower,
                                     prob.upper, x0, tol, max_iter, nullptr);
    const Eigen::VectorXd resid = a_s * ph1.x - b_s;
    const double worst = resid.lpNorm<Eigen::Infinity>();
    if (worst > 1e-8) {
      Eigen::Index row = 0;
      resid.cwiseAbs().maxCoeff(&row);
      out.x = ph1.x;
      out.status = QpStatus::Infeasible;
      out.infeasible_row = static_cast<int>(row);
      out.objective = 0.5 * out.x.dot(prob.Q * out.x) + prob.c.dot(out.x);
      out.kkt_residual = worst;
      out.iterations = ph1.iterations;
      return out;
    }
    x0 = ph1.x;
  }

  auto core = qp_detail::active_set(eval, a_s, b_s, prob.lower, prob.upper, x0, tol, max_iter,
                                    &out.objective_trace);
  out.x = std::move(core.x);
  out.status = core.status;
  out.iterations = core.iterations;
  out.kkt_residual = core.kkt_residual;
  out.objective = 0.5 * out.x.dot(prob.Q * out.x) + prob.c.dot(out.x);
  return out;
}

// Weighted least-squares fit of simplex weights:
//   minimize (P g - target)' W (P g - target)
//   subject to sum g = 1, 0 <= g <= 1, plus optional extra equality rows.
// W must be symmetric positive definite (pass an empty matrix for identity).
struct SimplexLsResult {
  Eigen::VectorXd g;  // renormalized to sum exactly 1 when converged
  QpSolution solution;
  double residual_norm2 = std::numeric_limits<double>::quiet_NaN();  // (Pg-t)'W(Pg-t)
};

inline SimplexLsResult simplex_ls(const Eigen::MatrixXd& p, const Eigen::VectorXd& target,
                                  const Eigen::MatrixXd& weight = Eigen::MatrixXd(),
                                  const Eigen::MatrixXd& extra_eq = Eigen::MatrixXd(),
                                  const Eigen::VectorXd& extra_rhs = Eigen::VectorXd(),
                                  double tol = 1e-9, int max_iter = -1) {
  const Eigen::Index kappa = p.cols();
  if (p.rows() != target.size()) throw std::invalid_argument("simplex_ls: size mismatch");
  if (extra_eq.rows() != extra_rhs.size() || (extra_eq.rows() > 0 && extra_eq.cols() != kappa))
    throw std::invalid_argument("simplex_ls: bad extra equality rows");

  Eigen::MatrixXd b_mat;
  Eigen::VectorXd t_vec;
  if (weight.size() == 0) {
    b_mat = p;
    t_vec = target;
  } else {
    if (weight.rows() != p.rows() || weight.cols() != p.rows())
      throw std::invalid_argument("simplex_ls: weight dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(weight);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("simplex_ls: weight must be positive definite");
    b_mat = llt.matrixL().transpose() * p;
    t_vec = llt.matrixL().transpose() * target;
  }

  QpProblem prob;
  prob.Q = 2.0 * b_mat.transpose() * b_mat;
  prob.c = -2.0 * b_mat.transpose() * t_vec;
  prob.A_eq.resize(1 + extra_eq.rows(), kappa);
  prob.A_eq.row(0).setOnes();
  if (extra_eq.rows() > 0) prob.A_eq.bottomRows(extra_eq.rows()) = extra_eq;
  prob.b_eq.resize(1 + extra_rhs.size());
  prob.b_eq[0] = 1.0;
  if (extra_rhs.size() > 0) prob.b_eq.tail(extra_rhs.size()) = extra_rhs;
  prob.lower = Eigen::VectorXd::Zero(kappa);
  prob.upper = Eigen::VectorXd::Ones(kappa);
  prob.ls = LeastSquaresForm{b_mat, t_vec};

  SimplexLsResult out;
  out.solution = solve(prob, tol, max_iter);
  out.g = out.solution.x;
  if (out.solution.status == QpStatus::Converged) {
    // Negative and sub-1e-12 weights are numerical dust from the active-set
    // tolerance; zero them so degenerate solutions come out exact, then
    // renormalize onto the simplex.
    for (Eigen::Index i = 0; i < out.g.size(); ++i)
      if (out.g[i] < 1e-12) out.g[i] = 0.0;
    const double sum = out.g.sum();
    if (sum > 0.0) out.g /= sum;
  }
  out.residual_norm2 = (b_mat * out.g - t_vec).squaredNorm();
  return out;
}

}  // namespace deconvht
