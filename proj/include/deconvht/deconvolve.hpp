#pragma once

// Fitting a discrete mixing distribution over response probabilities to an
// observed effort-count histogram: minimize a (possibly weighted) squared
// distance between the empirical pmf and the kernel-predicted pmf over the
// weight simplex.  Three entry points:
//
//   fit_moments  — unweighted fit on all count cells.
//   fit_mle      — iteratively reweighted fit on the first J-1 cells, with
//                  the weight matrix equal to the inverse estimated
//                  covariance of the cell frequencies (asymptotically the
//                  efficient choice).
//   fit_joint    — several outcome groups fitted in one program, tied
//                  together by a known list size: the sum over groups of
//                  m_l * E_l[1/S] must equal the list total, optionally with
//                  further linear calibration constraints on group totals.
//
// Fitted mixtures live on the kernel's overall response probabilities (the
// chance an item ever responds), which is what downstream inverse-weighting
// divides by.  All fits are deterministic: same inputs, bitwise-same outputs.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deconvht/kernels.hpp"
#include "deconvht/mixture.hpp"
#include "deconvht/qp.hpp"

namespace deconvht {

enum class FitMethod { Moments, Mle };

struct FitConfig {
  FitMethod method = FitMethod::Moments;
  CovarianceModel covariance_model = CovarianceModel::ExchangeableDraws;
  int mle_iterations = 2;  // reweighting passes after the unweighted start
  // Weights below this are omitted from printed reports only; computation
  // always keeps the full vector.
  double report_threshold = 1e-8;
};

struct GroupData {
  std::string label;
  CountVector counts;
  // Number of in-scope records this group represents, when it differs from
  // the fitted sample size (auxiliary records may sharpen the fit without
  // counting toward the group's size).  Defaults to the histogram total.
  std::optional<double> size_override;

  double size() const {
    return size_override ? *size_override : static_cast<double>(counts.total());
  }
};

// One linear constraint on a combination of group inflated totals:
//   sum over (label, coeff) of  coeff * m_l * sum_i g_{l,i}/s_i  =  rhs.
struct CalibrationConstraint {
  std::vector<std::pair<std::string, double>> group_coefficients;
  double rhs = 0.0;
};

struct FitDiagnostics {
  double objective = std::numeric_limits<double>::quiet_NaN();  // (Pg-f)'W(Pg-f)
  std::vector<double> iteration_objectives;  // one per fit stage
  bool ridge_applied = false;
  bool identity_weight_fallback = false;  // degenerate covariance, W = I used
  int qp_iterations = 0;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  // Largest relative residual over the added (non-simplex) equality rows.
  double constraint_residual = 0.0;
};

struct FitResult {
  // Empty only for a group with no observations inside a joint fit.
  std::optional<DiscreteMixture> mixture;
  FitDiagnostics diagnostics;

  bool defined() const { return mixture.has_value(); }
};

struct JointFitResult {
  std::vector<FitResult> groups;  // same order as the input
  double objective = 0.0;         // sum of per-group weighted residuals
  int qp_iterations = 0;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  double constraint_residual = 0.0;
  std::vector<double> iteration_objectives;
};

class InfeasibleFitError : public std::runtime_error {
 public:
  InfeasibleFitError(const std::string& what, int row) : std::runtime_error(what), row_(row) {}
  int row() const { return row_; }

 private:
  int row_ = -1;
};

namespace deconv_detail {

inline DiscreteMixture mixture_on_kernel(const KernelMatrix& kernel, const Eigen::VectorXd& g) {
  return DiscreteMixture(kernel.p_star(), g);
}

// Inverse covariance of the reduced cell frequencies, on the frequency
// scale (so that weights are comparable across groups of different sizes).
// Degenerate covariance (zero trace) falls back to the identity.
struct WeightResult {
  Eigen::MatrixXd w;
  bool ridge_applied = false;
  bool identity_fallback = false;
};

inline WeightResult frequency_weight(const KernelMatrix& kernel, const DiscreteMixture& g,
                                     std::int64_t m_fit, CovarianceModel model) {
  WeightResult out;
  const Eigen::MatrixXd sigma_counts = covariance_star(kernel, g, m_fit, model);
  const double m = static_cast<double>(m_fit);
  RidgeResult reg = regularize_covariance(sigma_counts / (m * m));
  const Eigen::Index r = reg.matrix.rows();
  if (reg.trace <= 0.0) {
    out.w = Eigen::MatrixXd::Identity(r, r);
    out.identity_fallback = true;
    return out;
  }
  out.ridge_applied = reg.applied;
  Eigen::LLT<Eigen::MatrixXd> llt(reg.matrix);
  if (llt.info() != Eigen::Success) {
    out.w = Eigen::MatrixXd::Identity(r, r);
    out.identity_fallback = true;
    return out;
  }
  out.w = llt.solve(Eigen::MatrixXd::Identity(r, r));
  out.w = 0.5 * (out.w + out.w.transpose()).eval();
  return out;
}

// Shared single-group epilogue: reject failures, transfer diagnostics,
// build the mixture on the kernel's response probabilities.
inline FitResult finish_single(const KernelMatrix& kernel, const SimplexLsResult& r,
                               FitDiagnostics diag) {
  if (r.solution.status == QpStatus::Infeasible)
    throw InfeasibleFitError("fit: constraints are inconsistent (row " +
                                 std::to_string(r.solution.infeasible_row) + ")",
                             r.solution.infeasible_row);
  if (r.solution.status != QpStatus::Converged)
    throw std::runtime_error("fit: solver failed to converge");
  diag.objective = r.residual_norm2;
  diag.qp_iterations += r.solution.iterations;
  diag.kkt_residual = r.solution.kkt_residual;
  diag.iteration_objectives.push_back(r.residual_norm2);
  return FitResult{mixture_on_kernel(kernel, r.g), std::move(diag)};
}

}  // namespace deconv_detail

inline FitResult fit_moments(const CountVector& counts, const KernelMatrix& kernel) {
  if (counts.counts.size() != static_cast<std::size_t>(kernel.rows()))
    throw std::invalid_argument("fit_moments: histogram length does not match kernel rows");
  const Eigen::VectorXd f = counts_to_freq(counts);
  SimplexLsResult r = simplex_ls(kernel.matrix(), f);
  return deconv_detail::finish_single(kernel, r, FitDiagnostics{});
}

inline FitResult fit_mle(const CountVector& counts, const KernelMatrix& kernel,
                         const FitConfig& config) {
  if (config.mle_iterations < 1)
    throw std::invalid_argument("fit_mle: at least one reweighting pass is required");
  if (counts.counts.size() != static_cast<std::size_t>(kernel.rows()))
    throw std::invalid_argument("fit_mle: histogram length does not match kernel rows");

  FitResult current = fit_moments(counts, kernel);
  FitDiagnostics diag = current.diagnostics;

  const Eigen::Index jr = kernel.rows() - 1;  // reduced row count
  const Eigen::MatrixXd p_red = kernel.matrix().topRows(jr);
  const Eigen::VectorXd f_red = counts_to_freq(counts).head(jr);
  const std::int64_t m_fit = counts.total();

  for (int t = 0; t < config.mle_iterations; ++t) {
    auto weight = deconv_detail::frequency_weight(kernel, *current.mixture, m_fit,
                                                  config.covariance_model);
    diag.ridge_applied = diag.ridge_applied || weight.ridge_applied;
    diag.identity_weight_fallback = diag.identity_weight_fallback || weight.identity_fallback;
    SimplexLsResult r = simplex_ls(p_red, f_red, weight.w);
    current = deconv_detail::finish_single(kernel, r, std::move(diag));
    diag = current.diagnostics;
  }
  return current;
}

inline JointFitResult fit_joint(const std::vector<GroupData>& groups, const KernelMatrix& kernel,
                                double list_size,
                                const std::vector<CalibrationConstraint>& calibrations,
                                const FitConfig& config) {
  const Eigen::Index kappa = kernel.cols();
  const Eigen::Index j_rows = kernel.rows();
  if (groups.empty()) throw std::invalid_argument("fit_joint: no groups");
  if (config.method == FitMethod::Mle && config.mle_iterations < 1)
    throw std::invalid_argument("fit_joint: at least one reweighting pass is required");

  std::vector<std::size_t> active;
  double total_m = 0.0;
  for (std::size_t l = 0; l < groups.size(); ++l) {
    if (groups[l].counts.counts.size() != static_cast<std::size_t>(j_rows))
      throw std::invalid_argument("fit_joint: histogram length does not match kernel rows");
    if (groups[l].counts.total() > 0) {
      active.push_back(l);
      total_m += groups[l].size();
    }
  }
  if (active.empty()) throw EmptySampleError("fit_joint: all groups are empty");
  if (list_size < total_m * (1.0 - 1e-12))
    throw InfeasibleFitError(
        "fit_joint: list size is smaller than the combined group size, but every inflated "
        "total is at least the group size",
        static_cast<int>(active.size()));

  // Calibration rows refer to groups by label; an empty group cannot carry a
  // nonzero coefficient.
  for (const auto& cal : calibrations) {
    if (cal.rhs <= 0.0) throw std::invalid_argument("fit_joint: calibration rhs must be > 0");
    bool any_nonzero = false;
    for (const auto& [label, coeff] : cal.group_coefficients) {
      if (coeff == 0.0) continue;
      any_nonzero = true;
      bool found_active = false;
      for (std::size_t l : active)
        if (groups[l].label == label) found_active = true;
      if (!found_active)
        throw std::invalid_argument("fit_joint: calibration references group '" + label +
                                    "' which is missing or empty");
    }
    if (!any_nonzero)
      throw std::invalid_argument("fit_joint: calibration with no nonzero coefficient");
  }

  const std::vector<double>& s = kernel.p_star();
  const auto n_active = static_cast<Eigen::Index>(active.size());
  const Eigen::Index n = n_active * kappa;

  // Equality rows: one simplex row per active group, the shared list-size
  // row, then calibration rows.
  const auto n_cal = static_cast<Eigen::Index>(calibrations.size());
  const Eigen::Index n_rows = n_active + 1 + n_cal;
  Eigen::MatrixXd a_eq = Eigen::MatrixXd::Zero(n_rows, n);
  Eigen::VectorXd b_eq(n_rows);
  for (Eigen::Index k = 0; k < n_active; ++k) {
    a_eq.row(k).segment(k * kappa, kappa).setOnes();
    b_eq[k] = 1.0;
  }
  for (Eigen::Index k = 0; k < n_active; ++k) {
    const double m_l = groups[active[static_cast<std::size_t>(k)]].size();
    for (Eigen::Index i = 0; i < kappa; ++i)
      a_eq(n_active, k * kappa + i) = m_l / s[static_cast<std::size_t>(i)];
  }
  b_eq[n_active] = list_size;
  for (Eigen::Index c = 0; c < n_cal; ++c) {
    const auto& cal = calibrations[static_cast<std::size_t>(c)];
    for (const auto& [label, coeff] : cal.group_coefficients) {
      for (Eigen::Index k = 0; k < n_active; ++k) {
        const GroupData& gd = groups[active[static_cast<std::size_t>(k)]];
        if (gd.label != label) continue;
        for (Eigen::Index i = 0; i < kappa; ++i)
          a_eq(n_active + 1 + c, k * kappa + i) += coeff * gd.size() / s[static_cast<std::size_t>(i)];
      }
    }
    b_eq[n_active + 1 + c] = cal.rhs;
  }

  // Stacked least-squares factor.  Moments: all count cells per group,
  // identity weight.  Mle: all but the last cell per group, transformed by
  // the Cholesky factor of the inverse frequency covariance (refreshed each
  // pass from the previous solution).
  const Eigen::Index rows_per = (config.method == FitMethod::Moments) ? j_rows : j_rows - 1;
  Eigen::MatrixXd b_mat = Eigen::MatrixXd::Zero(rows_per * n_active, n);
  Eigen::VectorXd t_vec(rows_per * n_active);

  std::vector<Eigen::VectorXd> freqs;
  freqs.reserve(static_cast<std::size_t>(n_active));
  for (std::size_t l : active) freqs.push_back(counts_to_freq(groups[l].counts));

  JointFitResult out;
  out.groups.resize(groups.size());

  const auto solve_stacked = [&]() -> QpSolution {
    QpProblem prob;
    prob.Q = 2.0 * b_mat.transpose() * b_mat;
    prob.c = -2.0 * b_mat.transpose() * t_vec;
    prob.A_eq = a_eq;
    prob.b_eq = b_eq;
    prob.lower = Eigen::VectorXd::Zero(n);
    prob.upper = Eigen::VectorXd::Ones(n);
    prob.ls = LeastSquaresForm{b_mat, t_vec};
    QpSolution sol = solve(prob);
    if (sol.status == QpStatus::Infeasible)
      throw InfeasibleFitError("fit_joint: constraints are inconsistent (row " +
                                   std::to_string(sol.infeasible_row) + ")",
                               sol.infeasible_row);
    if (sol.status != QpStatus::Converged)
      throw std::runtime_error("fit_joint: solver failed to converge");
    return sol;
  };

  std::vector<double> iteration_objectives;
  bool any_ridge = false;
  bool any_identity_fallback = false;
  int qp_iterations = 0;

  // Identity-weight stage (the whole fit for Moments, the starting point
  // for Mle).
  for (Eigen::Index k = 0; k < n_active; ++k) {
    b_mat.block(k * rows_per, k * kappa, rows_per, kappa) = kernel.matrix().topRows(rows_per);
    t_vec.segment(k * rows_per, rows_per) = freqs[static_cast<std::size_t>(k)].head(rows_per);
  }
  QpSolution sol = solve_stacked();
  qp_iterations += sol.iterations;
  iteration_objectives.push_back((b_mat * sol.x - t_vec).squaredNorm());

  if (config.method == FitMethod::Mle) {
    const Eigen::Index jr = j_rows - 1;
    for (int t = 0; t < config.mle_iterations; ++t) {
      b_mat.setZero();
      for (Eigen::Index k = 0; k < n_active; ++k) {
        const std::size_t l = active[static_cast<std::size_t>(k)];
        Eigen::VectorXd gk = sol.x.segment(k * kappa, kappa).cwiseMax(0.0);
        gk /= gk.sum();
        auto weight =
            deconv_detail::frequency_weight(kernel, deconv_detail::mixture_on_kernel(kernel, gk),
                                            groups[l].counts.total(), config.covariance_model);
        any_ridge = any_ridge || weight.ridge_applied;
        any_identity_fallback = any_identity_fallback || weight.identity_fallback;
        Eigen::LLT<Eigen::MatrixXd> llt(weight.w);
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("fit_joint: weight matrix is not positive definite");
        const Eigen::MatrixXd lt = llt.matrixL().transpose();
        b_mat.block(k * jr, k * kappa, jr, kappa) = lt * kernel.matrix().topRows(jr);
        t_vec.segment(k * jr, jr) = lt * freqs[static_cast<std::size_t>(k)].head(jr);
      }
      sol = solve_stacked();
      qp_iterations += sol.iterations;
      iteration_objectives.push_back((b_mat * sol.x - t_vec).squaredNorm());
    }
  }

  // Per-group cleanup and reporting.
  out.kkt_residual = sol.kkt_residual;
  out.qp_iterations = qp_iterations;
  out.iteration_objectives = iteration_objectives;
  out.objective = iteration_objectives.back();
  for (Eigen::Index k = 0; k < n_active; ++k) {
    const std::size_t l = active[static_cast<std::size_t>(k)];
    Eigen::VectorXd gk = sol.x.segment(k * kappa, kappa);
    for (Eigen::Index i = 0; i < kappa; ++i)
      if (gk[i] < 1e-12) gk[i] = 0.0;  // active-set dust, as in the single fits
    const double sum = gk.sum();
    if (sum > 0.0) gk /= sum;
    FitResult& fr = out.groups[l];
    fr.mixture = deconv_detail::mixture_on_kernel(kernel, gk);
    fr.diagnostics.objective = (b_mat.block(k * rows_per, k * kappa, rows_per, kappa) * gk -
                                t_vec.segment(k * rows_per, rows_per))
                                   .squaredNorm();
    fr.diagnostics.qp_iterations = qp_iterations;
    fr.diagnostics.kkt_residual = sol.kkt_residual;
    fr.diagnostics.ridge_applied = any_ridge;
    fr.diagnostics.identity_weight_fallback = any_identity_fallback;
    fr.diagnostics.iteration_objectives = iteration_objectives;
  }

  // Residuals of the added rows at the reported (cleaned) weights.
  Eigen::VectorXd x_clean = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n_active; ++k) {
    const std::size_t l = active[static_cast<std::size_t>(k)];
    x_clean.segment(k * kappa, kappa) = out.groups[l].mixture->weights();
  }
  double worst = 0.0;
  for (Eigen::Index row = n_active; row < n_rows; ++row) {
    const double resid = std::fabs(a_eq.row(row).dot(x_clean) - b_eq[row]);
    worst = std::max(worst, resid / std::max(1.0, std::fabs(b_eq[row])));
  }
  out.constraint_residual = worst;
  for (Eigen::Index k = 0; k < n_active; ++k)
    out.groups[active[static_cast<std::size_t>(k)]].diagnostics.constraint_residual = worst;
  return out;
}

}  // namespace deconvht
