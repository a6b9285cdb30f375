#pragma once

// Population-scale estimators built on response-probability mixtures:
//
//   ht_oracle_total   — inverse-probability total from KNOWN per-responder
//                       response probabilities (the unattainable benchmark).
//   mht_total         — the same total with the unknown probabilities
//                       replaced by a fitted mixture: (N/I) * m * E[1/S].
//   mht_proportions   — group shares of the mixture-inflated totals; the
//                       frame cancels, so none is taken.
//   naive_proportions — responder shares, ignoring non-response.
//   bootstrap_mse_term— parametric-bootstrap estimate of the fitting error
//                       (E (T_hat - T)^2 with the fitted mixture as truth).

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "deconvht/deconvolve.hpp"
#include "deconvht/kernels.hpp"
#include "deconvht/mixture.hpp"
#include "deconvht/rng.hpp"

namespace deconvht {

struct PopulationFrame {
  double population_size = 1.0;  // N
  double list_size = 1.0;        // I, the frame actually approached

  PopulationFrame(double n, double i) : population_size(n), list_size(i) {
    if (!(i >= 1.0) || !(n >= i))
      throw std::invalid_argument("PopulationFrame: need 1 <= list size <= population size");
  }

  double inflation() const { return population_size / list_size; }
};

// Inverse-probability total over responders with known response
// probabilities: (N/I) * sum 1/p_i.  An empty responder set totals 0.
inline double ht_oracle_total(const std::vector<double>& response_probs,
                              const PopulationFrame& frame) {
  double sum = 0.0;
  for (double p : response_probs) {
    if (!(p > 0.0) || p > 1.0)
      throw std::domain_error("ht_oracle_total: response probability outside (0, 1]");
    sum += 1.0 / p;
  }
  return frame.inflation() * sum;
}

// Mixture-inflated total: (N/I) * m * E[1/S] under the fitted mixture.
inline double mht_total(const DiscreteMixture& g_hat, double m, const PopulationFrame& frame) {
  if (m < 0.0) throw std::invalid_argument("mht_total: negative responder count");
  if (m == 0.0) return 0.0;
  return frame.inflation() * m * expected_inverse(g_hat);
}

// One group's responder count and fitted mixture; the mixture may be absent
// only when the group is empty.
struct GroupFit {
  double m = 0.0;
  std::optional<DiscreteMixture> mixture;
};

// Group shares of the inflated totals m_l * E_l[1/S].  Sums to 1.
inline std::vector<double> mht_proportions(const std::vector<GroupFit>& fits) {
  std::vector<double> terms(fits.size(), 0.0);
  double total = 0.0;
  for (std::size_t l = 0; l < fits.size(); ++l) {
    if (fits[l].m < 0.0) throw std::invalid_argument("mht_proportions: negative count");
    if (fits[l].m == 0.0) continue;
    if (!fits[l].mixture)
      throw std::invalid_argument("mht_proportions: nonempty group lacks a fitted mixture");
    terms[l] = fits[l].m * expected_inverse(*fits[l].mixture);
    total += terms[l];
  }
  if (total <= 0.0) throw EmptySampleError("mht_proportions: no responders in any group");
  for (double& t : terms) t /= total;
  return terms;
}

// Responder shares m_l / sum m_l.
inline std::vector<double> naive_proportions(const std::vector<double>& m) {
  double total = 0.0;
  for (double v : m) {
    if (v < 0.0) throw std::invalid_argument("naive_proportions: negative count");
    total += v;
  }
  if (total <= 0.0) throw EmptySampleError("naive_proportions: no responders in any group");
  std::vector<double> out(m.size());
  for (std::size_t l = 0; l < m.size(); ++l) out[l] = m[l] / total;
  return out;
}

enum class EstimatorKind { Naive, Mht, Oracle };

// A labeled set of per-group point estimates plus fit diagnostics, as
// assembled for reports.
struct EstimateReport {
  EstimatorKind kind = EstimatorKind::Naive;
  std::vector<double> values;     // one per group
  std::vector<double> e_inverse;  // E[1/S] per group; NaN where not applicable
};

struct BootstrapMseResult {
  double mse_term = 0.0;
  int replications = 0;
  int failed_replications = 0;
};

// Parametric bootstrap of the fitting-error MSE term.  The fitted mixture is
// treated as the truth: each replication draws m responders (support point,
// then observed count from that kernel column), refits with the same
// configuration, and measures the squared deviation of the refitted total
// around the truth's total (N/I) * m * E[1/S].
//
// RNG contract: replication k uses the substream Rng(seed, k) and consumes
// exactly two uniform variates per responder, support draw first.
// Replications whose refit fails are excluded and counted; more than 10%
// failures is an error.  Accumulation is in replication order, so the result
// is independent of any execution schedule.
inline BootstrapMseResult bootstrap_mse_term(const DiscreteMixture& g_hat, std::int64_t m,
                                             const PopulationFrame& frame,
                                             const KernelMatrix& kernel, int replications,
                                             std::uint64_t seed, const FitConfig& fit_config) {
  if (replications < 1) throw std::invalid_argument("bootstrap_mse_term: need K >= 1");
  if (m < 1) throw std::invalid_argument("bootstrap_mse_term: need m >= 1");
  detail::require_support_matches(kernel, g_hat, "bootstrap_mse_term");

  const double center = mht_total(g_hat, static_cast<double>(m), frame);
  const Eigen::Index j_rows = kernel.rows();
  const Eigen::Index kappa = kernel.cols();

  BootstrapMseResult out;
  out.replications = replications;
  double acc = 0.0;
  int ok = 0;
  for (int k = 0; k < replications; ++k) {
    Rng rng(seed, static_cast<std::uint64_t>(k));
    std::vector<std::int64_t> cells(static_cast<std::size_t>(j_rows), 0);
    for (std::int64_t item = 0; item < m; ++item) {
      const double u_support = rng.uniform01();
      Eigen::Index col = kappa - 1;
      double acc_w = 0.0;
      for (Eigen::Index i = 0; i < kappa; ++i) {
        acc_w += g_hat.weights()[i];
        if (u_support < acc_w) {
          col = i;
          break;
        }
      }
      const double u_y = rng.uniform01();
      Eigen::Index y = j_rows - 1;
      double acc_p = 0.0;
      for (Eigen::Index j = 0; j < j_rows; ++j) {
        acc_p += kernel.matrix()(j, col);
        if (u_y < acc_p) {
          y = j;
          break;
        }
      }
      ++cells[static_cast<std::size_t>(y)];
    }
    try {
      const CountVector counts{cells};
      const FitResult refit = (fit_config.method == FitMethod::Moments)
                                  ? fit_moments(counts, kernel)
                                  : fit_mle(counts, kernel, fit_config);
      const double t_hat = mht_total(*refit.mixture, static_cast<double>(m), frame);
      const double dev = t_hat - center;
      acc += dev * dev;
      ++ok;
    } catch (const std::runtime_error&) {
      ++out.failed_replications;
    }
  }
  if (out.failed_replications * 10 > replications)
    throw std::runtime_error("bootstrap_mse_term: more than 10% of replications failed (" +
                             std::to_string(out.failed_replications) + "/" +
                             std::to_string(replications) + ")");
  out.mse_term = (ok > 0) ? acc / static_cast<double>(ok) : 0.0;
  return out;
}

}  // namespace deconvht
