// Monte Carlo harness: draws capped-attempt response data for two labelled
// groups from configurable response-probability distributions, runs the
// naive / mixture-corrected / oracle proportion estimators on each
// replication, and aggregates bias and root-mean-squared-error summaries.
#ifndef DECONVHT_SIMULATE_HPP
#define DECONVHT_SIMULATE_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "deconvht/deconvolve.hpp"
#include "deconvht/estimators.hpp"
#include "deconvht/grid.hpp"
#include "deconvht/kernels.hpp"
#include "deconvht/mixture.hpp"
#include "deconvht/rng.hpp"

namespace deconvht {

// Families of paired group-0 / group-1 response-probability distributions.
// In every family the group-1 distribution is shifted or contaminated
// downwards relative to group 0 by the amount `alpha`, so group 1 responds
// less often and naive proportion estimates undercount it.
enum class Family { TwoPoints, Uniform, Normal };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::TwoPoints: return "2points";
    case Family::Uniform: return "unif";
    case Family::Normal: return "norm";
  }
  return "?";
}

inline Family family_from_name(const std::string& name) {
  if (name == "2points") return Family::TwoPoints;
  if (name == "unif") return Family::Uniform;
  if (name == "norm") return Family::Normal;
  throw std::invalid_argument("unknown distribution family: " + name);
}

struct PairSpec {
  Family family = Family::TwoPoints;
  double alpha = 0.4;  // severity of the group-1 response deficit

  void validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
    switch (family) {
      case Family::TwoPoints:
        // Atoms are {0.5 - alpha, 0.9 - alpha}; the lower one must stay positive.
        if (!(alpha < 0.5)) throw std::invalid_argument("two-point alpha must be below 0.5");
        break;
      case Family::Uniform:
        // alpha is a mixing weight.
        if (!(alpha <= 1.0)) throw std::invalid_argument("uniform alpha must be at most 1");
        break;
      case Family::Normal:
        // Values are clamped to [0.1, 1]; any non-negative shift is usable,
        // but bound it to keep the location parameter sensible.
        if (!(alpha <= 1.0)) throw std::invalid_argument("normal alpha must be at most 1");
        break;
    }
  }
};

// Draw one per-attempt response probability for an item of the given group
// (0 or 1).  Consumes a fixed number of variates per family so replication
// streams stay aligned:
//   TwoPoints: 1 uniform.  Group 0 takes 0.5 or 0.9 with equal probability;
//              group 1 the same atoms shifted down by alpha.
//   Uniform:   group 0 draws U(0.1, 1) (1 uniform); group 1 first flips a
//              contamination coin (1 uniform) and either sits at 0.1 or
//              draws U(0.1, 1) (1 more uniform).
//   Normal:    2 uniforms (one normal variate).  N(0.5, 0.1) for group 0,
//              N(0.5 - alpha, 0.1) for group 1, both clamped into [0.1, 1].
inline double sample_response_prob(const PairSpec& pair, int group, Rng& rng) {
  if (group != 0 && group != 1) throw std::invalid_argument("group must be 0 or 1");
  switch (pair.family) {
    case Family::TwoPoints: {
      const double shift = group == 1 ? pair.alpha : 0.0;
      const double u = rng.uniform01();
      return (u < 0.5 ? 0.5 : 0.9) - shift;
    }
    case Family::Uniform: {
      if (group == 0) return rng.uniform(0.1, 1.0);
      const double u = rng.uniform01();
      if (u < pair.alpha) return 0.1;
      return rng.uniform(0.1, 1.0);
    }
    case Family::Normal: {
      const double mean = 0.5 - (group == 1 ? pair.alpha : 0.0);
      const double x = rng.normal(mean, 0.1);
      return std::min(1.0, std::max(0.1, x));
    }
  }
  throw std::logic_error("unreachable family");
}

struct ScenarioConfig {
  PairSpec pair;
  int attempt_cap = 4;          // maximal number of solicitation attempts
  std::int64_t list_size = 10000;  // number of items on the sampled list
  double pr1 = 0.5;             // true share of group-1 items
  int reps = 300;               // Monte Carlo replications
  std::uint64_t seed = 1;       // master seed; replication k uses substream k
  Grid grid = Grid::linspace(0.1, 0.02, 1.0);  // per-attempt probability grid
  FitConfig fit;                // mixture fit settings (method, iterations)
  bool joint_fit = false;       // couple the two groups through the known list size

  void validate() const {
    pair.validate();
    if (attempt_cap < 2) throw std::invalid_argument("attempt cap must be at least 2");
    if (list_size < 1) throw std::invalid_argument("list size must be positive");
    if (!(pr1 > 0.0) || !(pr1 <= 1.0))
      throw std::invalid_argument("group-1 share must lie in (0, 1]");
    if (reps < 1) throw std::invalid_argument("replication count must be positive");
  }
};

// Estimates and responder counts from a single simulated list.
struct RepResult {
  double naive = 0.0;   // responder share of group 1
  double mht = 0.0;     // mixture-corrected share of group 1
  double oracle = 0.0;  // responders reweighted by their true response probs
  std::int64_t m1 = 0;  // group-1 responders
  std::int64_t m0 = 0;  // group-0 responders
};

namespace sim_detail {

struct GroupDraw {
  CountVector counts;         // responder attempt histogram, bins 1..attempt_cap
  double inv_prob_sum = 0.0;  // sum of 1/p_overall over the group's responders
};

inline GroupDraw draw_group(const ScenarioConfig& config, int group, std::int64_t n_items,
                            Rng& rng) {
  GroupDraw out;
  out.counts.counts.assign(static_cast<std::size_t>(config.attempt_cap), 0);
  for (std::int64_t i = 0; i < n_items; ++i) {
    const double p_tilde = sample_response_prob(config.pair, group, rng);
    const std::int64_t attempts = rng.geometric_attempts(p_tilde);
    if (attempts <= config.attempt_cap) {
      ++out.counts.counts[static_cast<std::size_t>(attempts - 1)];
      out.inv_prob_sum += 1.0 / response_prob(p_tilde, config.attempt_cap);
    }
  }
  return out;
}

inline std::optional<DiscreteMixture> fit_group(const CountVector& counts,
                                                const KernelMatrix& kernel,
                                                const FitConfig& fit) {
  if (counts.total() == 0) return std::nullopt;
  const FitResult r = fit.method == FitMethod::Moments ? fit_moments(counts, kernel)
                                                       : fit_mle(counts, kernel, fit);
  return r.mixture;
}

inline RepResult run_rep(const ScenarioConfig& config, const KernelMatrix& kernel,
                         int rep_index) {
  Rng rng(config.seed, static_cast<std::uint64_t>(rep_index));
  std::int64_t n1 = 0;
  for (std::int64_t i = 0; i < config.list_size; ++i)
    if (rng.uniform01() < config.pr1) ++n1;
  const std::int64_t n0 = config.list_size - n1;

  const GroupDraw g1 = draw_group(config, 1, n1, rng);
  const GroupDraw g0 = draw_group(config, 0, n0, rng);

  RepResult out;
  out.m1 = g1.counts.total();
  out.m0 = g0.counts.total();

  const std::vector<double> sizes = {static_cast<double>(out.m1),
                                     static_cast<double>(out.m0)};
  out.naive = naive_proportions(sizes)[0];

  std::vector<GroupFit> fits(2);
  fits[0].m = sizes[0];
  fits[1].m = sizes[1];
  if (config.joint_fit) {
    std::vector<GroupData> groups(2);
    groups[0].label = "1";
    groups[0].counts = g1.counts;
    groups[1].label = "0";
    groups[1].counts = g0.counts;
    const JointFitResult jr =
        fit_joint(groups, kernel, static_cast<double>(config.list_size), {}, config.fit);
    fits[0].mixture = jr.groups[0].mixture;
    fits[1].mixture = jr.groups[1].mixture;
  } else {
    fits[0].mixture = fit_group(g1.counts, kernel, config.fit);
    fits[1].mixture = fit_group(g0.counts, kernel, config.fit);
  }
  out.mht = mht_proportions(fits)[0];

  const double denom = g1.inv_prob_sum + g0.inv_prob_sum;
  if (!(denom > 0.0)) throw std::runtime_error("degenerate list: no inclusion mass");
  out.oracle = g1.inv_prob_sum / denom;
  return out;
}

inline int resolve_thread_count(int reps) {
  long v = 0;
  if (const char* env = std::getenv("DECONV_HT_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    v = std::strtol(env, &end, 10);
    if (end == env || v < 0) v = 0;
  }
  if (v == 0) {
    const unsigned hc = std::thread::hardware_concurrency();
    v = hc == 0 ? 1 : static_cast<long>(hc);
  }
  return static_cast<int>(std::min<long>(v, reps));
}

}  // namespace sim_detail

// Runs a single replication end to end.  Replications are independent:
// replication k draws everything from the substream Rng(seed, k).
inline RepResult run_one_rep(const ScenarioConfig& config, int rep_index) {
  config.validate();
  if (rep_index < 0) throw std::invalid_argument("replication index must be non-negative");
  const KernelMatrix kernel =
      build_kernel_matrix(config.grid, TruncatedGeometric{config.attempt_cap});
  return sim_detail::run_rep(config, kernel, rep_index);
}

// Aggregated scenario summary.  Mean columns average the per-replication
// values; spread columns are root mean squared deviations from the true
// group-1 share.
struct SummaryRow {
  double mean_naive = 0.0;
  double mean_mht = 0.0;
  double rmse_naive = 0.0;
  double rmse_mht = 0.0;
  double rmse_oracle = 0.0;
  double mean_m1 = 0.0;
  double mean_m0 = 0.0;
  int reps_used = 0;
  int reps_failed = 0;
};

// Runs all replications of one scenario.  Replications are distributed over
// a small thread pool (size from DECONV_HT_THREADS, 0 or unset = hardware
// concurrency) but each replication owns its RNG substream and results are
// reduced in replication order, so the output is identical for any thread
// count.  Failed replications are skipped; more than 5% failures abort the
// scenario.
inline SummaryRow run_scenario(const ScenarioConfig& config) {
  config.validate();
  const KernelMatrix kernel =
      build_kernel_matrix(config.grid, TruncatedGeometric{config.attempt_cap});

  struct Slot {
    bool ok = false;
    RepResult rep;
    std::string error;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(config.reps));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= config.reps) return;
      Slot& slot = slots[static_cast<std::size_t>(i)];
      try {
        slot.rep = sim_detail::run_rep(config, kernel, i);
        slot.ok = true;
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };

  const int threads = sim_detail::resolve_thread_count(config.reps);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  SummaryRow row;
  std::string first_error;
  for (const Slot& slot : slots) {
    if (!slot.ok) {
      ++row.reps_failed;
      if (first_error.empty()) first_error = slot.error;
      continue;
    }
    const RepResult& r = slot.rep;
    ++row.reps_used;
    row.mean_naive += r.naive;
    row.mean_mht += r.mht;
    row.rmse_naive += (r.naive - config.pr1) * (r.naive - config.pr1);
    row.rmse_mht += (r.mht - config.pr1) * (r.mht - config.pr1);
    row.rmse_oracle += (r.oracle - config.pr1) * (r.oracle - config.pr1);
    row.mean_m1 += static_cast<double>(r.m1);
    row.mean_m0 += static_cast<double>(r.m0);
  }
  if (row.reps_failed * 20 > config.reps)
    throw std::runtime_error("scenario failure rate above 5%; first error: " + first_error);
  const double n = static_cast<double>(row.reps_used);
  row.mean_naive /= n;
  row.mean_mht /= n;
  row.rmse_naive = std::sqrt(row.rmse_naive / n);
  row.rmse_mht = std::sqrt(row.rmse_mht / n);
  row.rmse_oracle = std::sqrt(row.rmse_oracle / n);
  row.mean_m1 /= n;
  row.mean_m0 /= n;
  return row;
}

// One table entry: either a summary row or the error that aborted the
// scenario.  A failing scenario never prevents later rows from running.
struct ScenarioOutcome {
  std::optional<SummaryRow> row;
  std::string error;
};

inline std::vector<ScenarioOutcome> run_table(const std::vector<ScenarioConfig>& scenarios) {
  std::vector<ScenarioOutcome> out(scenarios.size());
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    try {
      out[i].row = run_scenario(scenarios[i]);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  }
  return out;
}

}  // namespace deconvht

#endif  // DECONVHT_SIMULATE_HPP
