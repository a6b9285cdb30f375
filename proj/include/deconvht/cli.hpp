// Subcommand implementations behind the command-line tool: scenario sweeps,
// estimation on observation files, bootstrap error estimation, and kernel
// matrix dumps.  Each returns a process exit code; configuration and data
// problems throw ConfigError/DataError (exit 2), estimation failures throw
// std::runtime_error and relatives (exit 1).
#ifndef DECONVHT_CLI_HPP
#define DECONVHT_CLI_HPP

#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deconvht/config.hpp"
#include "deconvht/deconvolve.hpp"
#include "deconvht/estimators.hpp"
#include "deconvht/io.hpp"
#include "deconvht/simulate.hpp"

namespace deconvht {

struct CliOptions {
  std::string config_path;
  std::string data_path;
  std::string out_path;  // overrides [output] path when non-empty
  std::string format;    // overrides [output] format when non-empty
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
};

namespace cli_detail {

struct OutputTarget {
  std::string path;
  std::string format;  // "csv" or "text"
};

inline OutputTarget resolve_output(const RunConfig& rc, const CliOptions& opts) {
  OutputTarget t;
  t.path = !opts.out_path.empty() ? opts.out_path : rc.out_path.value_or("");
  if (t.path.empty())
    throw ConfigError("no output path: set [output] path or pass --out");
  t.format = !opts.format.empty() ? opts.format : rc.format;
  if (t.format != "csv" && t.format != "text")
    throw ConfigError("format must be csv or text");
  return t;
}

// One fitted unit: a group, further split by the covariate value when the
// data carries one.
struct Cell {
  std::string group;
  std::string w;
  std::string label;  // group, or group|w when a covariate is present
  CountVector counts;           // every record (current and historical)
  std::int64_t current = 0;     // records with history = 0
};

inline std::vector<Cell> build_cells(const ObservationData& data, int j_rows) {
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<Cell> cells;
  for (const ObservationRecord& rec : data.records) {
    const auto key = std::make_pair(rec.group, rec.w);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, cells.size()).first;
      Cell c;
      c.group = rec.group;
      c.w = rec.w;
      c.label = data.has_w ? rec.group + "|" + rec.w : rec.group;
      c.counts.counts.assign(static_cast<std::size_t>(j_rows), 0);
      cells.push_back(std::move(c));
    }
    Cell& cell = cells[it->second];
    ++cell.counts.counts[static_cast<std::size_t>(rec.y - 1)];
    if (!rec.history) ++cell.current;
  }
  // Deterministic order independent of record order.
  std::vector<Cell> sorted;
  sorted.reserve(cells.size());
  for (const auto& [key, pos] : index) sorted.push_back(std::move(cells[pos]));
  return sorted;
}

inline KernelMatrix kernel_from_config(const RunConfig& rc) {
  const ObservationKernel kernel = make_kernel(rc);
  const Grid grid = make_grid(rc, kernel);
  try {
    return build_kernel_matrix(grid, kernel);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid kernel settings: ") + e.what());
  }
}

// Human-readable identity of an equality row inside the joint fit, used to
// decorate infeasibility reports.
inline std::string joint_row_name(int row, int n_groups,
                                  const std::vector<std::pair<std::string, double>>& calib) {
  if (row < n_groups) return "group weight normalization";
  if (row == n_groups) return "list-size constraint";
  const int c = row - n_groups - 1;
  if (c >= 0 && c < static_cast<int>(calib.size()))
    return "calibration constraint for class '" + calib[static_cast<std::size_t>(c)].first + "'";
  return "constraint row " + std::to_string(row);
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// simulate: expand the configured sweep into scenarios, run them, and emit
// the summary table.
// ---------------------------------------------------------------------------
inline int cmd_simulate(const CliOptions& opts) {
  RunConfig rc = parse_config_file(opts.config_path);
  if (!rc.has_simulate) throw ConfigError("missing [simulate] section");
  if (rc.families.empty()) throw ConfigError("[simulate] families is required");
  if (rc.alphas.empty()) throw ConfigError("[simulate] alphas is required");
  if (rc.sim_attempt_caps.empty()) throw ConfigError("[simulate] attempt_caps is required");
  if (rc.sim_list_sizes.empty()) throw ConfigError("[simulate] list_sizes is required");
  const std::uint64_t master_seed = opts.seed.value_or(rc.sim_seed);
  const int reps = opts.reps.value_or(rc.reps);
  const cli_detail::OutputTarget target = cli_detail::resolve_output(rc, opts);
  // The sweep always uses the capped-attempts model; [kernel] grid keys
  // override the default per-attempt grid.
  const Grid grid = make_grid(rc, TruncatedGeometric{});

  struct RowId {
    std::string family;
    int cap;
    double alpha;
    std::int64_t list_size;
  };
  std::vector<ScenarioConfig> scenarios;
  std::vector<RowId> ids;
  std::uint64_t scenario_index = 0;
  for (const std::int64_t list_size : rc.sim_list_sizes) {
    for (const std::string& family : rc.families) {
      for (const int cap : rc.sim_attempt_caps) {
        for (const double alpha : rc.alphas) {
          ScenarioConfig sc;
          sc.pair.family = family_from_name(family);
          sc.pair.alpha = alpha;
          sc.attempt_cap = cap;
          sc.list_size = list_size;
          sc.pr1 = rc.pr1;
          sc.reps = reps;
          sc.seed = derive_stream_seed(master_seed, scenario_index++);
          sc.grid = grid;
          sc.fit = rc.fit;
          sc.joint_fit = rc.joint_fit;
          try {
            sc.validate();
          } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("invalid scenario settings: ") + e.what());
          }
          scenarios.push_back(std::move(sc));
          ids.push_back({family, cap, alpha, list_size});
        }
      }
    }
  }

  const std::vector<ScenarioOutcome> outcomes = run_table(scenarios);

  static const std::vector<std::string> header = {"G0",    "M0",    "alpha", "M-NV", "M-MHT",
                                                  "S-NV",  "S-MHT", "S-OR",  "M-m1", "M-m0"};
  std::string csv = join_csv_row(header);
  std::vector<std::vector<std::string>> text_rows = {header};
  int failures = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const RowId& id = ids[i];
    if (!outcomes[i].row) {
      ++failures;
      std::cerr << "scenario " << id.family << " M0=" << id.cap << " alpha=" << id.alpha
                << " I=" << id.list_size << " failed: " << outcomes[i].error << "\n";
      continue;
    }
    const SummaryRow& r = *outcomes[i].row;
    csv += join_csv_row({id.family, std::to_string(id.cap), fmt17(id.alpha), fmt17(r.mean_naive),
                         fmt17(r.mean_mht), fmt17(r.rmse_naive), fmt17(r.rmse_mht),
                         fmt17(r.rmse_oracle), fmt17(r.mean_m1), fmt17(r.mean_m0)});
    text_rows.push_back({id.family, std::to_string(id.cap), fmt_fixed(id.alpha, 2),
                         fmt_fixed(r.mean_naive, 4), fmt_fixed(r.mean_mht, 4),
                         fmt_fixed(r.rmse_naive, 4), fmt_fixed(r.rmse_mht, 4),
                         fmt_fixed(r.rmse_oracle, 4), fmt_fixed(r.mean_m1, 1),
                         fmt_fixed(r.mean_m0, 1)});
  }

  if (target.format == "csv") {
    atomic_write(target.path, csv);
    atomic_write(target.path + ".txt", align_table(text_rows));
  } else {
    atomic_write(target.path, align_table(text_rows));
  }
  return failures > 0 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// estimate: fit each group (split by covariate when present), optionally
// coupled through the known list size and calibration constraints, and
// report naive/corrected proportion estimates with diagnostics.
// ---------------------------------------------------------------------------
inline int cmd_estimate(const CliOptions& opts) {
  RunConfig rc = parse_config_file(opts.config_path);
  if (opts.data_path.empty()) throw ConfigError("estimate requires --data");
  const KernelMatrix km = cli_detail::kernel_from_config(rc);
  const ObservationData data =
      read_observation_csv(opts.data_path, static_cast<int>(km.rows()));
  std::vector<cli_detail::Cell> cells =
      cli_detail::build_cells(data, static_cast<int>(km.rows()));

  if (!rc.calibration.empty()) {
    if (!data.has_w)
      throw ConfigError("calibration requires a covariate column 'w' in the data");
    if (!rc.list_size)
      throw ConfigError("calibration requires the list size ([population] I)");
  }

  // Fit every cell, either jointly or independently.
  std::vector<std::optional<DiscreteMixture>> mixtures(cells.size());
  std::vector<double> objectives(cells.size(), 0.0);
  double constraint_residual = 0.0;
  if (rc.list_size) {
    std::vector<GroupData> groups;
    groups.reserve(cells.size());
    for (const cli_detail::Cell& c : cells)
      groups.push_back({c.label, c.counts, static_cast<double>(c.current)});
    std::vector<CalibrationConstraint> constraints;
    for (const auto& [value, proportion] : rc.calibration) {
      CalibrationConstraint cc;
      for (const cli_detail::Cell& c : cells)
        if (c.w == value) cc.group_coefficients.emplace_back(c.label, 1.0);
      if (cc.group_coefficients.empty())
        throw ConfigError("calibration class '" + value + "' matches no records");
      cc.rhs = proportion * static_cast<double>(*rc.list_size);
      constraints.push_back(std::move(cc));
    }
    try {
      const JointFitResult jr =
          fit_joint(groups, km, static_cast<double>(*rc.list_size), constraints, rc.fit);
      for (std::size_t i = 0; i < cells.size(); ++i) {
        mixtures[i] = jr.groups[i].mixture;
        objectives[i] = jr.groups[i].diagnostics.objective;
      }
      constraint_residual = jr.constraint_residual;
    } catch (const InfeasibleFitError& e) {
      throw std::runtime_error(
          std::string(e.what()) + " [" +
          cli_detail::joint_row_name(e.row(), static_cast<int>(cells.size()), rc.calibration) +
          "]");
    }
  } else {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const FitResult r = rc.fit.method == FitMethod::Moments
                              ? fit_moments(cells[i].counts, km)
                              : fit_mle(cells[i].counts, km, rc.fit);
      mixtures[i] = r.mixture;
      objectives[i] = r.diagnostics.objective;
    }
  }

  // Corrected shares per cell, then aggregated per group label.
  std::vector<GroupFit> fits(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    fits[i].m = static_cast<double>(cells[i].current);
    fits[i].mixture = mixtures[i];
  }
  const std::vector<double> cell_share = mht_proportions(fits);

  struct GroupAgg {
    double m = 0.0;
    double mht = 0.0;
    double weighted_e_inv = 0.0;  // sum of m_cell * E[1/S]
    double objective = 0.0;
  };
  std::map<std::string, GroupAgg> by_group;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    GroupAgg& agg = by_group[cells[i].group];
    agg.m += static_cast<double>(cells[i].current);
    agg.mht += cell_share[i];
    agg.objective += objectives[i];
    if (cells[i].current > 0 && mixtures[i])
      agg.weighted_e_inv += static_cast<double>(cells[i].current) * expected_inverse(*mixtures[i]);
  }
  std::vector<double> group_m;
  for (const auto& [label, agg] : by_group) group_m.push_back(agg.m);
  const std::vector<double> group_naive = naive_proportions(group_m);

  static const std::vector<std::string> header = {
      "label", "m", "naive", "mht", "e_inv", "objective", "constraint_residual"};
  std::string csv = join_csv_row(header);
  std::vector<std::vector<std::string>> text_rows = {header};
  std::size_t gi = 0;
  for (const auto& [label, agg] : by_group) {
    const double e_inv = agg.m > 0.0 ? agg.weighted_e_inv / agg.m : 0.0;
    const std::vector<std::string> cellstrs = {
        label,           fmt17(agg.m),        fmt17(group_naive[gi]), fmt17(agg.mht),
        fmt17(e_inv),    fmt17(agg.objective), fmt17(constraint_residual)};
    csv += join_csv_row(cellstrs);
    text_rows.push_back(cellstrs);
    ++gi;
  }

  // Fitted mixture weights, one block per cell.
  static const std::vector<std::string> mix_header = {"label", "w", "point", "weight"};
  std::string mix_csv = join_csv_row(mix_header);
  std::vector<std::vector<std::string>> mix_text;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!mixtures[i]) continue;
    const DiscreteMixture& g = *mixtures[i];
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (g.weights()[static_cast<Eigen::Index>(k)] < rc.fit.report_threshold) continue;
      const std::vector<std::string> row = {
          cells[i].group, cells[i].w, fmt17(g.support()[k]),
          fmt17(g.weights()[static_cast<Eigen::Index>(k)])};
      mix_csv += join_csv_row(row);
      mix_text.push_back(row);
    }
  }

  const cli_detail::OutputTarget target = cli_detail::resolve_output(rc, opts);
  if (target.format == "csv") {
    atomic_write(target.path, csv);
    atomic_write(target.path + ".mixtures.csv", mix_csv);
  } else {
    std::string text = align_table(text_rows);
    text += "\nfitted mixture weights (>= report threshold)\n";
    std::vector<std::vector<std::string>> block = {mix_header};
    block.insert(block.end(), mix_text.begin(), mix_text.end());
    text += align_table(block);
    atomic_write(target.path, text);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bootstrap: per-cell parametric bootstrap of the corrected total's error.
// ---------------------------------------------------------------------------
inline int cmd_bootstrap(const CliOptions& opts) {
  RunConfig rc = parse_config_file(opts.config_path);
  if (opts.data_path.empty()) throw ConfigError("bootstrap requires --data");
  if (!rc.population_size || !rc.list_size)
    throw ConfigError("bootstrap requires [population] N and I");
  if (opts.reps) {
    if (*opts.reps < 1) throw ConfigError("replications must be positive");
    rc.bootstrap_replications = *opts.reps;
  }
  if (!rc.bootstrap_replications)
    throw ConfigError("bootstrap requires [bootstrap] replications (or --reps)");
  const int replications = *rc.bootstrap_replications;
  const std::uint64_t master_seed = opts.seed.value_or(rc.bootstrap_seed);

  const KernelMatrix km = cli_detail::kernel_from_config(rc);
  const ObservationData data =
      read_observation_csv(opts.data_path, static_cast<int>(km.rows()));
  const std::vector<cli_detail::Cell> cells =
      cli_detail::build_cells(data, static_cast<int>(km.rows()));

  const PopulationFrame frame = [&rc]() -> PopulationFrame {
    try {
      return PopulationFrame(static_cast<double>(*rc.population_size),
                             static_cast<double>(*rc.list_size));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("invalid [population]: ") + e.what());
    }
  }();

  static const std::vector<std::string> header = {"label", "m",        "K",     "seed",
                                                  "mse_term", "root_mse", "failed_reps"};
  std::string csv = join_csv_row(header);
  std::vector<std::vector<std::string>> text_rows = {header};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const cli_detail::Cell& cell = cells[i];
    if (cell.current == 0) {
      std::cerr << "bootstrap: skipping '" << cell.label << "' (no current records)\n";
      continue;
    }
    const FitResult fit = rc.fit.method == FitMethod::Moments
                              ? fit_moments(cell.counts, km)
                              : fit_mle(cell.counts, km, rc.fit);
    const std::uint64_t cell_seed = derive_stream_seed(master_seed, i);
    const BootstrapMseResult r = bootstrap_mse_term(*fit.mixture, cell.current, frame, km,
                                                    replications, cell_seed, rc.fit);
    const std::vector<std::string> row = {
        cell.label,
        std::to_string(cell.current),
        std::to_string(replications),
        std::to_string(cell_seed),
        fmt17(r.mse_term),
        fmt17(std::sqrt(r.mse_term)),
        std::to_string(r.failed_replications)};
    csv += join_csv_row(row);
    text_rows.push_back(row);
  }

  const cli_detail::OutputTarget target = cli_detail::resolve_output(rc, opts);
  if (target.format == "csv")
    atomic_write(target.path, csv);
  else
    atomic_write(target.path, align_table(text_rows));
  return 0;
}

// ---------------------------------------------------------------------------
// kernel: dump the observed-count distribution matrix for inspection.
// ---------------------------------------------------------------------------
inline int cmd_kernel(const CliOptions& opts) {
  RunConfig rc = parse_config_file(opts.config_path);
  const KernelMatrix km = cli_detail::kernel_from_config(rc);

  std::vector<std::string> header = {"j"};
  for (double s : km.p_star()) header.push_back(fmt17(s));
  std::string csv = join_csv_row(header);
  std::vector<std::vector<std::string>> text_rows = {header};
  for (Eigen::Index j = 0; j < km.rows(); ++j) {
    std::vector<std::string> row = {std::to_string(j + 1)};
    for (Eigen::Index i = 0; i < km.cols(); ++i) row.push_back(fmt17(km.matrix()(j, i)));
    csv += join_csv_row(row);
    text_rows.push_back(row);
  }
  std::vector<std::string> sums = {"sum"};
  for (Eigen::Index i = 0; i < km.cols(); ++i)
    sums.push_back(fmt_fixed(km.matrix().col(i).sum(), 6));
  csv += join_csv_row(sums);
  text_rows.push_back(sums);

  const cli_detail::OutputTarget target = cli_detail::resolve_output(rc, opts);
  if (target.format == "csv")
    atomic_write(target.path, csv);
  else
    atomic_write(target.path, align_table(text_rows));
  return 0;
}

}  // namespace deconvht

#endif  // DECONVHT_CLI_HPP
