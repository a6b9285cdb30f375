// Sectioned key-value run configuration: one flat text file drives every
// subcommand.  Sections: [kernel] (observation model and grid), [population]
// (frame sizes), [fit] (mixture fit settings), [simulate] (scenario sweep),
// [calibration] (known covariate proportions), [bootstrap], [output].
// Unknown sections, unknown keys, duplicate keys, and malformed values are
// rejected with the offending line number.
#ifndef DECONVHT_CONFIG_HPP
#define DECONVHT_CONFIG_HPP

#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deconvht/deconvolve.hpp"
#include "deconvht/grid.hpp"
#include "deconvht/kernels.hpp"

namespace deconvht {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message, int line = 0)
      : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + message
                                    : "config: " + message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct RunConfig {
  // [kernel]
  std::string kernel_variant = "truncated_geometric";
  int attempt_cap = 4;
  int extra_draws = 3;
  std::optional<double> grid_start;
  std::optional<double> grid_step;
  std::optional<double> grid_end;
  std::string parametrization = "per_attempt";
  bool parametrization_set = false;

  // [population]
  std::optional<std::int64_t> population_size;  // key N
  std::optional<std::int64_t> list_size;        // key I

  // [fit]
  FitConfig fit;

  // [simulate]
  bool has_simulate = false;
  std::vector<std::string> families;
  std::vector<double> alphas;
  std::vector<int> sim_attempt_caps;
  std::vector<std::int64_t> sim_list_sizes;
  double pr1 = 0.5;
  int reps = 300;
  std::uint64_t sim_seed = 1;
  bool joint_fit = false;

  // [calibration]: (covariate value, known population proportion)
  std::vector<std::pair<std::string, double>> calibration;

  // [bootstrap]
  std::optional<int> bootstrap_replications;
  std::uint64_t bootstrap_seed = 1;

  // [output]
  std::string format = "csv";
  std::optional<std::string> out_path;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline double parse_double(const std::string& token, int line, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(token, &pos);
    if (pos != token.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("value of '" + key + "' is not a number: '" + token + "'", line);
  }
}

inline std::int64_t parse_int(const std::string& token, int line, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(token, &pos);
    if (pos != token.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("value of '" + key + "' is not an integer: '" + token + "'", line);
  }
}

inline std::uint64_t parse_u64(const std::string& token, int line, const std::string& key) {
  try {
    std::size_t pos = 0;
    if (!token.empty() && token[0] == '-') throw std::invalid_argument("negative");
    const unsigned long long v = std::stoull(token, &pos);
    if (pos != token.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("value of '" + key + "' is not a non-negative integer: '" + token + "'",
                      line);
  }
}

inline bool parse_bool(const std::string& token, int line, const std::string& key) {
  if (token == "true" || token == "1") return true;
  if (token == "false" || token == "0") return false;
  throw ConfigError("value of '" + key + "' must be true/false/1/0: '" + token + "'", line);
}

// Lists accept comma and/or whitespace separators.
inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string token;
  for (const char c : value) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else {
      token.push_back(c);
    }
  }
  if (!token.empty()) out.push_back(token);
  return out;
}

}  // namespace config_detail

inline RunConfig parse_config(std::istream& in) {
  using config_detail::parse_bool;
  using config_detail::parse_double;
  using config_detail::parse_int;
  using config_detail::parse_u64;
  using config_detail::split_list;
  using config_detail::trim;

  RunConfig rc;
  std::string section;
  std::set<std::string> seen;  // "section.key" duplicates are rejected
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError("unterminated section header", line);
      section = trim(text.substr(1, text.size() - 2));
      static const std::set<std::string> known = {"kernel",      "population", "fit",
                                                  "simulate",    "calibration", "bootstrap",
                                                  "output"};
      if (known.find(section) == known.end())
        throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line);
    if (value.empty()) throw ConfigError("empty value for '" + key + "'", line);
    if (section.empty()) throw ConfigError("key '" + key + "' appears before any section", line);
    if (!seen.insert(section + "." + key).second)
      throw ConfigError("duplicate key '" + key + "' in [" + section + "]", line);

    if (section == "kernel") {
      if (key == "variant") {
        if (value != "truncated_geometric" && value != "shifted_binomial")
          throw ConfigError("variant must be truncated_geometric or shifted_binomial", line);
        rc.kernel_variant = value;
      } else if (key == "attempt_cap") {
        rc.attempt_cap = static_cast<int>(parse_int(value, line, key));
      } else if (key == "extra_draws") {
        rc.extra_draws = static_cast<int>(parse_int(value, line, key));
      } else if (key == "grid_start") {
        rc.grid_start = parse_double(value, line, key);
      } else if (key == "grid_step") {
        rc.grid_step = parse_double(value, line, key);
      } else if (key == "grid_end") {
        rc.grid_end = parse_double(value, line, key);
      } else if (key == "parametrization") {
        if (value != "per_attempt" && value != "overall")
          throw ConfigError("parametrization must be per_attempt or overall", line);
        rc.parametrization = value;
        rc.parametrization_set = true;
      } else {
        throw ConfigError("unknown key '" + key + "' in [kernel]", line);
      }
    } else if (section == "population") {
      if (key == "N") {
        rc.population_size = parse_int(value, line, key);
      } else if (key == "I") {
        rc.list_size = parse_int(value, line, key);
      } else {
        throw ConfigError("unknown key '" + key + "' in [population]", line);
      }
    } else if (section == "fit") {
      if (key == "method") {
        if (value == "moments")
          rc.fit.method = FitMethod::Moments;
        else if (value == "mle")
          rc.fit.method = FitMethod::Mle;
        else
          throw ConfigError("method must be moments or mle", line);
      } else if (key == "covariance_model") {
        if (value == "exchangeable_draws")
          rc.fit.covariance_model = CovarianceModel::ExchangeableDraws;
        else if (value == "fixed_composition")
          rc.fit.covariance_model = CovarianceModel::FixedComposition;
        else
          throw ConfigError("covariance_model must be exchangeable_draws or fixed_composition",
                            line);
      } else if (key == "mle_iterations") {
        const std::int64_t v = parse_int(value, line, key);
        if (v < 1) throw ConfigError("mle_iterations must be at least 1", line);
        rc.fit.mle_iterations = static_cast<int>(v);
      } else if (key == "report_threshold") {
        rc.fit.report_threshold = parse_double(value, line, key);
      } else {
        throw ConfigError("unknown key '" + key + "' in [fit]", line);
      }
    } else if (section == "simulate") {
      rc.has_simulate = true;
      if (key == "families") {
        rc.families = split_list(value);
        for (const std::string& f : rc.families)
          if (f != "2points" && f != "unif" && f != "norm")
            throw ConfigError("unknown family '" + f + "' (expected 2points, unif, norm)", line);
      } else if (key == "alphas") {
        for (const std::string& t : split_list(value))
          rc.alphas.push_back(parse_double(t, line, key));
      } else if (key == "attempt_caps") {
        for (const std::string& t : split_list(value))
          rc.sim_attempt_caps.push_back(static_cast<int>(parse_int(t, line, key)));
      } else if (key == "list_sizes") {
        for (const std::string& t : split_list(value))
          rc.sim_list_sizes.push_back(parse_int(t, line, key));
      } else if (key == "pr1") {
        rc.pr1 = parse_double(value, line, key);
      } else if (key == "reps") {
        rc.reps = static_cast<int>(parse_int(value, line, key));
      } else if (key == "seed") {
        rc.sim_seed = parse_u64(value, line, key);
      } else if (key == "joint_fit") {
        rc.joint_fit = parse_bool(value, line, key);
      } else {
        throw ConfigError("unknown key '" + key + "' in [simulate]", line);
      }
    } else if (section == "calibration") {
      // Keys are covariate values; the value is that class's known
      // population proportion.
      const double p = parse_double(value, line, key);
      if (!(p > 0.0) || !(p < 1.0))
        throw ConfigError("calibration proportion must lie strictly between 0 and 1", line);
      rc.calibration.emplace_back(key, p);
    } else if (section == "bootstrap") {
      if (key == "replications") {
        const std::int64_t v = parse_int(value, line, key);
        if (v < 1) throw ConfigError("replications must be positive", line);
        rc.bootstrap_replications = static_cast<int>(v);
      } else if (key == "seed") {
        rc.bootstrap_seed = parse_u64(value, line, key);
      } else {
        throw ConfigError("unknown key '" + key + "' in [bootstrap]", line);
      }
    } else if (section == "output") {
      if (key == "format") {
        if (value != "csv" && value != "text")
          throw ConfigError("format must be csv or text", line);
        rc.format = value;
      } else if (key == "path") {
        rc.out_path = value;
      } else {
        throw ConfigError("unknown key '" + key + "' in [output]", line);
      }
    }
  }
  return rc;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config(in);
}

// Observation model from the [kernel] section.
inline ObservationKernel make_kernel(const RunConfig& rc) {
  if (rc.kernel_variant == "truncated_geometric") {
    TruncatedGeometric tg;
    if (rc.attempt_cap < 2) throw ConfigError("attempt_cap must be at least 2");
    tg.attempt_cap = rc.attempt_cap;
    tg.parametrization = rc.parametrization == "overall" ? Parametrization::Overall
                                                         : Parametrization::PerAttempt;
    return tg;
  }
  if (rc.parametrization_set && rc.parametrization != "overall")
    throw ConfigError("the shifted_binomial model is always parametrized by overall "
                      "response probabilities");
  if (rc.extra_draws < 1) throw ConfigError("extra_draws must be at least 1");
  return ShiftedBinomial{rc.extra_draws};
}

// Grid from the [kernel] section; the model's default when unspecified.
inline Grid make_grid(const RunConfig& rc, const ObservationKernel& kernel) {
  const int given = static_cast<int>(rc.grid_start.has_value()) +
                    static_cast<int>(rc.grid_step.has_value()) +
                    static_cast<int>(rc.grid_end.has_value());
  if (given == 0) return default_grid(kernel);
  if (given != 3)
    throw ConfigError("grid_start, grid_step, and grid_end must be given together");
  try {
    return Grid::linspace(*rc.grid_start, *rc.grid_step, *rc.grid_end);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid grid: ") + e.what());
  }
}

}  // namespace deconvht

#endif  // DECONVHT_CONFIG_HPP
