#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "deconvht/config.hpp"
#include "deconvht/io.hpp"

using namespace deconvht;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

int error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_config(in);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const std::filesystem::path p = std::filesystem::temp_directory_path() / name;
  std::ofstream out(p, std::ios::trunc);
  out << content;
  return p;
}

}  // namespace

TEST_CASE("a full configuration parses into every field") {
  const RunConfig rc = parse(
      "# comment line\n"
      "[kernel]\n"
      "variant = shifted_binomial\n"
      "extra_draws = 3\n"
      "grid_start = 0.1\n"
      "grid_step = 0.01\n"
      "grid_end = 1.0\n"
      "\n"
      "[population]\n"
      "N = 120000\n"
      "I = 8000\n"
      "\n"
      "[fit]\n"
      "method = mle\n"
      "covariance_model = fixed_composition\n"
      "mle_iterations = 3\n"
      "report_threshold = 1e-6\n"
      "\n"
      "[simulate]\n"
      "families = 2points, unif norm\n"
      "alphas = 0.3,0.4\n"
      "attempt_caps = 4 5 6 7\n"
      "list_sizes = 1000, 10000\n"
      "pr1 = 0.5\n"
      "reps = 300\n"
      "seed = 42\n"
      "joint_fit = true\n"
      "\n"
      "[calibration]\n"
      "a = 0.25\n"
      "b = 0.75\n"
      "\n"
      "[bootstrap]\n"
      "replications = 200\n"
      "seed = 7\n"
      "\n"
      "[output]\n"
      "format = text\n"
      "path = out.txt\n");
  CHECK(rc.kernel_variant == "shifted_binomial");
  CHECK(rc.extra_draws == 3);
  CHECK(rc.grid_start == 0.1);
  CHECK(rc.grid_step == 0.01);
  CHECK(rc.grid_end == 1.0);
  REQUIRE(rc.population_size.has_value());
  CHECK(*rc.population_size == 120000);
  CHECK(*rc.list_size == 8000);
  CHECK(rc.fit.method == FitMethod::Mle);
  CHECK(rc.fit.covariance_model == CovarianceModel::FixedComposition);
  CHECK(rc.fit.mle_iterations == 3);
  CHECK(rc.fit.report_threshold == 1e-6);
  CHECK(rc.has_simulate);
  CHECK(rc.families == std::vector<std::string>{"2points", "unif", "norm"});
  CHECK(rc.alphas == std::vector<double>{0.3, 0.4});
  CHECK(rc.sim_attempt_caps == std::vector<int>{4, 5, 6, 7});
  CHECK(rc.sim_list_sizes == std::vector<std::int64_t>{1000, 10000});
  CHECK(rc.reps == 300);
  CHECK(rc.sim_seed == 42);
  CHECK(rc.joint_fit);
  REQUIRE(rc.calibration.size() == 2);
  CHECK(rc.calibration[0].first == "a");
  CHECK(rc.calibration[0].second == 0.25);
  REQUIRE(rc.bootstrap_replications.has_value());
  CHECK(*rc.bootstrap_replications == 200);
  CHECK(rc.bootstrap_seed == 7);
  CHECK(rc.format == "text");
  CHECK(*rc.out_path == "out.txt");
}

TEST_CASE("defaults survive an empty configuration") {
  const RunConfig rc = parse("");
  CHECK(rc.kernel_variant == "truncated_geometric");
  CHECK(rc.attempt_cap == 4);
  CHECK(rc.fit.method == FitMethod::Moments);
  CHECK_FALSE(rc.has_simulate);
  CHECK_FALSE(rc.population_size.has_value());
  CHECK_FALSE(rc.out_path.has_value());
  CHECK(rc.format == "csv");
}

TEST_CASE("configuration errors carry the offending line number") {
  CHECK(error_line("[nosuch]\n") == 1);
  CHECK(error_line("[kernel]\nwhatever = 3\n") == 2);
  CHECK(error_line("[kernel]\nattempt_cap = four\n") == 2);
  CHECK(error_line("[kernel]\n\nattempt_cap = 4\nattempt_cap = 5\n") == 4);
  CHECK(error_line("attempt_cap = 4\n") == 1);  // key before any section
  CHECK(error_line("[kernel]\nattempt_cap\n") == 2);  // missing '='
  CHECK(error_line("[kernel]\nattempt_cap =\n") == 2);  // empty value
  CHECK(error_line("[kernel\n") == 1);  // unterminated header
  CHECK(error_line("[simulate]\nfamilies = 2points, beta\n") == 2);
  CHECK(error_line("[simulate]\njoint_fit = maybe\n") == 2);
  CHECK(error_line("[fit]\nmethod = huber\n") == 2);
  CHECK(error_line("[fit]\nmle_iterations = 0\n") == 2);
  CHECK(error_line("[bootstrap]\nreplications = 0\n") == 2);
  CHECK(error_line("[bootstrap]\nseed = -3\n") == 2);
  CHECK(error_line("[calibration]\nmales = 1.5\n") == 2);
  CHECK(error_line("[output]\nformat = yaml\n") == 2);
}

TEST_CASE("kernel construction honors the configured variant") {
  RunConfig rc = parse("[kernel]\nvariant = truncated_geometric\nattempt_cap = 6\n");
  ObservationKernel k = make_kernel(rc);
  REQUIRE(std::holds_alternative<TruncatedGeometric>(k));
  CHECK(std::get<TruncatedGeometric>(k).attempt_cap == 6);
  CHECK(std::get<TruncatedGeometric>(k).parametrization == Parametrization::PerAttempt);

  rc = parse("[kernel]\nparametrization = overall\n");
  k = make_kernel(rc);
  CHECK(std::get<TruncatedGeometric>(k).parametrization == Parametrization::Overall);

  rc = parse("[kernel]\nvariant = shifted_binomial\nextra_draws = 5\n");
  k = make_kernel(rc);
  REQUIRE(std::holds_alternative<ShiftedBinomial>(k));
  CHECK(std::get<ShiftedBinomial>(k).extra_draws == 5);

  CHECK_THROWS_AS(make_kernel(parse("[kernel]\nattempt_cap = 1\n")), ConfigError);
  CHECK_THROWS_AS(
      make_kernel(parse("[kernel]\nvariant = shifted_binomial\nparametrization = per_attempt\n")),
      ConfigError);
  CHECK_THROWS_AS(make_kernel(parse("[kernel]\nvariant = shifted_binomial\nextra_draws = 0\n")),
                  ConfigError);
}

TEST_CASE("grid construction uses explicit bounds or the model default") {
  const ObservationKernel tg = TruncatedGeometric{4};
  Grid g = make_grid(parse(""), tg);
  CHECK(g.size() == 46);  // default per-attempt grid 0.1, 0.12, ..., 1.0
  CHECK(g[0] == Catch::Approx(0.1));
  CHECK(g[45] == Catch::Approx(1.0));

  g = make_grid(parse("[kernel]\ngrid_start = 0.5\ngrid_step = 0.25\ngrid_end = 1.0\n"), tg);
  REQUIRE(g.size() == 3);
  CHECK(g[1] == Catch::Approx(0.75));

  CHECK_THROWS_AS(make_grid(parse("[kernel]\ngrid_start = 0.5\n"), tg), ConfigError);
  CHECK_THROWS_AS(
      make_grid(parse("[kernel]\ngrid_start = 0.9\ngrid_step = 0.02\ngrid_end = 0.5\n"), tg),
      ConfigError);

  const ObservationKernel sb = ShiftedBinomial{3};
  CHECK(make_grid(parse(""), sb).size() == 91);  // overall grid 0.10, 0.11, ..., 1.0
}

TEST_CASE("observation files parse with all header shapes") {
  const auto p1 = temp_file("deconvht_io_basic.csv", "group,y\n1,1\n1,4\n0,2\n");
  ObservationData d = read_observation_csv(p1.string(), 4);
  CHECK(d.records.size() == 3);
  CHECK_FALSE(d.has_w);
  CHECK_FALSE(d.has_history);
  CHECK(d.records[1].y == 4);
  CHECK(d.records[2].group == "0");

  const auto p2 = temp_file("deconvht_io_w.csv", "group,y,w\n1,1,a\n0,2,b\n");
  d = read_observation_csv(p2.string(), 4);
  CHECK(d.has_w);
  CHECK(d.records[0].w == "a");

  const auto p3 =
      temp_file("deconvht_io_full.csv", "group,y,w,history\n1,1,a,0\n1,3,a,1\n0,2,b,false\n");
  d = read_observation_csv(p3.string(), 4);
  CHECK(d.has_w);
  CHECK(d.has_history);
  CHECK_FALSE(d.records[0].history);
  CHECK(d.records[1].history);
  CHECK_FALSE(d.records[2].history);

  const auto p4 = temp_file("deconvht_io_hist.csv", "group,y,history\n1,2,1\n0,1,0\n");
  d = read_observation_csv(p4.string(), 4);
  CHECK_FALSE(d.has_w);
  CHECK(d.has_history);
  CHECK(d.records[0].history);
}

TEST_CASE("observation file errors carry data line numbers") {
  auto line_of = [](const std::string& name, const std::string& content, int max_y) {
    const auto p = temp_file(name, content);
    try {
      read_observation_csv(p.string(), max_y);
    } catch (const DataError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("e1.csv", "y,group\n1,1\n", 4) == 1);          // wrong header
  CHECK(line_of("e2.csv", "group,y,extra\n", 4) == 1);         // unknown column
  CHECK(line_of("e3.csv", "group,y\n1,1\n1\n", 4) == 3);       // missing field
  CHECK(line_of("e4.csv", "group,y\n1,9\n", 4) == 2);          // y above support
  CHECK(line_of("e5.csv", "group,y\n1,0\n", 4) == 2);          // y below support
  CHECK(line_of("e6.csv", "group,y\n1,one\n", 4) == 2);        // not an integer
  CHECK(line_of("e7.csv", "group,y\n,1\n", 4) == 2);           // empty label
  CHECK(line_of("e8.csv", "group,y,history\n1,1,2\n", 4) == 2);  // bad flag
  CHECK_THROWS_AS(read_observation_csv(temp_file("e9.csv", "").string(), 4), DataError);
  CHECK_THROWS_AS(read_observation_csv(temp_file("e10.csv", "group,y\n").string(), 4),
                  DataError);
  CHECK_THROWS_AS(read_observation_csv("/nonexistent/nowhere.csv", 4), DataError);
}

TEST_CASE("seventeen significant digits restore doubles exactly") {
  const std::vector<double> values = {0.1,
                                      1.0 / 3.0,
                                      0.30000000000000004,
                                      1e-300,
                                      123456789.123456789,
                                      -0.4948271578429,
                                      0.0};
  for (const double v : values) {
    const std::string s = fmt17(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
}

TEST_CASE("atomic writes replace the whole file") {
  const auto p = std::filesystem::temp_directory_path() / "deconvht_atomic.txt";
  atomic_write(p.string(), "first version\n");
  atomic_write(p.string(), "second\n");
  std::ifstream in(p);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content == "second\n");
  CHECK_FALSE(std::filesystem::exists(p.string() + ".tmp"));
}

TEST_CASE("csv writing and reading round-trips") {
  const auto p = std::filesystem::temp_directory_path() / "deconvht_roundtrip.csv";
  std::string csv = join_csv_row({"a", "b"});
  csv += join_csv_row({fmt17(0.1), fmt17(2.0 / 3.0)});
  atomic_write(p.string(), csv);
  const auto rows = read_csv(p.string());
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[1].size() == 2);
  CHECK(std::strtod(rows[1][0].c_str(), nullptr) == 0.1);
  CHECK(std::strtod(rows[1][1].c_str(), nullptr) == 2.0 / 3.0);
}

TEST_CASE("text tables align columns") {
  const std::string t = align_table({{"name", "v"}, {"ab", "1.25"}, {"c", "9"}});
  CHECK(t ==
        "name     v\n"
        "ab    1.25\n"
        "c        9\n");
}
