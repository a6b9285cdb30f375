#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "deconvht/estimators.hpp"
#include "deconvht/rng.hpp"

using namespace deconvht;

namespace {

DiscreteMixture point_mass(double s) {
  Eigen::VectorXd w(1);
  w << 1.0;
  return DiscreteMixture({s}, w);
}

KernelMatrix two_col_kernel() {
  return build_kernel_matrix(Grid({0.5, 1.0}), TruncatedGeometric{2});
}

}  // namespace

TEST_CASE("population frame") {
  PopulationFrame frame(2000.0, 1000.0);
  CHECK(frame.inflation() == 2.0);
  CHECK_THROWS_AS(PopulationFrame(10.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(PopulationFrame(10.0, 20.0), std::invalid_argument);
}

TEST_CASE("known-probability total") {
  PopulationFrame census(10.0, 10.0);
  CHECK(ht_oracle_total(std::vector<double>(10, 1.0), census) == 10.0);

  PopulationFrame half(2.0, 1.0);
  CHECK(ht_oracle_total({0.5, 0.5}, half) == 8.0);
  CHECK(ht_oracle_total({}, half) == 0.0);
  CHECK_THROWS_AS(ht_oracle_total({0.5, 0.0}, half), std::domain_error);
  CHECK_THROWS_AS(ht_oracle_total({1.5}, half), std::domain_error);
}

TEST_CASE("mixture-inflated total") {
  PopulationFrame half(2.0, 1.0);
  CHECK(mht_total(point_mass(1.0), 50.0, half) == 100.0);

  PopulationFrame unit(5000.0, 5000.0);
  CHECK(mht_total(point_mass(0.5), 50.0, unit) == 100.0);
  CHECK(mht_total(point_mass(0.5), 0.0, half) == 0.0);
  CHECK_THROWS_AS(mht_total(point_mass(0.5), -1.0, half), std::invalid_argument);

  Eigen::VectorXd w(2);
  w << 0.5, 0.5;
  DiscreteMixture mix({0.5, 1.0}, w);
  PopulationFrame frame(9000.0, 3000.0);
  CHECK(mht_total(mix, 77.0, frame) == frame.inflation() * 77.0 * expected_inverse(mix));
}

TEST_CASE("inflated-share proportions") {
  SECTION("identical mixtures reduce to responder shares") {
    Eigen::VectorXd w(2);
    w << 0.3, 0.7;
    DiscreteMixture mix({0.4, 0.8}, w);
    std::vector<GroupFit> fits;
    fits.push_back({421.0, mix});
    fits.push_back({503.0, mix});
    const std::vector<double> mht = mht_proportions(fits);
    const std::vector<double> naive = naive_proportions({421.0, 503.0});
    CHECK(mht[0] == Catch::Approx(naive[0]).epsilon(1e-14));
    CHECK(mht[1] == Catch::Approx(naive[1]).epsilon(1e-14));
    CHECK(mht[0] + mht[1] == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("inflation shifts the shares") {
    std::vector<GroupFit> fits;
    fits.push_back({100.0, point_mass(0.5)});  // E[1/S] = 2
    fits.push_back({100.0, point_mass(1.0)});  // E[1/S] = 1
    const std::vector<double> p = mht_proportions(fits);
    CHECK(p[0] == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SECTION("empty groups") {
    std::vector<GroupFit> fits;
    fits.push_back({40.0, point_mass(0.5)});
    fits.push_back({0.0, std::nullopt});
    const std::vector<double> p = mht_proportions(fits);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);

    std::vector<GroupFit> all_empty(2);
    CHECK_THROWS_AS(mht_proportions(all_empty), EmptySampleError);

    std::vector<GroupFit> missing;
    missing.push_back({40.0, std::nullopt});
    CHECK_THROWS_AS(mht_proportions(missing), std::invalid_argument);
  }
}

TEST_CASE("responder shares") {
  const std::vector<double> p = naive_proportions({421.0, 503.0});
  CHECK(p[0] == Catch::Approx(0.4556).margin(5e-5));
  CHECK(naive_proportions({1.0, 0.0})[0] == 1.0);
  CHECK(naive_proportions({5.0, 5.0})[0] == 0.5);
  CHECK_THROWS_AS(naive_proportions({0.0, 0.0}), EmptySampleError);
  CHECK_THROWS_AS(naive_proportions({-1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("degenerate bootstrap is exactly zero") {
  TruncatedGeometric tg;
  tg.attempt_cap = 4;
  KernelMatrix k = build_kernel_matrix(default_grid(tg), tg);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(k.cols());
  w[k.cols() - 1] = 1.0;  // all mass on certain response
  DiscreteMixture g_hat(k.p_star(), w);
  PopulationFrame frame(2000.0, 1000.0);

  BootstrapMseResult r = bootstrap_mse_term(g_hat, 50, frame, k, 8, 4242, FitConfig{});
  CHECK(r.mse_term == 0.0);
  CHECK(r.failed_replications == 0);
  CHECK(r.replications == 8);
}

TEST_CASE("single replication equals its squared deviation") {
  KernelMatrix k = two_col_kernel();
  Eigen::VectorXd w(2);
  w << 0.6, 0.4;
  DiscreteMixture g_hat(k.p_star(), w);
  PopulationFrame frame(2000.0, 1000.0);
  const std::int64_t m = 40;
  const std::uint64_t seed = 777;

  // Replay the documented RNG contract: substream (seed, 0), two uniforms
  // per responder, support draw first.
  Rng rng(seed, 0);
  std::vector<std::int64_t> cells(2, 0);
  for (int item = 0; item < m; ++item) {
    const double u_support = rng.uniform01();
    const Eigen::Index col = (u_support < 0.6) ? 0 : 1;
    const double u_y = rng.uniform01();
    Eigen::Index y = 1;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < 2; ++j) {
      acc += k.matrix()(j, col);
      if (u_y < acc) {
        y = j;
        break;
      }
    }
    ++cells[static_cast<std::size_t>(y)];
  }
  const FitResult refit = fit_moments(CountVector{cells}, k);
  const double center = mht_total(g_hat, static_cast<double>(m), frame);
  const double dev = mht_total(*refit.mixture, static_cast<double>(m), frame) - center;

  BootstrapMseResult r = bootstrap_mse_term(g_hat, m, frame, k, 1, seed, FitConfig{});
  CHECK(r.mse_term == dev * dev);
}

TEST_CASE("bootstrap is deterministic and validates inputs") {
  KernelMatrix k = two_col_kernel();
  Eigen::VectorXd w(2);
  w << 0.5, 0.5;
  DiscreteMixture g_hat(k.p_star(), w);
  PopulationFrame frame(2000.0, 1000.0);

  BootstrapMseResult a = bootstrap_mse_term(g_hat, 30, frame, k, 5, 99, FitConfig{});
  BootstrapMseResult b = bootstrap_mse_term(g_hat, 30, frame, k, 5, 99, FitConfig{});
  CHECK(a.mse_term == b.mse_term);

  BootstrapMseResult c = bootstrap_mse_term(g_hat, 30, frame, k, 5, 100, FitConfig{});
  CHECK(a.mse_term != c.mse_term);

  CHECK_THROWS_AS(bootstrap_mse_term(g_hat, 30, frame, k, 0, 99, FitConfig{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(bootstrap_mse_term(g_hat, 0, frame, k, 5, 99, FitConfig{}),
                  std::invalid_argument);

  DiscreteMixture wrong_support({0.5, 1.0}, w);  // grid scale, not response scale
  CHECK_THROWS_AS(bootstrap_mse_term(wrong_support, 30, frame, k, 5, 99, FitConfig{}),
                  std::invalid_argument);
}
