#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csigpt/budget.hpp"
#include "csigpt/core.hpp"

#include <cmath>
#include <random>

using namespace csigpt::budget;

namespace {

constexpr std::uint64_t kFullScaleD = 3617280;
constexpr std::uint64_t kFullScaleTotal = 32623524;

}  // namespace

TEST_CASE("federated uplink overhead") {
  CHECK(fl_uplink_overhead(0, kFullScaleD) == 0);
  CHECK(fl_uplink_overhead(1, kFullScaleD) == 3617280);
  CHECK(fl_uplink_overhead(100, kFullScaleD) == 361728000);
}

TEST_CASE("centralized sample budget") {
  CHECK(cl_sample_cost(256, 256) == 131072);
  // 361728000 / 131072 = 2759.765...
  CHECK(cl_samples_for_budget(100, kFullScaleD, 256, 256) == 2759);
  CHECK(cl_samples_for_budget(1, 1000, 256, 256) == 0);
  CHECK(cl_samples_for_budget(0, kFullScaleD, 256, 256) == 0);
  CHECK_THROWS(cl_samples_for_budget(1, 1, 0, 256));
}

TEST_CASE("federated compute time") {
  CHECK(fl_compute_time(0, 10, 2, 2.6e9, 2.6e12) == 0.0);
  CHECK(fl_compute_time(100, 10, 2, 2.6e9, 2.6e12) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(fl_compute_time(100, 10, 4, 2.6e9, 2.6e12) == doctest::Approx(2.0 * fl_compute_time(100, 10, 2, 2.6e9, 2.6e12)));
  CHECK_THROWS(fl_compute_time(1, 1, 1, 1.0, 0.0));
}

TEST_CASE("centralized epochs under matched compute time") {
  const double kappa_bs = 16 * 2.6e12;
  CHECK(kappa_bs == doctest::Approx(41.6e12));
  CHECK(cl_epochs_exact(2.0, kappa_bs, 2759, 3.4e9) == doctest::Approx(83.2e12 / (2759 * 3.4e9)));
  CHECK(cl_epochs_for_time(2.0, kappa_bs, 2759, 3.4e9) == 8);
  CHECK(cl_epochs_for_time(0.0, kappa_bs, 2759, 3.4e9) == 0);
  CHECK(cl_epochs_exact(2.0, 2 * kappa_bs, 2759, 3.4e9) ==
        doctest::Approx(2 * cl_epochs_exact(2.0, kappa_bs, 2759, 3.4e9)));
  // Exact integer results survive floating-point rounding.
  CHECK(cl_epochs_for_time(0.3, 10.0, 1, 1.0) == 3);
  CHECK(cl_epochs_for_time(0.7, 10.0, 1, 1.0) == 7);

  BudgetLedger ledger;
  CHECK(cl_epochs_for_time(2.0, kappa_bs, 0, 3.4e9, &ledger) == 0);
  CHECK(ledger.warnings().size() == 1);
}

TEST_CASE("trainable fraction") {
  CHECK(trainable_fraction(10, 10) == 1.0);
  CHECK(trainable_fraction(0, 10) == 0.0);
  const double f = trainable_fraction(kFullScaleD, kFullScaleTotal);
  CHECK(std::abs(f - 0.1109) <= 1e-4);
  CHECK(f == doctest::Approx(0.110880).epsilon(1e-5));
}

TEST_CASE("formulas agree with independent integer arithmetic") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    std::uint64_t t0 = rng() % 500, d = 1 + rng() % 5000000, p = 1 + rng() % 512, n = 1 + rng() % 512;
    std::uint64_t budget = t0 * d;
    std::uint64_t expect = 0;
    // Repeated subtraction in chunks as an independent floor division.
    std::uint64_t per = 2 * p * n, rest = budget;
    for (std::uint64_t chunk = per << 20; chunk >= per; chunk >>= 1) {
      std::uint64_t k = chunk / per;
      while (rest >= chunk) {
        rest -= chunk;
        expect += k;
      }
      if (chunk == per) break;
    }
    CHECK(cl_samples_for_budget(t0, d, p, n) == expect);
  }
}

TEST_CASE("ledger totals are additive and order independent") {
  BudgetLedger a, b;
  a.add("round 1", 100, 0.5);
  a.add("round 2", 250, 0.25);
  a.add("collect", 7, 0.0);
  b.add("collect", 7, 0.0);
  b.add("round 2", 250, 0.25);
  b.add("round 1", 100, 0.5);
  CHECK(a.uplink_reals_cum() == 357);
  CHECK(a.uplink_reals_cum() == b.uplink_reals_cum());
  CHECK(a.wall_model_seconds() == b.wall_model_seconds());
  std::uint64_t sum = 0;
  for (const auto& e : a.entries()) sum += e.uplink_reals;
  CHECK(sum == a.uplink_reals_cum());
}

TEST_CASE("budget point at full scale") {
  CostModel m;
  m.d = kFullScaleD;
  m.total_params = kFullScaleTotal;
  m.gamma = 16.0;
  BudgetPoint p = evaluate_budget(m, 100);
  CHECK(p.fl_uplink == 361728000);
  CHECK(p.cl_sample_cost == 131072);
  CHECK(p.n_cl == 2759);
  CHECK(p.cl_uplink == 2759 * 131072);
  CHECK(p.tau == doctest::Approx(2.0));
  CHECK(p.k_cl == 8);
  CHECK(p.warnings.empty());
  m.total_params = 0;
  CHECK_THROWS_AS(evaluate_budget(m, 100), csigpt::ConfigError);
}
