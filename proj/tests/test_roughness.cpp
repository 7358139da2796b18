#include "doctest.h"

#include "edich/roughness.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace edich;
using Mat = Eigen::MatrixXd;

static Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

static ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an edich::Error");
  return ErrorCode::ConfigError;
}

static DichotomyReport<double> report_with(SideConstants<double> s, SideConstants<double> u) {
  DichotomyReport<double> r;
  r.verdict = Verdict::dichotomic;
  r.constants = DichotomyConstants<double>{s, u};
  return r;
}

TEST_CASE("threshold examples") {
  CHECK(threshold(report_with({1, 1, false}, {1, 1, false})) == 0.5);
  CHECK(threshold(report_with({2, 1, false}, {1, 1, true})) == 0.5);
  CHECK(threshold(report_with({2, 2, false}, {1, 2, false})) == doctest::Approx(2 * threshold(report_with({2, 1, false}, {1, 1, false}))));
  DichotomyReport<double> none;
  none.verdict = Verdict::inconclusive;
  CHECK(code_of([&] { threshold(none); }) == ErrorCode::NotDichotomic);
}

TEST_CASE("neumann bound examples") {
  CHECK(neumann_bound(2.0, 0.25) == 4.0);
  CHECK(neumann_bound(2.0, 0.0) == 2.0);
  CHECK(code_of([] { neumann_bound(2.0, 0.5); }) == ErrorCode::NotAdmissible);
}

TEST_CASE("neumann bound is monotone and diverges at the critical value") {
  const double l = 2.0;
  double prev = neumann_bound(l, 0.0);
  for (int i = 1; i < 50; ++i) {
    const double b = 0.5 * i / 50.0;
    const double v = neumann_bound(l, b);
    CHECK(v > prev);
    prev = v;
  }
  CHECK(neumann_bound(l, 0.9 * 0.5) == doctest::Approx(20.0));
  CHECK(neumann_bound(l, 0.99 * 0.5) == doctest::Approx(200.0));
  CHECK(neumann_bound(l, 0.999 * 0.5) == doctest::Approx(2000.0));
}

TEST_CASE("perturb_and_verify examples on diag(-1, 1)") {
  const auto sys = builtin<double>("const_diag");
  const auto grid = make_grid(-8.0, 8.0, 0.01);
  const auto base = certify_base(sys, grid);
  REQUIRE(base.certification.report.dichotomic());

  SUBCASE("diagonal perturbation keeps P") {
    const auto b = PerturbationSpec<double>::constant(0.4 * mat2(1, 0, 0, -1), grid);
    const auto r = perturb_and_verify(base, b);
    CHECK(r.b_norm == doctest::Approx(0.4));
    CHECK(r.threshold == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.admissible);
    CHECK(r.perturbed.dichotomic());
    CHECK(oracle::opnorm(r.perturbed.P - mat2(1, 0, 0, 0)) <= 1e-6);
    REQUIRE(r.perturbed_inv_bound);
    CHECK(*r.perturbed_inv_bound >= r.original.constants->inverse_bound());
    CHECK(r.constants_traceable);
  }
  SUBCASE("zero perturbation reproduces the original report") {
    const auto r = perturb_and_verify(base, PerturbationSpec<double>::constant(Mat::Zero(2, 2), grid));
    CHECK(r.b_norm == 0.0);
    CHECK(oracle::opnorm(r.perturbed.P - r.original.P) <= 1e-9);
    CHECK(r.perturbed.constants->stable.N == doctest::Approx(r.original.constants->stable.N).epsilon(1e-9));
    CHECK(r.perturbed.constants->stable.nu == doctest::Approx(r.original.constants->stable.nu).epsilon(1e-9));
    CHECK(*r.perturbed_inv_bound == r.original.constants->inverse_bound());
  }
  SUBCASE("off-diagonal perturbation matches the spectral projector") {
    const Mat bm = 0.45 * mat2(0, 1, 1, 0);
    const auto r = perturb_and_verify(base, PerturbationSpec<double>::constant(bm, grid));
    CHECK(r.admissible);
    CHECK(r.perturbed.dichotomic());
    const Mat expected = oracle::stable_projector_eig(Mat(mat2(-1, 0, 0, 1) + bm));
    CHECK(oracle::opnorm(r.perturbed.P - expected) <= 1e-5);
  }
  SUBCASE("beyond the threshold") {
    const auto r = perturb_and_verify(base, PerturbationSpec<double>::constant(0.6 * mat2(1, 0, 0, -1), grid));
    CHECK_FALSE(r.admissible);
    CHECK_FALSE(r.perturbed_inv_bound);
    CHECK_FALSE(r.certified);
  }
}

TEST_CASE("non-dichotomic base systems are rejected") {
  const auto grid = make_grid(-8.0, 8.0, 0.05);
  const auto b = PerturbationSpec<double>::constant(Mat::Zero(2, 2), grid);
  CHECK(code_of([&] { perturb_and_verify(builtin<double>("no_dichotomy_shear"), b, grid); }) ==
        ErrorCode::NotDichotomic);
}

TEST_CASE("admissible means b_norm strictly below the threshold") {
  const auto grid = make_grid(-8.0, 8.0, 0.01);
  const auto base = certify_base(builtin<double>("const_diag"), grid);
  const double th = threshold(base.certification.report);
  const Mat dir = mat2(1, 0, 0, -1);
  for (double scale : {0.5, 0.999, 1.0, 1.2}) {
    CAPTURE(scale);
    const auto r = perturb_and_verify(base, PerturbationSpec<double>::constant(scale * th * dir, grid));
    CHECK(r.admissible == (r.b_norm < r.threshold));
  }
}

TEST_CASE("certified constants are reproducible from the stored inputs") {
  const auto grid = make_grid(-8.0, 8.0, 0.01);
  const auto base = certify_base(builtin<double>("const_full"), grid);
  std::mt19937_64 rng(3);
  const auto b = random_perturbation<double>(2, grid, 0.2, rng);
  const auto r = perturb_and_verify(base, b);
  REQUIRE(r.certified);
  const auto again = decay_constants(perturbed_growth(r.growth, r.b_norm),
                                     neumann_bound(r.original.constants->inverse_bound(), r.b_norm));
  CHECK(again.C == r.certified->C);
  CHECK(again.N_step == r.certified->N_step);
  CHECK(again.rate == r.certified->rate);
  CHECK(again.C_decay == r.certified->C_decay);
  CHECK(perturbed_growth(r.growth, r.b_norm).beta == r.growth.beta + r.growth.alpha * r.b_norm);
}

TEST_CASE("sweep examples") {
  const auto sys = builtin<double>("const_diag");
  const auto grid = make_grid(-8.0, 8.0, 0.01);
  std::mt19937_64 rng(1);
  const auto dir = random_perturbation<double>(2, grid, 1.0, rng);
  const auto base = certify_base(sys, grid);
  const double th = threshold(base.certification.report);
  REQUIRE(th == doctest::Approx(0.5).epsilon(1e-6));

  const auto rows = sweep(base, dir, std::vector<double>{0.1, 0.3, 0.49});
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CAPTURE(row.amplitude);
    CHECK_FALSE(row.error);
    REQUIRE(row.report);
    CHECK(row.report->admissible);
    CHECK(row.report->perturbed.dichotomic());
  }
  const auto beyond = sweep(base, dir, std::vector<double>{0.6, 1.5});
  REQUIRE(beyond.size() == 2);
  for (const auto& row : beyond) {
    if (row.report) CHECK_FALSE(row.report->admissible);
  }
  CHECK(sweep(sys, dir, std::vector<double>{}, grid).empty());
  CHECK(code_of([&] { sweep(base, dir.scaled(2.0), std::vector<double>{0.1}); }) == ErrorCode::InvalidParameter);
}

TEST_CASE("random perturbations are reproducible and normalized") {
  const auto grid = make_grid(-8.0, 8.0, 0.05);
  std::mt19937_64 a(42), b(42);
  const auto pa = random_perturbation<double>(3, grid, 0.3, a);
  const auto pb = random_perturbation<double>(3, grid, 0.3, b);
  CHECK(pa.sup_norm() == doctest::Approx(0.3).epsilon(1e-12));
  for (double t : {-7.0, 0.0, 2.5}) CHECK((pa(t) - pb(t)).norm() == 0.0);
  CHECK((pa(0.0) - pa(3.0)).norm() > 0);
}

TEST_CASE("admissible random perturbations stay dichotomic") {
  const auto grid = make_grid(-8.0, 8.0, 0.01);
  for (const std::string name : {"const_diag", "const_full", "rotating_hyperbolic"}) {
    CAPTURE(name);
    const auto base = certify_base(builtin<double>(name), grid);
    const double th = threshold(base.certification.report);
    std::mt19937_64 rng(0x5EED);
    std::uniform_real_distribution<double> frac(0.1, 0.9);
    for (int i = 0; i < 5; ++i) {
      const auto b = random_perturbation<double>(2, grid, frac(rng) * th, rng);
      const auto r = perturb_and_verify(base, b);
      CHECK(r.admissible);
      CHECK(r.perturbed.dichotomic());
    }
  }
}
