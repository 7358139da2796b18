#include "doctest.h"

#include "edich/green.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace edich;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

static Vec vec2(double a, double b) { return (Vec(2) << a, b).finished(); }

static Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

struct Setup {
  TransitionCache<double> cache;
  DichotomyReport<double> report;
};

static Setup diag_setup(double t, double h) {
  const auto sys = builtin<double>("const_diag");
  return {propagate(sys, make_grid(-t, t, h)), spectral_projector(sys)};
}

static Setup window_setup(const std::string& name, double t, double h) {
  auto c = certify(builtin<double>(name), make_grid(-t, t, h));
  return {std::move(c.cache), std::move(c.report)};
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

TEST_CASE("apply_L examples") {
  const auto grid = make_grid(-1.0, 1.0, 0.01);
  const auto zero = propagate(LinearSystem<double>::constant("zero", Mat::Zero(2, 2)), grid);
  SampledVector<double> c(static_cast<std::size_t>(grid.size()), vec2(3, -2));
  for (const auto& v : apply_L(zero, c)) CHECK(v.norm() <= 1e-12);

  SampledVector<double> lin;
  for (double t : grid.points()) lin.push_back(vec2(t, 0));
  for (const auto& v : apply_L(zero, lin)) CHECK((v - vec2(1, 0)).norm() <= 1e-10);

  const auto diag = propagate(builtin<double>("const_diag"), grid);
  SampledVector<double> decay;
  for (double t : grid.points()) decay.push_back(vec2(std::exp(-t), 0));
  for (const auto& v : apply_L(diag, decay)) CHECK(v.norm() <= 3 * 0.01 * 0.01 * std::exp(1.0));

  const auto tiny = propagate(builtin<double>("const_diag"), make_grid(0.0, 0.5, 0.5));
  CHECK(code_of([&] { apply_L(tiny, SampledVector<double>(2, vec2(0, 0))); }) == ErrorCode::GridTooCoarse);
}

TEST_CASE("green kernel examples") {
  const auto s = diag_setup(4.0, 0.01);
  const Mat g1 = green_kernel(s.cache, s.report, 1.5, 0.5);
  CHECK((g1 - mat2(std::exp(-1.0), 0, 0, 0)).norm() <= 1e-8);
  const Mat g2 = green_kernel(s.cache, s.report, -0.5, 1.0);
  CHECK((g2 - mat2(0, 0, 0, -std::exp(-1.5))).norm() <= 1e-8);
  CHECK((green_kernel(s.cache, s.report, 2.0, 2.0) - s.report.P).norm() <= 1e-12);
  CHECK(code_of([&] { green_kernel(s.cache, s.report, 0.005, 0.0); }) == ErrorCode::OffGrid);
}

TEST_CASE("green kernel obeys the dichotomy estimates") {
  for (const std::string name : {"const_diag", "const_full", "rotating_hyperbolic", "periodic_hyperbolic"}) {
    CAPTURE(name);
    const auto s = window_setup(name, 8.0, 0.01);
    REQUIRE(s.report.dichotomic());
    const auto& c = *s.report.constants;
    const auto& grid = s.cache.grid();
    for (Index k = 400; k <= 1200; k += 40)
      for (Index j = 400; j <= 1200; j += 40) {
        const double t = grid[k], u = grid[j];
        const double norm = oracle::opnorm(green_kernel(s.cache, s.report, t, u));
        const double bound = t >= u ? c.stable.N * std::exp(-c.stable.nu * (t - u))
                                    : c.unstable.N * std::exp(-c.unstable.nu * (u - t));
        CHECK(norm <= bound * (1 + 1e-6));
      }
  }
}

TEST_CASE("green_solve examples on diag(-1, 1)") {
  const auto s = diag_setup(10.0, 0.005);
  SUBCASE("constant forcing") {
    const auto f = ForcingFunction<double>::constant(vec2(1, 1), s.cache.grid());
    const auto sol = green_solve(s.cache, s.report, f);
    CHECK(sol.u_sup / sol.f_sup == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(sol.residual_ok());
    CHECK(sol.bound_margin >= 1 - 1e-6);
    const auto check = check_inverse_bound(sol, s.report);
    CHECK(check.ratio == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(check.bound == doctest::Approx(2.0).epsilon(1e-9));

    const auto w = diag_setup(20.0, 0.005);
    const auto wide = green_solve(w.cache, w.report, ForcingFunction<double>::constant(vec2(1, 1), w.cache.grid()));
    for (Index k = w.cache.grid().index_of(-5.0); k <= w.cache.grid().index_of(5.0); ++k)
      CHECK((wide.u[static_cast<std::size_t>(k)] - vec2(1, -1)).norm() <= 1e-4);
  }
  SUBCASE("zero forcing gives exactly zero") {
    const auto sol = green_solve(s.cache, s.report, ForcingFunction<double>::zero(2, s.cache.grid()));
    for (const auto& v : sol.u) CHECK((v.array() == 0.0).all());
    CHECK(check_inverse_bound(sol, s.report).ratio == 0.0);
  }
  SUBCASE("cosine forcing") {
    const auto w = diag_setup(20.0, 0.005);
    const ForcingFunction<double> f(2, [](double t) { return vec2(std::cos(t), 0); }, w.cache.grid());
    const auto sol = green_solve(w.cache, w.report, f);
    for (Index k = w.cache.grid().index_of(-5.0); k <= w.cache.grid().index_of(5.0); ++k) {
      const double t = w.cache.grid()[k];
      const Vec& u = sol.u[static_cast<std::size_t>(k)];
      CHECK(std::abs(u(0) - (std::cos(t) + std::sin(t)) / 2) <= 1e-4);
      CHECK(std::abs(u(1)) <= 1e-12);
    }
    CHECK(sol.residual_ok());
  }
}

TEST_CASE("forcing sup norm matches a fresh evaluation") {
  const auto grid = make_grid(-3.0, 3.0, 0.01);
  const auto fn = [](double t) { return vec2(std::sin(3 * t), 0.5 * std::cos(t)); };
  const ForcingFunction<double> f(2, fn, grid);
  double sup = 0;
  for (double t : grid.points()) sup = std::max(sup, fn(t).norm());
  CHECK(std::abs(f.sup_norm() - sup) <= 1e-12);
  CHECK(code_of([&] {
          ForcingFunction<double>(2, [](double) { return vec2(std::nan(""), 0); }, grid);
        }) == ErrorCode::InvalidParameter);
}

TEST_CASE("short windows report dominant tails") {
  const auto s = diag_setup(3.0, 0.01);
  const auto f = ForcingFunction<double>::constant(vec2(1, 1), s.cache.grid());
  CHECK(code_of([&] { green_solve(s.cache, s.report, f); }) == ErrorCode::TailDominates);
  const auto d = builtin<double>("const_diag", {{"d", {0.0, 1.0}}});
  const auto cache = propagate(d, make_grid(-10.0, 10.0, 0.01));
  const auto r = spectral_projector(d);
  CHECK(code_of([&] { green_solve(cache, r, ForcingFunction<double>::zero(2, cache.grid())); }) ==
        ErrorCode::NotDichotomic);
}

TEST_CASE("residual is second order") {
  const auto sys = builtin<double>("periodic_hyperbolic");
  const auto run = [&](double h) {
    auto c = certify(sys, make_grid(-12.0, 12.0, h));
    REQUIRE(c.report.dichotomic());
    const ForcingFunction<double> f(2, [](double t) { return vec2(std::cos(t), std::sin(2 * t)); }, c.cache.grid());
    const auto sol = green_solve(c.cache, c.report, f);
    CHECK(sol.residual_ok());
    return sol.residual_sup;
  };
  const double r1 = run(0.02);
  const double r2 = run(0.01);
  CHECK(r1 / r2 >= 3.5);
}

TEST_CASE("green_solve is linear") {
  const auto s = window_setup("rotating_hyperbolic", 10.0, 0.01);
  REQUIRE(s.report.dichotomic());
  const auto& grid = s.cache.grid();
  const ForcingFunction<double> f(2, [](double t) { return vec2(std::sin(t), 1.0); }, grid);
  const ForcingFunction<double> g(2, [](double t) { return vec2(-0.5, std::cos(0.7 * t)); }, grid);
  const ForcingFunction<double> fg(2, [](double t) { return vec2(std::sin(t) - 0.5, 1.0 + std::cos(0.7 * t)); }, grid);
  const auto uf = green_solve(s.cache, s.report, f);
  const auto ug = green_solve(s.cache, s.report, g);
  const auto ufg = green_solve(s.cache, s.report, fg);
  const double tol = 1e-8 * (f.sup_norm() + g.sup_norm());
  for (std::size_t k = 0; k < ufg.u.size(); ++k) CHECK((ufg.u[k] - uf.u[k] - ug.u[k]).norm() <= tol);
}

TEST_CASE("inverse bound holds for random smooth forcings") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), freq(0.1, 2.0), phase(0.0, 6.3);
  for (const std::string name : {"const_diag", "const_full", "rotating_hyperbolic", "periodic_hyperbolic"}) {
    CAPTURE(name);
    const auto s = window_setup(name, 16.0, 0.01);
    REQUIRE(s.report.dichotomic());
    for (int i = 0; i < 12; ++i) {
      const Vec a = vec2(amp(rng), amp(rng)), w = vec2(freq(rng), freq(rng)), p = vec2(phase(rng), phase(rng));
      const ForcingFunction<double> f(2, [&](double t) {
        return vec2(a(0) * std::sin(w(0) * t + p(0)), a(1) * std::cos(w(1) * t + p(1)));
      }, s.cache.grid());
      const auto sol = green_solve(s.cache, s.report, f);
      CHECK_NOTHROW(check_inverse_bound(sol, s.report));
      CHECK(sol.bound_margin >= 1 - 1e-6);
    }
  }
}

TEST_CASE("inflated norms are reported as bound violations") {
  const auto s = diag_setup(10.0, 0.005);
  auto sol = green_solve(s.cache, s.report, ForcingFunction<double>::constant(vec2(1, 1), s.cache.grid()));
  sol.u_sup = 3.0;
  CHECK(code_of([&] { check_inverse_bound(sol, s.report); }) == ErrorCode::BoundViolated);
}

TEST_CASE("splitting examples on diag(-1, 1)") {
  const auto s = diag_setup(8.0, 0.01);
  const auto e1 = split_initial_state(s.cache, s.report, vec2(1, 0));
  CHECK((e1.x1 - vec2(1, 0)).norm() <= 1e-9);
  CHECK(e1.x2.norm() <= 1e-9);
  const auto z = split_initial_state(s.cache, s.report, vec2(0, 0));
  CHECK(z.x1.norm() == 0.0);
  CHECK(z.x2.norm() == 0.0);
  const auto small = propagate(builtin<double>("const_diag"), make_grid(-3.0, 3.0, 0.01));
  CHECK(code_of([&] { split_initial_state(small, s.report, vec2(1, 0)); }) == ErrorCode::InvalidGrid);
}

TEST_CASE("splitting agrees with the projector") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (const std::string name : {"const_diag", "const_full", "rotating_hyperbolic", "periodic_hyperbolic"}) {
    CAPTURE(name);
    const auto s = window_setup(name, 8.0, 0.01);
    REQUIRE(s.report.dichotomic());
    for (int i = 0; i < 5; ++i) {
      const Vec x = vec2(g(rng), g(rng));
      const auto r = split_initial_state(s.cache, s.report, x);
      CHECK((r.x1 + r.x2 - x).norm() <= 1e-9 * x.norm());
      CHECK((r.x1 - s.report.P * x).norm() <= 1e-5 * std::max(1.0, x.norm()));
      CHECK((r.x2 - s.report.Q * x).norm() <= 1e-5 * std::max(1.0, x.norm()));
      CHECK(r.forward_sup <= 10 * s.report.constants->stable.N * x.norm() + 1);
    }
  }
}
