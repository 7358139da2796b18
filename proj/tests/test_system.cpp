#include "doctest.h"

#include "edich/system.hpp"

#include <cmath>
#include <sstream>

using namespace edich;
using Grid = TimeGrid<double>;
using Sys = LinearSystem<double>;

static ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an edich::Error");
  return ErrorCode::ConfigError;
}

TEST_CASE("make_grid examples") {
  const auto g = make_grid(0.0, 1.0, 0.5);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.5);
  CHECK(g[2] == 1.0);

  const auto g2 = make_grid(-5.0, 5.0, 0.01);
  CHECK(g2.size() == 1001);
  CHECK(g2[1000] == 5.0);
  CHECK(g2.symmetric());
  CHECK(g2.index_of(0.0) == 500);

  CHECK(code_of([] { make_grid(0.0, 1.0, 0.3); }) == ErrorCode::InvalidGrid);
  CHECK(code_of([] { make_grid(1.0, 0.0, 0.1); }) == ErrorCode::InvalidGrid);
  CHECK(code_of([] { make_grid(0.0, 1.0, 0.0); }) == ErrorCode::InvalidGrid);
  CHECK(code_of([] { make_grid(0.0, 1.0, 1e-8); }) == ErrorCode::InvalidGrid);
}

TEST_CASE("grid points are strictly increasing and uniformly spaced") {
  const auto g = make_grid(-3.0, 7.0, 0.025);
  for (Index k = 1; k < g.size(); ++k) {
    CHECK(g[k] > g[k - 1]);
    CHECK(std::abs((g[k] - g[k - 1]) - 0.025) < 1e-12);
  }
  CHECK(code_of([&] { g.index_of(0.0125); }) == ErrorCode::OffGrid);
}

TEST_CASE("builtin catalog") {
  const auto d = builtin<double>("const_diag");
  CHECK(d.kind() == SystemKind::constant);
  CHECK(d(3.0).isApprox((Eigen::Matrix2d() << -1, 0, 0, 1).finished()));

  const auto z = builtin<double>("const_diag", {{"d", {0.0, 1.0}}});
  CHECK(z(0.0)(0, 0) == 0.0);

  const auto rot = builtin<double>("rotating_hyperbolic", {{"omega", {0.3}}});
  CHECK(rot.dim() == 2);
  // A(0) = diag(-1, 1) + omega J.
  CHECK(rot(0.0).isApprox((Eigen::Matrix2d() << -1, -0.3, 0.3, 1).finished()));

  for (const auto& name : builtin_names()) CHECK_NOTHROW(builtin<double>(name));
  CHECK(code_of([] { builtin<double>("lorenz"); }) == ErrorCode::UnknownSystem);
  CHECK(code_of([] { builtin<double>("const_full", {{"a", {1.0, 2.0, 3.0}}}); }) == ErrorCode::DimensionError);
}

TEST_CASE("constant systems return identical matrices at all times") {
  const auto s = builtin<double>("const_full", {{"a", {0.0, 1.0, -2.0, 0.5}}});
  const auto a0 = s(0.0);
  for (double t : {-100.0, -1.5, 0.25, 1e3}) CHECK((s(t).array() == a0.array()).all());
}

TEST_CASE("load_sampled") {
  SUBCASE("three rows give a 2x2 system on [0, 2]") {
    std::istringstream in("t,a11,a12,a21,a22\n# comment\n0,1,2,3,4\n1,2,3,4,5\n2,3,4,5,6\n");
    const auto s = load_sampled<double>(in);
    CHECK(s.kind() == SystemKind::sampled);
    CHECK(s.dim() == 2);
    CHECK(s.domain_lo() == 0.0);
    CHECK(s.domain_hi() == 2.0);
    CHECK(s(1.0)(0, 1) == 3.0);
    CHECK(s(0.5)(1, 1) == doctest::Approx(4.5));
    CHECK(code_of([&] { s(2.5); }) == ErrorCode::OutOfDomain);
  }
  SUBCASE("five matrix entries per row is not a square") {
    std::istringstream in("0,1,2,3,4,5\n1,1,2,3,4,5\n");
    CHECK(code_of([&] { load_sampled<double>(in); }) == ErrorCode::DimensionError);
  }
  SUBCASE("non-monotone time") {
    std::istringstream in("t,a11,a12,a21,a22\n0,1,2,3,4\n2,1,2,3,4\n1,1,2,3,4\n");
    CHECK(code_of([&] { load_sampled<double>(in); }) == ErrorCode::NonMonotoneTime);
  }
  SUBCASE("malformed row") {
    std::istringstream in("t,a11\n0,1\n1,abc\n");
    CHECK(code_of([&] { load_sampled<double>(in); }) == ErrorCode::ParseError);
  }
  SUBCASE("missing file") {
    CHECK(code_of([] { load_sampled<double>("/nonexistent/a.csv"); }) == ErrorCode::ParseError);
  }
}

TEST_CASE("sampled interpolation reproduces samples exactly") {
  std::ostringstream csv;
  csv << "t,a11,a12,a21,a22\n";
  std::vector<Eigen::Matrix2d> samples;
  for (int k = 0; k <= 20; ++k) {
    const double t = 0.37 * k - 2.0;
    Eigen::Matrix2d m;
    m << std::sin(t), std::cos(3 * t), t * t, -t;
    samples.push_back(m);
    csv.precision(17);
    csv << t << "," << m(0, 0) << "," << m(0, 1) << "," << m(1, 0) << "," << m(1, 1) << "\n";
  }
  std::istringstream in(csv.str());
  const auto s = load_sampled<double>(in);
  for (int k = 0; k <= 20; ++k) {
    const double t = 0.37 * k - 2.0;
    CHECK((s(t) - samples[static_cast<std::size_t>(k)]).norm() == 0.0);
  }
}

TEST_CASE("perturbation sup norm scales linearly") {
  const auto g = make_grid(-4.0, 4.0, 0.05);
  PerturbationSpec<double> b(2, [](double t) {
    Eigen::MatrixXd m(2, 2);
    m << std::sin(t), 0.3, -0.2 * std::cos(2 * t), 0.7;
    return m;
  }, g);
  CHECK(b.sup_norm() > 0);
  for (double c : {0.0, 0.5, 2.0, 17.25}) {
    const auto scaled = b.scaled(c);
    CHECK(std::abs(scaled.sup_norm() - c * b.sup_norm()) <= 1e-12 * std::max(1.0, c * b.sup_norm()));
  }
  CHECK(b.normalized(0.4).sup_norm() == doctest::Approx(0.4).epsilon(1e-12));

  const auto p = perturbed(builtin<double>("const_diag"), b);
  CHECK(p(0.0).isApprox(builtin<double>("const_diag")(0.0) + b(0.0)));
}
