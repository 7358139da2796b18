#pragma once

// The operator Lu = u' - A(t)u on grid functions, the Green's kernel
//   G(t, s) =  U(t) P U^{-1}(s),  t >= s,
//   G(t, s) = -U(t) Q U^{-1}(s),  t <  s,
// the bounded solution u = int G(., s) f(s) ds of Lu = f, and the splitting of
// an initial state into forward- and backward-bounded parts.

#include "edich/dichotomy.hpp"
#include "edich/errors.hpp"
#include "edich/propagator.hpp"
#include "edich/system.hpp"
#include "edich/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace edich {

/// Forcing term sampled on a grid. An optional support interval [a, b] says f
/// vanishes outside it.
template <typename Scalar>
class ForcingFunction {
 public:
  using Function = std::function<Vector<Scalar>(Scalar)>;
  using Support = std::pair<Scalar, Scalar>;

  ForcingFunction(Index dim, const Function& f, const TimeGrid<Scalar>& grid, std::optional<Support> support = {})
      : dim_(dim), support_(support) {
    values_.reserve(static_cast<std::size_t>(grid.size()));
    for (Scalar t : grid.points()) values_.push_back(f(t));
    finish();
  }

  ForcingFunction(SampledVector<Scalar> values, std::optional<Support> support = {})
      : dim_(values.empty() ? 0 : values.front().size()), values_(std::move(values)), support_(support) {
    finish();
  }

  static ForcingFunction constant(const Vector<Scalar>& c, const TimeGrid<Scalar>& grid) {
    return ForcingFunction(c.size(), [c](Scalar) { return c; }, grid);
  }

  static ForcingFunction zero(Index dim, const TimeGrid<Scalar>& grid) {
    return constant(Vector<Scalar>::Zero(dim), grid);
  }

  Index dim() const { return dim_; }
  Index size() const { return static_cast<Index>(values_.size()); }
  const Vector<Scalar>& operator[](Index k) const { return values_[static_cast<std::size_t>(k)]; }
  const SampledVector<Scalar>& values() const { return values_; }
  Scalar sup_norm() const { return sup_norm_; }
  const std::optional<Support>& support() const { return support_; }

 private:
  void finish() {
    sup_norm_ = 0;
    for (const auto& v : values_) {
      if (v.size() != dim_) throw Error(ErrorCode::DimensionError, "forcing samples have mixed dimensions");
      if (!v.allFinite()) throw Error(ErrorCode::InvalidParameter, "forcing is not finite");
      sup_norm_ = std::max(sup_norm_, v.norm());
    }
  }

  Index dim_;
  SampledVector<Scalar> values_;
  std::optional<Support> support_;
  Scalar sup_norm_{0};
};

template <typename Scalar>
struct GreenSolution {
  SampledVector<Scalar> u;
  std::vector<Scalar> residual;        // ||(discrete L)u - f|| per grid point
  std::vector<Scalar> tail_error_bound;  // per grid point
  Scalar residual_sup{0};              // over interior points
  Scalar residual_tol{0};
  Scalar u_sup{0};                     // over reported points
  Scalar f_sup{0};
  Scalar bound_margin{0};              // (N1/nu1 + N2/nu2) ||f|| / ||u||
  Scalar tail_max{0};                  // over reported points
  Index report_begin{0};               // reported points are [report_begin, report_end)
  Index report_end{0};

  bool residual_ok() const { return residual_sup <= residual_tol; }
};

template <typename Scalar>
struct GreenOptions {
  /// residual_tol = c_res h^2 max(||f||, ||u||).
  Scalar c_res{4.0};
  Scalar tail_fraction{0.01};
  /// Reported points are the central fraction of the window.
  Scalar report_fraction{0.5};
};

template <typename Scalar>
struct InverseBoundCheck {
  Scalar ratio{0};   // ||u|| / ||f||, a lower estimate of the inverse norm
  Scalar bound{0};   // N1/nu1 + N2/nu2
  Scalar tail_allowance{0};
};

template <typename Scalar>
struct SplitResult {
  Vector<Scalar> x;
  Vector<Scalar> x1;  // = w(0), forward-bounded part
  Vector<Scalar> x2;  // = -v(0), backward-bounded part
  Scalar forward_sup{0};
  Scalar backward_sup{0};
  Scalar homogeneous_residual{0};
};

/// Central differences inside, one-sided second-order differences at the ends,
/// minus A(t_k) x_k.
template <typename Scalar>
SampledVector<Scalar> apply_L(const TransitionCache<Scalar>& cache, const SampledVector<Scalar>& x) {
  const Index m = cache.size();
  if (m < 3) throw Error(ErrorCode::GridTooCoarse, "apply_L needs at least 3 grid points");
  if (static_cast<Index>(x.size()) != m) throw Error(ErrorCode::DimensionError, "x is not sampled on the grid");
  const Scalar h = cache.grid().step();
  const auto at = [&](Index k) -> const Vector<Scalar>& { return x[static_cast<std::size_t>(k)]; };
  SampledVector<Scalar> out(static_cast<std::size_t>(m));
  for (Index k = 0; k < m; ++k) {
    Vector<Scalar> d;
    if (k == 0)
      d = (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h);
    else if (k == m - 1)
      d = (3 * at(m - 1) - 4 * at(m - 2) + at(m - 3)) / (2 * h);
    else
      d = (at(k + 1) - at(k - 1)) / (2 * h);
    out[static_cast<std::size_t>(k)] = d - cache.coefficient(k) * at(k);
  }
  return out;
}

/// G(t, s); the t = s value is P(s).
template <typename Scalar>
Matrix<Scalar> green_kernel(const TransitionCache<Scalar>& cache, const DichotomyReport<Scalar>& report, Scalar t,
                            Scalar s) {
  if (!report.dichotomic()) throw Error(ErrorCode::NotDichotomic, "Green's kernel needs a dichotomic report");
  const auto& grid = cache.grid();
  const Index k = grid.index_of(t);
  const Index j = grid.index_of(s);
  const Index ref = grid.index_of(report.ref_time);
  if (k >= j) return cache.transition(k, ref) * report.P * cache.transition(ref, j);
  return -(cache.transition(k, ref) * report.Q * cache.transition(ref, j));
}

/// Bounded solution of Lu = f on the window by trapezoid quadrature of the
/// Green's kernel. The two half-integrals are accumulated recursively with the
/// step maps:
///   S_{k+1} = Phi_k S_k + h P_{k+1} f_{k+1},   F_k = S_k - h/2 P_k f_k,
/// and the mirror image with Q and Phi_k^{-1}; u = F - B. Each step is
/// projected back onto the range of P_{k+1} (Q_{k-1}) so rounding is not
/// amplified along the opposite direction.
template <typename Scalar>
GreenSolution<Scalar> green_solve(const TransitionCache<Scalar>& cache, const DichotomyReport<Scalar>& report,
                                  const ForcingFunction<Scalar>& f, const GreenOptions<Scalar>& opts = {}) {
  using std::exp;
  if (!report.dichotomic() || !report.constants)
    throw Error(ErrorCode::NotDichotomic, "green_solve needs a dichotomic report");
  const Index m = cache.size();
  const Index n = cache.dim();
  if (f.size() != m) throw Error(ErrorCode::DimensionError, "forcing is not sampled on the grid");
  if (f.dim() != n) throw Error(ErrorCode::DimensionError, "forcing has the wrong dimension");
  if (m < 3) throw Error(ErrorCode::GridTooCoarse, "green_solve needs at least 3 grid points");
  const auto& grid = cache.grid();
  const Scalar h = grid.step();
  const auto fam = projector_family(cache, report);
  const auto uz = [](Index k) { return static_cast<std::size_t>(k); };
  const Matrix<Scalar> id = Matrix<Scalar>::Identity(n, n);

  GreenSolution<Scalar> sol;
  sol.u.assign(uz(m), Vector<Scalar>::Zero(n));
  sol.f_sup = f.sup_norm();

  Vector<Scalar> s = (h / 2) * (fam.P[0] * f[0]);
  sol.u[0] = s - (h / 2) * (fam.P[0] * f[0]);
  for (Index k = 0; k + 1 < m; ++k) {
    s = fam.P[uz(k + 1)] * (cache.step(k) * s + h * f[k + 1]);
    sol.u[uz(k + 1)] = s - (h / 2) * (fam.P[uz(k + 1)] * f[k + 1]);
  }
  const auto q = [&](Index k) { return Matrix<Scalar>(id - fam.P[uz(k)]); };
  Vector<Scalar> b = (h / 2) * (q(m - 1) * f[m - 1]);
  sol.u[uz(m - 1)] -= b - (h / 2) * (q(m - 1) * f[m - 1]);
  for (Index k = m - 1; k > 0; --k) {
    const Matrix<Scalar> qk = q(k - 1);
    b = qk * (cache.step_inverse(k - 1) * b + h * f[k - 1]);
    sol.u[uz(k - 1)] -= b - (h / 2) * (qk * f[k - 1]);
  }

  const auto lu = apply_L(cache, sol.u);
  sol.residual.resize(uz(m));
  for (Index k = 0; k < m; ++k) {
    sol.residual[uz(k)] = (lu[uz(k)] - f[k]).norm();
    if (k > 0 && k + 1 < m) sol.residual_sup = std::max(sol.residual_sup, sol.residual[uz(k)]);
  }

  // Truncation of the integral to the window.
  const auto& c = *report.constants;
  const auto& support = f.support();
  const bool inside = support && support->first >= grid.t_min() && support->second <= grid.t_max();
  sol.tail_error_bound.assign(uz(m), Scalar(0));
  if (!inside)
    for (Index k = 0; k < m; ++k) {
      Scalar tail = 0;
      if (!c.stable.vacuous) tail += c.stable.ratio() * exp(-c.stable.nu * (grid[k] - grid.t_min()));
      if (!c.unstable.vacuous) tail += c.unstable.ratio() * exp(-c.unstable.nu * (grid.t_max() - grid[k]));
      sol.tail_error_bound[uz(k)] = tail * sol.f_sup;
    }

  const Scalar center = (grid.t_min() + grid.t_max()) / 2;
  const Scalar reach = opts.report_fraction * (grid.t_max() - grid.t_min()) / 2;
  sol.report_begin = m;
  for (Index k = 0; k < m; ++k) {
    if (std::abs(static_cast<double>(grid[k] - center)) > static_cast<double>(reach) + 1e-9 * static_cast<double>(h))
      continue;
    sol.report_begin = std::min(sol.report_begin, k);
    sol.report_end = k + 1;
    sol.tail_max = std::max(sol.tail_max, sol.tail_error_bound[uz(k)]);
    sol.u_sup = std::max(sol.u_sup, sol.u[uz(k)].norm());
  }
  if (sol.tail_max > opts.tail_fraction * sol.f_sup)
    throw Error(ErrorCode::TailDominates, "window truncation bound " + std::to_string(static_cast<double>(sol.tail_max)) +
                                              " exceeds 1% of ||f||; enlarge the window");
  sol.residual_tol = opts.c_res * h * h * std::max(sol.f_sup, sol.u_sup);
  sol.bound_margin = sol.u_sup > 0 ? c.inverse_bound() * sol.f_sup / sol.u_sup : std::numeric_limits<Scalar>::infinity();
  return sol;
}

/// ||u|| <= (N1/nu1 + N2/nu2) ||f|| + tail allowance, else BoundViolated.
template <typename Scalar>
InverseBoundCheck<Scalar> check_inverse_bound(const GreenSolution<Scalar>& sol, const DichotomyReport<Scalar>& report) {
  if (!report.constants) throw Error(ErrorCode::NotDichotomic, "report carries no constants");
  InverseBoundCheck<Scalar> out;
  out.bound = report.constants->inverse_bound();
  out.tail_allowance = sol.tail_max;
  out.ratio = sol.f_sup > 0 ? sol.u_sup / sol.f_sup : Scalar(0);
  if (sol.u_sup > out.bound * sol.f_sup + out.tail_allowance)
    throw Error(ErrorCode::BoundViolated, "||u|| = " + std::to_string(static_cast<double>(sol.u_sup)) +
                                              " exceeds the inverse bound " +
                                              std::to_string(static_cast<double>(out.bound * sol.f_sup)));
  return out;
}

/// Smooth ramp 6t^5 - 15t^4 + 10t^3 on [0, 1], 0 before and 1 after.
template <typename Scalar>
Scalar ramp(Scalar t) {
  if (t <= 0) return 0;
  if (t >= 1) return 1;
  return t * t * t * (10 + t * (-15 + 6 * t));
}

template <typename Scalar>
Scalar ramp_derivative(Scalar t) {
  if (t <= 0 || t >= 1) return 0;
  const Scalar s = t * (1 - t);
  return 30 * s * s;
}

/// Splits x = x1 + x2 with x1 the initial value of a forward-bounded solution
/// and x2 of a backward-bounded one. With u the solution through x at 0 and
/// alpha the ramp, v solves Lv = alpha' u, and w = (1 - alpha) u + v solves
/// Lw = 0; then x1 = w(0) = x + v(0) and x2 = -v(0).
template <typename Scalar>
SplitResult<Scalar> split_initial_state(const TransitionCache<Scalar>& cache, const DichotomyReport<Scalar>& report,
                                        const std::type_identity_t<Vector<Scalar>>& x,
                                        const GreenOptions<Scalar>& opts = {}) {
  if (!report.dichotomic()) throw Error(ErrorCode::NotDichotomic, "splitting needs a dichotomic report");
  const auto& grid = cache.grid();
  if (!(grid.t_min() <= -4 && grid.t_max() >= 4))
    throw Error(ErrorCode::InvalidGrid, "splitting needs a grid covering [-4, 4]");
  if (x.size() != cache.dim()) throw Error(ErrorCode::DimensionError, "x has the wrong dimension");
  const Index m = cache.size();
  const Index i0 = grid.index_of(Scalar(0));
  const auto uz = [](Index k) { return static_cast<std::size_t>(k); };

  SampledVector<Scalar> u(uz(m)), g(uz(m));
  for (Index k = 0; k < m; ++k) {
    u[uz(k)] = cache.apply(k, i0, x);
    g[uz(k)] = ramp_derivative(grid[k]) * u[uz(k)];
  }
  const ForcingFunction<Scalar> forcing(std::move(g), std::make_pair(Scalar(0), Scalar(1)));
  const auto v = green_solve(cache, report, forcing, opts);

  SplitResult<Scalar> out;
  out.x = x;
  out.x1 = x + v.u[uz(i0)];
  out.x2 = -v.u[uz(i0)];
  SampledVector<Scalar> w(uz(m));
  for (Index k = 0; k < m; ++k) {
    w[uz(k)] = (1 - ramp(grid[k])) * u[uz(k)] + v.u[uz(k)];
    if (k >= i0) out.forward_sup = std::max(out.forward_sup, w[uz(k)].norm());
    if (k <= i0) out.backward_sup = std::max(out.backward_sup, v.u[uz(k)].norm());
  }
  const auto lw = apply_L(cache, w);
  for (Index k = 1; k + 1 < m; ++k) out.homogeneous_residual = std::max(out.homogeneous_residual, lw[uz(k)].norm());
  return out;
}

}  // namespace edich
