#pragma once

// Dichotomy projections P, Q = I - P, the constants N1, nu1, N2, nu2 of
//   ||transition(t, s) P(s)|| <= N1 e^{-nu1 (t - s)},  t >= s,
//   ||transition(t, s) Q(s)|| <= N2 e^{-nu2 (s - t)},  t <= s,
// their verification on a grid, and the decay constants of bounded solutions.

#include "edich/envelope.hpp"
#include "edich/errors.hpp"
#include "edich/norms.hpp"
#include "edich/propagator.hpp"
#include "edich/system.hpp"
#include "edich/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace edich {

enum class Verdict { dichotomic, not_dichotomic, inconclusive };

constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::dichotomic: return "dichotomic";
    case Verdict::not_dichotomic: return "not_dichotomic";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

/// One side of the dichotomy estimate. A vacuous side belongs to a zero
/// projection and is skipped everywhere.
template <typename Scalar>
struct SideConstants {
  Scalar N{1};
  Scalar nu{0};
  bool vacuous{false};

  Scalar ratio() const { return vacuous ? Scalar(0) : N / nu; }
  Scalar bound(Scalar separation) const {
    using std::exp;
    return N * exp(-nu * separation);
  }
};

template <typename Scalar>
struct DichotomyConstants {
  SideConstants<Scalar> stable;    // N1, nu1 for P
  SideConstants<Scalar> unstable;  // N2, nu2 for Q

  /// N1/nu1 + N2/nu2, an upper bound for the norm of the inverse of Lu = u' - A(t)u.
  Scalar inverse_bound() const { return stable.ratio() + unstable.ratio(); }
};

template <typename Scalar>
struct DichotomyReport {
  Matrix<Scalar> P;
  Matrix<Scalar> Q;
  Matrix<Scalar> X1_basis;  // orthonormal columns spanning range(P)
  Matrix<Scalar> X2_basis;  // orthonormal columns spanning range(Q)
  Scalar ref_time{0};       // P and Q act at this time
  Scalar projection_error{0};  // estimated rounding error of P
  std::optional<DichotomyConstants<Scalar>> constants;
  Verdict verdict{Verdict::inconclusive};
  Scalar gap_ratio{0};
  std::optional<ErrorCode> failure;
  std::string detail;
  Scalar window_half_length{0};
  Scalar verification_margin{0};
  Scalar projector_sup{0};

  bool dichotomic() const { return verdict == Verdict::dichotomic; }
};

template <typename Scalar>
struct ProjectorFamily {
  std::vector<Matrix<Scalar>> P;  // P(t_k) for every grid point
  /// Rounding bound for P(t_k): (error of P + u) times the condition number of
  /// transition(t_k, t_ref). It grows like e^{(spread of rates) |t_k - t_ref|}.
  std::vector<Scalar> error;
  // Over the points with error <= reliable_tol * max(1, ||P(t_k)||):
  Scalar sup_norm{0};
  Scalar max_defect{0};  // max ||P(t_k)^2 - P(t_k)||
  Index reliable_count{0};
};

template <typename Scalar>
struct Verification {
  bool passed{false};
  Scalar margin{0};  // min over sampled pairs of (claimed bound) / (measured norm)
};

template <typename Scalar>
struct DecayConstants {
  Scalar C{0};
  Scalar N_step{0};
  Scalar rate{0};
  Scalar inv_norm_bound{0};
  Scalar C_decay{0};
};

enum class Side { forward, backward };

template <typename Scalar>
struct DecayCheck {
  bool passed{false};
  Scalar margin{0};
  Scalar measured_rate{0};
};

template <typename Scalar>
struct FitOptions {
  Scalar rate_min{1e-3};
  Scalar projection_tol{1e-6};
  Scalar vacuous_tol{1e-12};
  PairSampling sampling{};
};

template <typename Scalar>
struct WindowOptions {
  Scalar gap_min{1e3};
  /// log(gap at T) / log(gap at T/2) must reach this; an exponential
  /// separation doubles the log-gap, polynomial growth does not.
  Scalar gap_growth_min{1.5};
  Scalar min_angle{1e-6};
  Scalar family_idempotency{1e-7};
  Scalar verify_tolerance{1e-9};
  FitOptions<Scalar> fit{};
};

/// Pairs whose predicted rounding error exceeds this fraction of the measured
/// norm are left out of constant fitting and verification.
template <typename Scalar>
inline constexpr Scalar kPairRelativeError = Scalar(1e-2);

template <typename Scalar>
inline constexpr Scalar kFamilyReliableTol = Scalar(1e-6);

namespace detail {

template <typename Scalar>
Matrix<Scalar> range_basis(const Matrix<Scalar>& m, Index k) {
  if (k == 0) return Matrix<Scalar>(m.rows(), 0);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(m, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(k);
}

/// Projection onto span(x1) along span(x2).
template <typename Scalar>
Matrix<Scalar> oblique_projection(const Matrix<Scalar>& x1, const Matrix<Scalar>& x2) {
  const Index n = x1.rows();
  const Index k = x1.cols();
  if (k == 0) return Matrix<Scalar>::Zero(n, n);
  if (k == n) return Matrix<Scalar>::Identity(n, n);
  Matrix<Scalar> m(n, n);
  m << x1, x2;
  const Matrix<Scalar> inv = Eigen::PartialPivLU<Matrix<Scalar>>(m).inverse();
  return x1 * inv.topRows(k);
}

/// Smallest principal angle between two subspaces with orthonormal bases.
template <typename Scalar>
Scalar smallest_angle(const Matrix<Scalar>& x1, const Matrix<Scalar>& x2) {
  using std::acos;
  if (x1.cols() == 0 || x2.cols() == 0) return std::numbers::pi_v<Scalar> / 2;
  const Matrix<Scalar> c = x1.transpose() * x2;
  return acos(std::min(Scalar(1), operator_norm(c)));
}

/// Ratio between the smallest singular value >= 1 and the largest < 1, with 1
/// standing in for an empty side. sv is in decreasing order.
template <typename Scalar>
Scalar split_gap(const Vector<Scalar>& sv, Index small_count) {
  const Index n = sv.size();
  const Scalar small = small_count > 0 ? sv(n - small_count) : Scalar(1);
  const Scalar large = small_count < n ? sv(n - small_count - 1) : Scalar(1);
  if (!(small > 0)) return std::numeric_limits<Scalar>::infinity();
  return large / small;
}

template <typename Scalar>
Index count_below_one(const Vector<Scalar>& sv) {
  Index k = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) < 1) ++k;
  return k;
}

template <typename Scalar>
SideConstants<Scalar> fit_side(const Envelope<Scalar>& env, Scalar h, Scalar rate_min, const char* label) {
  using std::exp;
  SideConstants<Scalar> side;
  side.nu = -envelope_slope(env, h);
  if (!(side.nu > rate_min))
    throw Error(ErrorCode::NoDecay, std::string(label) + " envelope rate " +
                                        std::to_string(static_cast<double>(side.nu)) + " is not positive");
  Scalar n = 1;
  for (std::size_t d = 0; d < env.max_norm.size(); ++d)
    if (env.present(d)) n = std::max(n, env.max_norm[d] * exp(side.nu * Scalar(d) * h));
  side.N = n;
  return side;
}

template <typename Scalar>
Scalar side_margin(const Envelope<Scalar>& env, const SideConstants<Scalar>& side, Scalar h) {
  Scalar margin = std::numeric_limits<Scalar>::infinity();
  for (std::size_t d = 0; d < env.max_norm.size(); ++d) {
    if (!env.present(d) || env.max_norm[d] == 0) continue;
    margin = std::min(margin, side.bound(Scalar(d) * h) / env.max_norm[d]);
  }
  return margin;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> complement_family(const std::vector<Matrix<Scalar>>& family) {
  std::vector<Matrix<Scalar>> out;
  out.reserve(family.size());
  for (const auto& p : family) out.push_back(Matrix<Scalar>::Identity(p.rows(), p.cols()) - p);
  return out;
}

template <typename Scalar>
ErrorScreen<Scalar> family_screen(const ProjectorFamily<Scalar>& family, Index n) {
  return ErrorScreen<Scalar>{&family.error, std::numeric_limits<Scalar>::epsilon() * Scalar(4 * n),
                             kPairRelativeError<Scalar>};
}

template <typename Scalar>
struct FamilyFit {
  DichotomyConstants<Scalar> constants;
  Scalar margin{std::numeric_limits<Scalar>::infinity()};  // of the fitted constants on the same envelopes
};

template <typename Scalar>
FamilyFit<Scalar> fit_family(const TransitionCache<Scalar>& cache, const Matrix<Scalar>& p,
                             const ProjectorFamily<Scalar>& family, const FitOptions<Scalar>& opts) {
  const Index n = p.rows();
  const Scalar h = cache.grid().step();
  const auto screen = family_screen(family, n);
  FamilyFit<Scalar> fit;
  auto& c = fit.constants;
  c.stable.vacuous = operator_norm(p) <= opts.vacuous_tol;
  c.unstable.vacuous = operator_norm((Matrix<Scalar>::Identity(n, n) - p).eval()) <= opts.vacuous_tol;
  if (!c.stable.vacuous) {
    const auto env = pair_envelope(cache, SweepDirection::forward, &family.P, opts.sampling, screen);
    c.stable = fit_side(env, h, opts.rate_min, "P-side");
    fit.margin = std::min(fit.margin, side_margin(env, c.stable, h));
  }
  if (!c.unstable.vacuous) {
    const auto q = complement_family(family.P);
    const auto env = pair_envelope(cache, SweepDirection::backward, &q, opts.sampling, screen);
    c.unstable = fit_side(env, h, opts.rate_min, "Q-side");
    fit.margin = std::min(fit.margin, side_margin(env, c.unstable, h));
  }
  return fit;
}

template <typename Scalar>
Verification<Scalar> verify_family(const TransitionCache<Scalar>& cache, const ProjectorFamily<Scalar>& family,
                                   const DichotomyConstants<Scalar>& c, Scalar tolerance,
                                   const PairSampling& sampling) {
  const Scalar h = cache.grid().step();
  const auto screen = family_screen(family, cache.dim());
  Verification<Scalar> v;
  v.margin = std::numeric_limits<Scalar>::infinity();
  if (!c.stable.vacuous) {
    const auto env = pair_envelope(cache, SweepDirection::forward, &family.P, sampling, screen);
    v.margin = std::min(v.margin, side_margin(env, c.stable, h));
  }
  if (!c.unstable.vacuous) {
    const auto q = complement_family(family.P);
    const auto env = pair_envelope(cache, SweepDirection::backward, &q, sampling, screen);
    v.margin = std::min(v.margin, side_margin(env, c.unstable, h));
  }
  v.passed = v.margin >= 1 - tolerance;
  return v;
}

}  // namespace detail

/// P(t_k) = transition(t_k, t_ref) P transition(t_ref, t_k) at every grid point,
/// built outward from the reference by one-step conjugation. p_error is the
/// uncertainty of P itself.
template <typename Scalar>
ProjectorFamily<Scalar> projector_family(const TransitionCache<Scalar>& cache,
                                         const std::type_identity_t<Matrix<Scalar>>& p, Index ref_index,
                                         Scalar p_error = 0) {
  const auto count = static_cast<std::size_t>(cache.size());
  const auto ref = static_cast<std::size_t>(ref_index);
  if (ref_index < 0 || ref >= count) throw Error(ErrorCode::OffGrid, "reference index out of range");
  const Index n = cache.dim();
  const Scalar u = std::numeric_limits<Scalar>::epsilon() * Scalar(n);
  ProjectorFamily<Scalar> fam;
  fam.P.resize(count);
  fam.error.resize(count);
  fam.P[ref] = p;
  fam.error[ref] = p_error + u * operator_norm(p);
  Matrix<Scalar> fwd = Matrix<Scalar>::Identity(n, n), inv = fwd;
  const Scalar base = p_error + u * std::max(Scalar(1), operator_norm(p));
  for (std::size_t k = ref; k + 1 < count; ++k) {
    const auto i = static_cast<Index>(k);
    fam.P[k + 1] = cache.step(i) * fam.P[k] * cache.step_inverse(i);
    fwd = cache.step(i) * fwd;
    inv = inv * cache.step_inverse(i);
    fam.error[k + 1] = base * operator_norm(fwd) * operator_norm(inv);
  }
  fwd.setIdentity();
  inv.setIdentity();
  for (std::size_t k = ref; k > 0; --k) {
    const auto i = static_cast<Index>(k - 1);
    fam.P[k - 1] = cache.step_inverse(i) * fam.P[k] * cache.step(i);
    fwd = cache.step_inverse(i) * fwd;
    inv = inv * cache.step(i);
    fam.error[k - 1] = base * operator_norm(fwd) * operator_norm(inv);
  }
  for (std::size_t k = 0; k < count; ++k) {
    const Scalar norm = operator_norm(fam.P[k]);
    if (fam.error[k] > kFamilyReliableTol<Scalar> * std::max(Scalar(1), norm)) continue;
    ++fam.reliable_count;
    fam.sup_norm = std::max(fam.sup_norm, norm);
    fam.max_defect = std::max(fam.max_defect, idempotency_defect(fam.P[k]));
  }
  return fam;
}

template <typename Scalar>
ProjectorFamily<Scalar> projector_family(const TransitionCache<Scalar>& cache, const DichotomyReport<Scalar>& r) {
  return projector_family(cache, r.P, cache.grid().index_of(r.ref_time), r.projection_error);
}

/// Fits (N1, nu1) to the forward envelope of ||transition(t, s) P(s)|| and
/// (N2, nu2) to the backward envelope of ||transition(t, s) Q(s)||, with P
/// given at grid index ref_index. Rates come from the envelope slope; each N
/// is the smallest constant that makes its envelope hold at every sampled pair.
template <typename Scalar>
DichotomyConstants<Scalar> fit_constants(const TransitionCache<Scalar>& cache,
                                         const std::type_identity_t<Matrix<Scalar>>& p,
                                         Index ref_index, const FitOptions<Scalar>& opts = {}) {
  if (p.rows() != cache.dim() || p.cols() != cache.dim())
    throw Error(ErrorCode::DimensionError, "projection has wrong shape");
  if (idempotency_defect(p) > opts.projection_tol * std::max(Scalar(1), operator_norm(p)))
    throw Error(ErrorCode::InvalidProjection, "P is not idempotent");
  const auto fam = projector_family(cache, p, ref_index);
  return detail::fit_family(cache, p, fam, opts).constants;
}

/// Checks the stored constants against every sampled pair.
template <typename Scalar>
Verification<Scalar> verify_dichotomy(const TransitionCache<Scalar>& cache, const DichotomyReport<Scalar>& r,
                                      Scalar tolerance = Scalar(1e-9), const PairSampling& sampling = {}) {
  if (!r.constants) throw Error(ErrorCode::InvalidParameter, "report carries no constants");
  const auto fam = projector_family(cache, r);
  return detail::verify_family(cache, fam, *r.constants, tolerance, sampling);
}

namespace detail {

/// Swaps adjacent diagonal entries j, j+1 of the triangular factor.
template <typename C>
void swap_schur(Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>& t,
                Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>& u, Index j) {
  const C a = t(j, j), b = t(j + 1, j + 1), c = t(j, j + 1);
  Eigen::JacobiRotation<C> g;
  g.makeGivens(c, b - a);
  t.applyOnTheLeft(j, j + 1, g.adjoint());
  t.applyOnTheRight(j, j + 1, g);
  u.applyOnTheRight(j, j + 1, g);
  t(j + 1, j) = C(0);
}

}  // namespace detail

template <typename Scalar>
struct SpectralSplit {
  Matrix<Scalar> P;
  Index stable_count{0};
  std::vector<std::complex<Scalar>> eigenvalues;  // stable ones first
};

/// Spectral projection of a constant matrix onto the eigenvalues with negative
/// real part: ordered complex Schur form, then the triangular Sylvester
/// equation T11 Z - Z T22 = T12 that decouples the two blocks.
template <typename Scalar>
SpectralSplit<Scalar> stable_spectral_split(const Matrix<Scalar>& a) {
  using C = std::complex<Scalar>;
  using CM = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;
  using CV = Eigen::Matrix<C, Eigen::Dynamic, 1>;
  const Index n = a.rows();
  Eigen::ComplexSchur<Matrix<Scalar>> schur(a);
  if (schur.info() != Eigen::Success) throw Error(ErrorCode::InvalidParameter, "Schur decomposition failed");
  CM t = schur.matrixT();
  CM u = schur.matrixU();
  for (bool moved = true; moved;) {
    moved = false;
    for (Index j = 0; j + 1 < n; ++j)
      if (t(j, j).real() >= 0 && t(j + 1, j + 1).real() < 0) {
        detail::swap_schur(t, u, j);
        moved = true;
      }
  }
  SpectralSplit<Scalar> out;
  for (Index i = 0; i < n; ++i) {
    out.eigenvalues.push_back(t(i, i));
    if (t(i, i).real() < 0) ++out.stable_count;
  }
  const Index k = out.stable_count;
  CM pt = CM::Zero(n, n);
  pt.topLeftCorner(k, k).setIdentity();
  if (k > 0 && k < n) {
    const CM t11 = t.topLeftCorner(k, k);
    const CM t22 = t.bottomRightCorner(n - k, n - k);
    CM z(k, n - k);
    for (Index j = 0; j < n - k; ++j) {
      CV rhs = t.topRightCorner(k, n - k).col(j);
      for (Index i = 0; i < j; ++i) rhs += z.col(i) * t22(i, j);
      const CM m = t11 - t22(j, j) * CM::Identity(k, k);
      z.col(j) = m.template triangularView<Eigen::Upper>().solve(rhs);
    }
    pt.topRightCorner(k, n - k) = z;
  }
  out.P = (u * pt * u.adjoint()).real();
  return out;
}

template <typename Scalar>
struct SpectralOptions {
  Scalar spectral_margin{1e-8};
  Scalar max_half_length{8};
  Scalar h{0.01};
  FitOptions<Scalar> fit{};
};

/// Dichotomy data of a constant system from its spectrum. Constants are
/// fitted on [-T, T] around the reference time 0.
template <typename Scalar>
DichotomyReport<Scalar> spectral_projector(const LinearSystem<Scalar>& sys, const SpectralOptions<Scalar>& opts = {}) {
  using std::abs;
  using std::ceil;
  using std::exp;
  if (sys.kind() != SystemKind::constant)
    throw Error(ErrorCode::InvalidParameter, "spectral_projector needs a constant system");
  const Index n = sys.dim();
  const Matrix<Scalar> a = sys(Scalar(0));
  const auto split = stable_spectral_split(a);

  DichotomyReport<Scalar> r;
  r.P = split.P;
  r.Q = Matrix<Scalar>::Identity(n, n) - r.P;
  r.X1_basis = detail::range_basis(r.P, split.stable_count);
  r.X2_basis = detail::range_basis(r.Q, n - split.stable_count);

  Scalar min_abs_re = std::numeric_limits<Scalar>::infinity();
  Scalar spread = 0, radius = 0;
  Scalar max_stable = -std::numeric_limits<Scalar>::infinity();
  Scalar min_unstable = std::numeric_limits<Scalar>::infinity();
  for (const auto& l : split.eigenvalues) {
    min_abs_re = std::min(min_abs_re, abs(l.real()));
    spread = std::max(spread, abs(l.real()));
    radius = std::max(radius, abs(l));
    if (l.real() < 0)
      max_stable = std::max(max_stable, l.real());
    else
      min_unstable = std::min(min_unstable, l.real());
  }
  r.gap_ratio = exp((split.stable_count < n ? min_unstable : Scalar(0)) -
                    (split.stable_count > 0 ? max_stable : Scalar(0)));
  if (min_abs_re < opts.spectral_margin) {
    r.verdict = Verdict::not_dichotomic;
    r.failure = ErrorCode::OnAxisEigenvalue;
    r.detail = "eigenvalue with |Re| = " + std::to_string(static_cast<double>(min_abs_re)) + " on the imaginary axis";
    return r;
  }

  // Window long enough to see the decay, short enough that e^{spread T} stays
  // far from the rounding floor; step resolves the fastest mode.
  const Scalar h = std::min(opts.h, Scalar(0.1) / std::max(Scalar(1e-12), radius));
  const Scalar half = std::min(opts.max_half_length, Scalar(20) / spread);
  const Scalar m = std::max(Scalar(1), ceil(half / h));
  const auto grid = make_grid(-m * h, m * h, h);
  const auto cache = propagate(sys, grid);
  const Index ref = grid.index_of(Scalar(0));
  r.window_half_length = grid.t_max();
  r.projection_error = std::numeric_limits<Scalar>::epsilon() * Scalar(n) * std::pow(operator_norm(r.P), Scalar(2));
  const auto fam = projector_family(cache, r.P, ref, r.projection_error);
  r.projector_sup = fam.sup_norm;
  try {
    const auto fit = detail::fit_family(cache, r.P, fam, opts.fit);
    r.constants = fit.constants;
    r.verification_margin = fit.margin;
  } catch (const Error& e) {
    r.verdict = Verdict::inconclusive;
    r.failure = e.code();
    r.detail = e.what();
    return r;
  }
  const bool passed = r.verification_margin >= 1 - Scalar(1e-9);
  r.verdict = passed ? Verdict::dichotomic : Verdict::inconclusive;
  if (!passed) r.failure = ErrorCode::VerificationFailed;
  return r;
}

/// Finite-window dichotomy on a symmetric grid [-T, T].
///
/// X1 is spanned by the right singular vectors of transition(T, 0) with
/// singular value below 1 (directions that stay bounded forward), X2 likewise
/// for transition(-T, 0). P projects onto X1 along X2 at t = 0.
template <typename Scalar>
DichotomyReport<Scalar> window_projector(const TransitionCache<Scalar>& cache, const WindowOptions<Scalar>& opts = {}) {
  using std::log;
  const auto& grid = cache.grid();
  if (!grid.symmetric()) throw Error(ErrorCode::InvalidGrid, "window_projector needs a grid [-T, T] containing 0");
  const Index n = cache.dim();
  const Index i0 = grid.index_of(Scalar(0));
  const Index last = cache.size() - 1;

  DichotomyReport<Scalar> r;
  r.ref_time = 0;
  r.window_half_length = grid.t_max();
  const auto inconclusive = [&](ErrorCode code, std::string why) {
    r.verdict = Verdict::inconclusive;
    r.failure = code;
    r.detail = std::move(why);
    return r;
  };

  Eigen::JacobiSVD<Matrix<Scalar>> fwd(cache.chained_transition(last, i0), Eigen::ComputeFullV);
  Eigen::JacobiSVD<Matrix<Scalar>> bwd(cache.chained_transition(0, i0), Eigen::ComputeFullV);
  const Index k1 = detail::count_below_one<Scalar>(fwd.singularValues());
  const Index k2 = detail::count_below_one<Scalar>(bwd.singularValues());
  const Scalar gap_f = detail::split_gap<Scalar>(fwd.singularValues(), k1);
  const Scalar gap_b = detail::split_gap<Scalar>(bwd.singularValues(), k2);
  r.gap_ratio = std::min(gap_f, gap_b);
  if (r.gap_ratio < opts.gap_min)
    return inconclusive(ErrorCode::NoGap,
                        "singular-value gap " + std::to_string(static_cast<double>(r.gap_ratio)) + " below threshold");

  // Same split on the half window.
  const Index half_f = i0 + (last - i0) / 2;
  const Index half_b = i0 / 2;
  Eigen::JacobiSVD<Matrix<Scalar>> fwd_half(cache.chained_transition(half_f, i0));
  Eigen::JacobiSVD<Matrix<Scalar>> bwd_half(cache.chained_transition(half_b, i0));
  const Scalar half_gap = std::min(detail::split_gap<Scalar>(fwd_half.singularValues(), k1),
                                   detail::split_gap<Scalar>(bwd_half.singularValues(), k2));
  if (half_gap > 1 && log(r.gap_ratio) / log(half_gap) < opts.gap_growth_min)
    return inconclusive(ErrorCode::NoGap, "singular-value gap grows sub-exponentially with the window (" +
                                              std::to_string(static_cast<double>(half_gap)) + " at T/2, " +
                                              std::to_string(static_cast<double>(r.gap_ratio)) + " at T)");
  if (k1 + k2 != n)
    return inconclusive(ErrorCode::NoGap, "dim X1 + dim X2 = " + std::to_string(k1 + k2) + " != n");

  r.X1_basis = fwd.matrixV().rightCols(k1);
  r.X2_basis = bwd.matrixV().rightCols(k2);
  const Scalar angle = detail::smallest_angle(r.X1_basis, r.X2_basis);
  if (angle < opts.min_angle) {
    r.verdict = Verdict::not_dichotomic;
    r.failure = ErrorCode::DegenerateSplit;
    r.detail = "X1 and X2 intersect (smallest principal angle " + std::to_string(static_cast<double>(angle)) + ")";
    return r;
  }
  r.P = detail::oblique_projection(r.X1_basis, r.X2_basis);
  r.Q = Matrix<Scalar>::Identity(n, n) - r.P;
  // Subspace perturbation bound: rounding in the window products over the
  // singular-value gap, magnified by the angle between X1 and X2.
  const Scalar u = std::numeric_limits<Scalar>::epsilon() * Scalar(n);
  const auto side_error = [&](const Vector<Scalar>& sv, Index small_count) {
    const Index large_count = n - small_count;
    const Scalar large = large_count > 0 ? sv(large_count - 1) : Scalar(1);
    return u * std::max(Scalar(1), sv(0)) / large;
  };
  r.projection_error = std::max(Scalar(1), operator_norm(r.P)) *
                       (side_error(fwd.singularValues(), k1) + side_error(bwd.singularValues(), k2)) / std::sin(angle);

  const auto fam = projector_family(cache, r.P, i0, r.projection_error);
  r.projector_sup = fam.sup_norm;
  try {
    const auto fit = detail::fit_family(cache, r.P, fam, opts.fit);
    r.constants = fit.constants;
    r.verification_margin = fit.margin;
  } catch (const Error& e) {
    return inconclusive(e.code(), e.what());
  }
  if (fam.max_defect > opts.family_idempotency * std::max(Scalar(1), fam.sup_norm))
    return inconclusive(ErrorCode::InvalidProjection, "projector family lost idempotency");
  if (r.verification_margin < 1 - opts.verify_tolerance)
    return inconclusive(ErrorCode::VerificationFailed, "fitted constants fail verification");
  r.verdict = Verdict::dichotomic;
  return r;
}

template <typename Scalar>
struct Certification {
  TransitionCache<Scalar> cache;
  DichotomyReport<Scalar> report;
};

/// propagate + window_projector on a symmetric grid, doubling the window up to
/// `doublings` times while no gap is found.
template <typename Scalar>
Certification<Scalar> certify(const LinearSystem<Scalar>& sys, TimeGrid<Scalar> grid,
                              const WindowOptions<Scalar>& opts = {}, int doublings = 2) {
  Certification<Scalar> c{propagate(sys, grid), {}};
  c.report = window_projector(c.cache, opts);
  for (int i = 0; i < doublings && c.report.failure == ErrorCode::NoGap; ++i) {
    grid = make_grid(2 * grid.t_min(), 2 * grid.t_max(), grid.step());
    try {
      auto cache = propagate(sys, grid);
      auto report = window_projector(cache, opts);
      c = Certification<Scalar>{std::move(cache), std::move(report)};
    } catch (const Error& e) {
      c.report.detail += std::string("; window doubling stopped: ") + e.what();
      break;
    }
  }
  return c;
}

/// Constants for bounded solutions of a dichotomic equation with growth
/// constants (alpha, beta) and inverse bound L:
///   C = 2 alpha e^beta max(1, L), N_step = 2 C^2 L (1 + 1e-6), rate = ln 2 / N_step,
/// and C_decay = 2C.
template <typename Scalar>
DecayConstants<Scalar> decay_constants(const GrowthEstimate<Scalar>& growth, Scalar inv_norm_bound) {
  using std::exp;
  if (!(inv_norm_bound > 0)) throw Error(ErrorCode::InvalidParameter, "inverse bound must be positive");
  DecayConstants<Scalar> d;
  d.inv_norm_bound = inv_norm_bound;
  d.C = 2 * growth.alpha * exp(growth.beta) * std::max(Scalar(1), inv_norm_bound);
  d.N_step = 2 * d.C * d.C * inv_norm_bound * (1 + Scalar(1e-6));
  d.rate = std::numbers::ln2_v<Scalar> / d.N_step;
  d.C_decay = 2 * d.C;
  return d;
}

/// Checks ||u(t)|| <= C_decay e^{-rate |t - s|} ||u(s)|| for the solution with
/// u(0) = x0, over grid pairs t >= s >= 0 (forward) or t <= s <= 0 (backward).
template <typename Scalar>
DecayCheck<Scalar> decay_check(const TransitionCache<Scalar>& cache, const std::type_identity_t<Vector<Scalar>>& x0,
                               Side side,
                               const DecayConstants<Scalar>& c, Scalar bound_screen = Scalar(1e3)) {
  using std::abs;
  using std::exp;
  using std::log;
  const auto& grid = cache.grid();
  const Index i0 = grid.index_of(Scalar(0));
  const Index end = side == Side::forward ? cache.size() - 1 : 0;
  const Index stride = side == Side::forward ? 1 : -1;
  DecayCheck<Scalar> out;
  const Scalar x_norm = x0.norm();
  if (x_norm == 0) {
    out.passed = true;
    out.margin = std::numeric_limits<Scalar>::infinity();
    out.measured_rate = std::numeric_limits<Scalar>::infinity();
    return out;
  }
  std::vector<Scalar> norms, times, logs;
  for (Index k = i0;; k += stride) {
    const Scalar nk = cache.apply(k, i0, x0).norm();
    if (nk > bound_screen * x_norm)
      throw Error(ErrorCode::NotBounded, "solution leaves the bounded screen at t = " +
                                             std::to_string(static_cast<double>(grid[k])));
    norms.push_back(nk);
    times.push_back(abs(grid[k]));
    if (nk > 0) logs.push_back(log(nk));
    if (k == end) break;
  }
  out.margin = std::numeric_limits<Scalar>::infinity();
  const Scalar h = grid.step();
  for (std::size_t s = 0; s < norms.size(); ++s)
    for (std::size_t t = s + 1; t < norms.size(); ++t) {
      if (norms[t] == 0) continue;
      const Scalar allowed = c.C_decay * exp(-c.rate * Scalar(t - s) * h) * norms[s];
      out.margin = std::min(out.margin, allowed / norms[t]);
    }
  if (logs.size() == norms.size()) {
    out.measured_rate = -least_squares_slope(times, logs);
  } else {
    out.measured_rate = std::numeric_limits<Scalar>::infinity();
  }
  out.passed = out.margin >= 1;
  return out;
}

}  // namespace edich
