#pragma once

// Persistence of exponential dichotomy under bounded perturbations
// x' = (A(t) + B(t))x with sup ||B|| < (N1/nu1 + N2/nu2)^{-1}.

#include "edich/dichotomy.hpp"
#include "edich/errors.hpp"
#include "edich/propagator.hpp"
#include "edich/system.hpp"
#include "edich/types.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace edich {

template <typename Scalar>
struct RoughnessReport {
  Scalar threshold{0};
  Scalar b_norm{0};
  bool admissible{false};
  DichotomyReport<Scalar> original;
  DichotomyReport<Scalar> perturbed;
  GrowthEstimate<Scalar> growth;
  /// L / (1 - b L) when admissible.
  std::optional<Scalar> perturbed_inv_bound;
  /// Decay constants of the perturbed equation derived only from the original
  /// constants, the growth estimate and b_norm.
  std::optional<DecayConstants<Scalar>> certified;
  bool constants_traceable{false};
};

/// An unperturbed system certified once and reused across perturbations.
template <typename Scalar>
struct RoughnessBase {
  LinearSystem<Scalar> system;
  Certification<Scalar> certification;
  GrowthEstimate<Scalar> growth;
};

template <typename Scalar>
struct RoughnessOptions {
  WindowOptions<Scalar> window{};
  int doublings{2};
};

template <typename Scalar>
struct SweepRow {
  Scalar amplitude{0};
  std::optional<RoughnessReport<Scalar>> report;
  std::optional<ErrorCode> error;
  std::string message;
};

/// (N1/nu1 + N2/nu2)^{-1}; a vacuous side contributes nothing.
template <typename Scalar>
Scalar threshold(const DichotomyReport<Scalar>& report) {
  if (!report.dichotomic() || !report.constants)
    throw Error(ErrorCode::NotDichotomic, "threshold needs a dichotomic report");
  const Scalar inv = report.constants->inverse_bound();
  return inv > 0 ? 1 / inv : std::numeric_limits<Scalar>::infinity();
}

/// L / (1 - b L), a bound for the inverse of the perturbed operator.
template <typename Scalar>
Scalar neumann_bound(Scalar inv_norm_bound, Scalar b_norm) {
  if (!(inv_norm_bound >= 0) || !(b_norm >= 0))
    throw Error(ErrorCode::InvalidParameter, "neumann_bound needs nonnegative arguments");
  if (!(b_norm * inv_norm_bound < 1))
    throw Error(ErrorCode::NotAdmissible, "b_norm * inverse bound = " +
                                              std::to_string(static_cast<double>(b_norm * inv_norm_bound)) + " >= 1");
  return inv_norm_bound / (1 - b_norm * inv_norm_bound);
}

/// Growth constants of x' = (A + B)x from those of x' = Ax: alpha, beta + alpha b.
template <typename Scalar>
GrowthEstimate<Scalar> perturbed_growth(const GrowthEstimate<Scalar>& growth, Scalar b_norm) {
  GrowthEstimate<Scalar> g;
  g.alpha = growth.alpha;
  g.beta = growth.beta + growth.alpha * b_norm;
  return g;
}

template <typename Scalar>
DecayConstants<Scalar> certified_constants(const DichotomyConstants<Scalar>& constants,
                                           const GrowthEstimate<Scalar>& growth, Scalar b_norm) {
  return decay_constants(perturbed_growth(growth, b_norm), neumann_bound(constants.inverse_bound(), b_norm));
}

template <typename Scalar>
RoughnessBase<Scalar> certify_base(const LinearSystem<Scalar>& sys, const TimeGrid<Scalar>& grid,
                                   const RoughnessOptions<Scalar>& opts = {}) {
  auto c = certify(sys, grid, opts.window, opts.doublings);
  if (!c.report.dichotomic())
    throw Error(ErrorCode::NotDichotomic, "unperturbed system is " + std::string(to_string(c.report.verdict)) +
                                              (c.report.detail.empty() ? "" : ": " + c.report.detail));
  auto growth = estimate_growth(c.cache, opts.window.fit.sampling);
  return {sys, std::move(c), growth};
}

/// Certifies A + B on the window of the base certification, with b_norm the sup
/// of ||B|| over that window. Throws
/// TheoremViolationSuspected when B is admissible but A + B is not certified.
template <typename Scalar>
RoughnessReport<Scalar> perturb_and_verify(const RoughnessBase<Scalar>& base, const PerturbationSpec<Scalar>& b,
                                           const RoughnessOptions<Scalar>& opts = {}) {
  const auto& grid = base.certification.cache.grid();
  const PerturbationSpec<Scalar> on_window(b.dim(), b.coefficient(), grid);
  RoughnessReport<Scalar> r;
  r.original = base.certification.report;
  r.growth = base.growth;
  r.threshold = threshold(r.original);
  r.b_norm = on_window.sup_norm();
  r.admissible = r.b_norm < r.threshold;
  if (r.admissible) {
    const auto& c = *r.original.constants;
    r.perturbed_inv_bound = neumann_bound(c.inverse_bound(), r.b_norm);
    r.certified = certified_constants(c, r.growth, r.b_norm);
    r.constants_traceable = true;
  }
  r.perturbed = certify(perturbed(base.system, on_window), grid, opts.window, opts.doublings).report;
  if (r.admissible && !r.perturbed.dichotomic())
    throw Error(ErrorCode::TheoremViolationSuspected,
                "b_norm " + std::to_string(static_cast<double>(r.b_norm)) + " < threshold " +
                    std::to_string(static_cast<double>(r.threshold)) + " but the perturbed system is " +
                    std::string(to_string(r.perturbed.verdict)) +
                    (r.perturbed.detail.empty() ? "" : " (" + r.perturbed.detail + ")") +
                    "; the window may be too short or the grid too coarse");
  return r;
}

template <typename Scalar>
RoughnessReport<Scalar> perturb_and_verify(const LinearSystem<Scalar>& sys, const PerturbationSpec<Scalar>& b,
                                           const TimeGrid<Scalar>& grid, const RoughnessOptions<Scalar>& opts = {}) {
  return perturb_and_verify(certify_base(sys, grid, opts), b, opts);
}

/// One perturb_and_verify per amplitude along a unit direction, in order.
/// Row errors are recorded and the sweep continues.
template <typename Scalar>
std::vector<SweepRow<Scalar>> sweep(const RoughnessBase<Scalar>& base, const PerturbationSpec<Scalar>& direction,
                                    const std::vector<Scalar>& amplitudes, const RoughnessOptions<Scalar>& opts = {}) {
  using std::abs;
  if (abs(direction.sup_norm() - 1) > Scalar(1e-12))
    throw Error(ErrorCode::InvalidParameter, "sweep direction must have unit sup norm");
  std::vector<SweepRow<Scalar>> rows;
  rows.reserve(amplitudes.size());
  for (Scalar a : amplitudes) {
    SweepRow<Scalar> row;
    row.amplitude = a;
    try {
      row.report = perturb_and_verify(base, direction.scaled(a), opts);
    } catch (const Error& e) {
      row.error = e.code();
      row.message = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Scalar>
std::vector<SweepRow<Scalar>> sweep(const LinearSystem<Scalar>& sys, const PerturbationSpec<Scalar>& direction,
                                    const std::vector<Scalar>& amplitudes, const TimeGrid<Scalar>& grid,
                                    const RoughnessOptions<Scalar>& opts = {}) {
  if (amplitudes.empty()) return {};
  return sweep(certify_base(sys, grid, opts), direction, amplitudes, opts);
}

/// B(t) = M0 + sin(omega t + phi) M1 with standard normal M0, M1,
/// omega in [0.1, 1], phi in [0, 2 pi), rescaled to sup norm `target` on grid.
template <typename Scalar, typename Rng>
PerturbationSpec<Scalar> random_perturbation(Index dim, const TimeGrid<Scalar>& grid, Scalar target, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> freq(0.1, 1.0), phase(0.0, 2 * std::numbers::pi);
  auto m0 = std::make_shared<Matrix<Scalar>>(dim, dim);
  auto m1 = std::make_shared<Matrix<Scalar>>(dim, dim);
  for (Index i = 0; i < dim; ++i)
    for (Index j = 0; j < dim; ++j) {
      (*m0)(i, j) = static_cast<Scalar>(normal(rng));
      (*m1)(i, j) = static_cast<Scalar>(normal(rng));
    }
  const Scalar omega = static_cast<Scalar>(freq(rng));
  const Scalar phi = static_cast<Scalar>(phase(rng));
  const PerturbationSpec<Scalar> b(
      dim,
      [m0, m1, omega, phi](Scalar t) {
        using std::sin;
        return Matrix<Scalar>(*m0 + sin(omega * t + phi) * *m1);
      },
      grid);
  return b.normalized(target);
}

}  // namespace edich
