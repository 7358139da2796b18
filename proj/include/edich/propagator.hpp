#pragma once

// Cauchy operator U(t)U^{-1}(s) of x' = A(t)x on a uniform grid, and the
// exponential growth constants ||U(t)U^{-1}(s)|| <= alpha e^{beta |t - s|}.

#include "edich/envelope.hpp"
#include "edich/errors.hpp"
#include "edich/norms.hpp"
#include "edich/system.hpp"
#include "edich/types.hpp"

#include <Eigen/LU>

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace edich {

template <typename Scalar>
struct PropagateOptions {
  /// A new anchor segment starts once the running fundamental matrix reaches this
  /// condition number, so every stored factor stays well conditioned.
  Scalar segment_condition{1e3};
  Scalar max_norm{1e150};
  Scalar max_condition{1e14};
  int cocycle_samples{100};
  std::uint64_t seed{0x5EED};
};

/// Sampled Cauchy operator of x' = A(t)x.
///
/// Storage is segmented: within a segment, local(k) = transition(t_k, anchor),
/// and consecutive anchors are joined by link matrices. transition(t, s) is
/// assembled from these well-conditioned factors, so long windows with strong
/// dichotomies do not lose the contracting directions to cancellation in a
/// single ill-conditioned U(t). The fundamental matrix with U(t_min) = I is
/// available through fundamental().
template <typename Scalar>
class TransitionCache {
 public:
  using scalar_type = Scalar;
  using MatrixType = Matrix<Scalar>;
  using VectorType = Vector<Scalar>;
  static constexpr int order = 4;

  const TimeGrid<Scalar>& grid() const { return grid_; }
  Index dim() const { return n_; }
  Index size() const { return grid_.size(); }
  Scalar cocycle_defect() const { return cocycle_defect_; }
  Index segment_count() const { return static_cast<Index>(anchor_.size()); }
  /// Bound on the condition number of the stored anchor factors; transition()
  /// carries rounding errors of about this many ulps relative to its norm.
  Scalar anchor_condition() const { return anchor_condition_; }

  /// A(t_k) as used by the integrator.
  const MatrixType& coefficient(Index k) const { return coeff_[idx(k)]; }
  /// One-step map transition(t_{k+1}, t_k).
  const MatrixType& step(Index k) const { return step_[idx(k)]; }
  /// transition(t_k, t_{k+1}).
  const MatrixType& step_inverse(Index k) const { return step_inv_[idx(k)]; }

  MatrixType transition(Index k, Index j) const {
    check_index(k);
    check_index(j);
    if (k == j) return MatrixType::Identity(n_, n_);
    const Index sk = segment_of_[idx(k)];
    const Index sj = segment_of_[idx(j)];
    if (k > j) {
      MatrixType m = local_[idx(k)];
      for (Index i = sk - 1; i >= sj; --i) m = m * link_[idx(i)];
      return local_lu_t_[idx(j)].solve(m.transpose()).transpose();
    }
    MatrixType w = local_lu_[idx(j)].solve(MatrixType::Identity(n_, n_));
    for (Index i = sj - 1; i >= sk; --i) w = link_lu_[idx(i)].solve(w);
    return local_[idx(k)] * w;
  }

  MatrixType transition_at(Scalar t, Scalar s) const {
    return transition(grid_.index_of(t), grid_.index_of(s));
  }

  /// transition(t_k, t_j) x without forming the matrix.
  VectorType apply(Index k, Index j, const VectorType& x) const {
    check_index(k);
    check_index(j);
    if (k == j) return x;
    const Index sk = segment_of_[idx(k)];
    const Index sj = segment_of_[idx(j)];
    VectorType v = local_lu_[idx(j)].solve(x);
    if (k > j) {
      for (Index i = sj; i < sk; ++i) v = link_[idx(i)] * v;
    } else {
      for (Index i = sj - 1; i >= sk; --i) v = link_lu_[idx(i)].solve(v);
    }
    return local_[idx(k)] * v;
  }

  MatrixType fundamental(Index k) const { return transition(k, 0); }

  /// transition(t_k, t_j) as a plain product of step maps, O(|k - j|). Rounding
  /// stays at the level of each step instead of the anchor conditioning.
  MatrixType chained_transition(Index k, Index j) const {
    check_index(k);
    check_index(j);
    MatrixType m = MatrixType::Identity(n_, n_);
    if (k > j)
      for (Index i = j; i < k; ++i) m = step_[idx(i)] * m;
    else
      for (Index i = j; i > k; --i) m = step_inv_[idx(i - 1)] * m;
    return m;
  }

 private:
  template <typename S>
  friend TransitionCache<S> propagate(const LinearSystem<S>&, const TimeGrid<S>&, const PropagateOptions<S>&);

  static std::size_t idx(Index k) { return static_cast<std::size_t>(k); }
  void check_index(Index k) const {
    if (k < 0 || k >= grid_.size()) throw Error(ErrorCode::OffGrid, "grid index out of range");
  }

  TimeGrid<Scalar> grid_;
  Index n_{0};
  std::vector<MatrixType> coeff_;
  std::vector<MatrixType> step_;
  std::vector<MatrixType> step_inv_;
  std::vector<MatrixType> local_;
  std::vector<Eigen::PartialPivLU<MatrixType>> local_lu_;
  std::vector<Eigen::PartialPivLU<MatrixType>> local_lu_t_;  // of local^T, for right division
  std::vector<Index> segment_of_;
  std::vector<Index> anchor_;
  std::vector<MatrixType> link_;
  std::vector<Eigen::PartialPivLU<MatrixType>> link_lu_;
  Scalar cocycle_defect_{0};
  Scalar anchor_condition_{1};
};

/// One classical Runge-Kutta step of U' = A(t)U started from the identity.
template <typename Scalar>
Matrix<Scalar> rk4_step_map(const Matrix<Scalar>& a0, const Matrix<Scalar>& a_mid, const Matrix<Scalar>& a1,
                            Scalar h) {
  const Index n = a0.rows();
  const Matrix<Scalar> id = Matrix<Scalar>::Identity(n, n);
  const Matrix<Scalar> k1 = a0;
  const Matrix<Scalar> k2 = a_mid * (id + (h / 2) * k1);
  const Matrix<Scalar> k3 = a_mid * (id + (h / 2) * k2);
  const Matrix<Scalar> k4 = a1 * (id + h * k3);
  return id + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

/// Fourth-order fixed-step propagation of the fundamental matrix over the grid.
template <typename Scalar>
TransitionCache<Scalar> propagate(const LinearSystem<Scalar>& sys, const TimeGrid<Scalar>& grid,
                                  const PropagateOptions<Scalar>& opts = {}) {
  using std::log;
  using MatrixType = Matrix<Scalar>;
  if (!sys.covers(grid)) throw Error(ErrorCode::OutOfDomain, "grid extends beyond the system domain");
  const Index n = sys.dim();
  const Index count = grid.size();
  const Scalar h = grid.step();
  const MatrixType id = MatrixType::Identity(n, n);
  const auto uz = [](Index k) { return static_cast<std::size_t>(k); };

  TransitionCache<Scalar> cache;
  cache.grid_ = grid;
  cache.n_ = n;
  cache.anchor_condition_ = opts.segment_condition;
  cache.coeff_.reserve(uz(count));
  cache.step_.reserve(uz(count - 1));
  cache.step_inv_.reserve(uz(count - 1));
  cache.local_.reserve(uz(count));
  cache.local_lu_.reserve(uz(count));
  cache.local_lu_t_.reserve(uz(count));
  cache.segment_of_.reserve(uz(count));

  cache.coeff_.push_back(sys(grid[0]));
  cache.local_.push_back(id);
  cache.local_lu_.emplace_back(id);
  cache.local_lu_t_.emplace_back(id);
  cache.segment_of_.push_back(0);
  cache.anchor_.push_back(0);

  const Scalar log_max_norm = log(opts.max_norm);
  Scalar log_links = 0;  // sum of log ||link||, bounds log ||U(t_k)||
  MatrixType local = id;
  for (Index k = 0; k + 1 < count; ++k) {
    const Scalar t = grid[k];
    const MatrixType a_mid = sys(t + h / 2);
    cache.coeff_.push_back(sys(grid[k + 1]));
    MatrixType phi = rk4_step_map(cache.coeff_[uz(k)], a_mid, cache.coeff_[uz(k + 1)], h);
    if (!phi.allFinite() || operator_norm(phi) > opts.max_norm)
      throw Error(ErrorCode::StepUnstable, "step map blew up at t = " + std::to_string(static_cast<double>(t)));
    if (condition_number(phi) > opts.max_condition)
      throw Error(ErrorCode::SingularTransition,
                  "step map is numerically singular at t = " + std::to_string(static_cast<double>(t)));
    Eigen::PartialPivLU<MatrixType> phi_lu(phi);
    cache.step_inv_.push_back(phi_lu.solve(id));
    cache.step_.push_back(std::move(phi));

    MatrixType next = cache.step_.back() * local;
    const Scalar cond = condition_number(next);
    if (!next.allFinite() || !(cond < opts.max_condition))
      throw Error(ErrorCode::SingularTransition,
                  "fundamental matrix lost invertibility at t = " + std::to_string(static_cast<double>(t)));
    if (cond > opts.segment_condition) {
      log_links += log(operator_norm(next));
      cache.link_lu_.emplace_back(next);
      cache.link_.push_back(std::move(next));
      cache.anchor_.push_back(k + 1);
      local = id;
    } else {
      local = std::move(next);
    }
    if (log_links + log(operator_norm(local)) > log_max_norm)
      throw Error(ErrorCode::StepUnstable,
                  "||U|| exceeds the overflow guard at t = " + std::to_string(static_cast<double>(grid[k + 1])));
    cache.local_.push_back(local);
    cache.local_lu_.emplace_back(local);
    cache.local_lu_t_.emplace_back(local.transpose());
    cache.segment_of_.push_back(static_cast<Index>(cache.anchor_.size()) - 1);
  }

  // Cocycle spot check on random grid triples.
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<Index> pick(0, count - 1);
  Scalar defect = 0;
  for (int i = 0; i < opts.cocycle_samples; ++i) {
    const Index t = pick(rng), s = pick(rng), r = pick(rng);
    const MatrixType direct = cache.transition(t, r);
    const MatrixType composed = cache.transition(t, s) * cache.transition(s, r);
    const Scalar scale = std::max(Scalar(1), operator_norm(direct));
    defect = std::max(defect, operator_norm((composed - direct).eval()) / scale);
  }
  cache.cocycle_defect_ = defect;
  return cache;
}

template <typename Scalar>
struct GrowthEstimate {
  Scalar alpha{1};
  Scalar beta{0};
  /// Grid times (t, t0) where ||transition(t, t0)|| = alpha e^{beta |t - t0|}.
  std::pair<Scalar, Scalar> attained_at{0, 0};

  Scalar bound(Scalar separation) const {
    using std::abs;
    using std::exp;
    return alpha * exp(beta * abs(separation));
  }
};

/// Fits alpha >= 1, beta >= 0 so that ||transition(t, s)|| <= alpha e^{beta |t - s|}
/// holds on every sampled grid pair, in both time orders.
///
/// beta is the least-squares slope of the log envelope over separations >= 1;
/// alpha is then the smallest constant making the envelope hold exactly.
template <typename Scalar>
GrowthEstimate<Scalar> estimate_growth(const TransitionCache<Scalar>& cache,
                                       const PairSampling& sampling = {}) {
  using std::exp;
  const auto fwd = pair_envelope(cache, SweepDirection::forward, nullptr, sampling);
  const auto bwd = pair_envelope(cache, SweepDirection::backward, nullptr, sampling);
  const auto env = merge_envelopes(fwd, bwd);
  const Scalar h = cache.grid().step();
  GrowthEstimate<Scalar> g;
  g.beta = std::max(Scalar(0), envelope_slope(env, h));
  Scalar best = -1;
  std::size_t best_d = 0;
  for (std::size_t d = 0; d < env.max_norm.size(); ++d) {
    if (!env.present(d)) continue;
    const Scalar v = env.max_norm[d] * exp(-g.beta * Scalar(d) * h);
    if (v > best) {
      best = v;
      best_d = d;
    }
  }
  g.alpha = std::max(Scalar(1), best);
  const auto [t, s] = env.argmax[best_d];
  g.attained_at = std::make_pair(cache.grid()[t], cache.grid()[s]);
  return g;
}

}  // namespace edich
