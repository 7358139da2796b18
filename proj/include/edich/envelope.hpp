#pragma once

// Envelopes of ||transition(t, s) R_s|| over grid pairs, indexed by the
// separation |t - s| in grid steps. Used to fit growth and dichotomy constants
// and to verify them.

#include "edich/norms.hpp"
#include "edich/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace edich {

/// All pairs are swept when the grid has at most all_pairs_limit points,
/// otherwise random_pairs uniformly drawn pairs with a fixed seed.
struct PairSampling {
  Index all_pairs_limit{2000};
  Index random_pairs{1'000'000};
  std::uint64_t seed{0x5EED};
};

/// Drops pairs whose computed norm is dominated by rounding. A pair is kept
/// when ||transition(t, s)|| (right_error[s] + round ||R_s||) is at most
/// max_relative_error times ||transition(t, s) R_s||. Inactive without right_error.
template <typename Scalar>
struct ErrorScreen {
  const std::vector<Scalar>* right_error{nullptr};
  Scalar round{0};
  Scalar max_relative_error{1e-2};

  bool active() const { return right_error != nullptr; }
  bool keep(Scalar value, Scalar transition_norm, Scalar right_norm, Index s) const {
    if (!active()) return true;
    const Scalar err = transition_norm * ((*right_error)[static_cast<std::size_t>(s)] + round * right_norm);
    return err <= max_relative_error * value;
  }
};

/// forward: pairs with t >= s. backward: pairs with t <= s.
enum class SweepDirection { forward, backward };

template <typename Scalar>
struct Envelope {
  std::vector<Scalar> max_norm;  // negative where no pair was sampled
  std::vector<std::pair<Index, Index>> argmax;  // (t, s) grid indices
  Index screened{0};  // pairs dropped by an ErrorScreen

  explicit Envelope(Index count = 0)
      : max_norm(static_cast<std::size_t>(count), Scalar(-1)), argmax(static_cast<std::size_t>(count)) {}

  bool present(std::size_t d) const { return max_norm[d] >= 0; }

  void record(Index d, Scalar value, Index t, Index s) {
    auto& slot = max_norm[static_cast<std::size_t>(d)];
    if (value > slot) {
      slot = value;
      argmax[static_cast<std::size_t>(d)] = {t, s};
    }
  }
};

namespace detail {

template <int Dim, typename Cache, typename Scalar>
void sweep_all_pairs(const Cache& cache, SweepDirection dir, const std::vector<Matrix<Scalar>>* right,
                     const ErrorScreen<Scalar>& screen, Envelope<Scalar>& env) {
  using M = Eigen::Matrix<Scalar, Dim, Dim>;
  const Index count = cache.size();
  const Index n = cache.dim();
  std::vector<M, Eigen::aligned_allocator<M>> steps;
  steps.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k + 1 < count; ++k)
    steps.emplace_back(dir == SweepDirection::forward ? cache.step(k) : cache.step_inverse(k));
  const bool track = screen.active() && right;
  for (Index s = 0; s < count; ++s) {
    M m = right ? M((*right)[static_cast<std::size_t>(s)]) : M(M::Identity(n, n));
    M plain = M::Identity(n, n);
    const Scalar right_norm = track ? operator_norm(m) : Scalar(0);
    const auto visit = [&](Index t) {
      const Index d = t > s ? t - s : s - t;
      // ||m||_2 <= ||m||_F: pairs that cannot raise the envelope skip the SVD.
      const Scalar frob = m.norm();
      if (frob <= env.max_norm[static_cast<std::size_t>(d)]) return;
      const Scalar plain_norm = track ? plain.norm() : Scalar(0);
      if (track && !screen.keep(frob, plain_norm, right_norm, s)) {
        ++env.screened;
        return;
      }
      const Scalar value = operator_norm(m);
      if (track && !screen.keep(value, plain_norm, right_norm, s)) {
        ++env.screened;
        return;
      }
      env.record(d, value, t, s);
    };
    const auto advance = [&](const M& step) {
      m = (step * m).eval();
      if (track) plain = (step * plain).eval();
    };
    if (dir == SweepDirection::forward) {
      for (Index t = s;; ++t) {
        visit(t);
        if (t + 1 == count) break;
        advance(steps[static_cast<std::size_t>(t)]);
      }
    } else {
      for (Index t = s;; --t) {
        visit(t);
        if (t == 0) break;
        advance(steps[static_cast<std::size_t>(t - 1)]);
      }
    }
  }
}

}  // namespace detail

/// Envelope of ||transition(t, s) R_s|| by separation; R_s = I when right is null.
template <typename Cache>
Envelope<typename Cache::scalar_type> pair_envelope(
    const Cache& cache, SweepDirection dir, const std::vector<Matrix<typename Cache::scalar_type>>* right,
    const PairSampling& sampling = {}, const ErrorScreen<typename Cache::scalar_type>& screen = {}) {
  using Scalar = typename Cache::scalar_type;
  const Index count = cache.size();
  const Index n = cache.dim();
  Envelope<Scalar> env(count);
  if (count <= sampling.all_pairs_limit) {
    switch (n) {
      case 1: detail::sweep_all_pairs<1>(cache, dir, right, screen, env); break;
      case 2: detail::sweep_all_pairs<2>(cache, dir, right, screen, env); break;
      case 3: detail::sweep_all_pairs<3>(cache, dir, right, screen, env); break;
      case 4: detail::sweep_all_pairs<4>(cache, dir, right, screen, env); break;
      default: detail::sweep_all_pairs<Eigen::Dynamic>(cache, dir, right, screen, env); break;
    }
    return env;
  }
  const Matrix<Scalar> id = Matrix<Scalar>::Identity(n, n);
  const auto factor = [&](Index s) -> const Matrix<Scalar>& {
    return right ? (*right)[static_cast<std::size_t>(s)] : id;
  };
  const bool track = screen.active() && right;
  ErrorScreen<Scalar> anchored = screen;
  anchored.round *= cache.anchor_condition();
  for (Index s = 0; s < count; ++s) env.record(0, operator_norm(factor(s)), s, s);
  std::mt19937_64 rng(sampling.seed);
  std::uniform_int_distribution<Index> pick(0, count - 1);
  for (Index i = 0; i < sampling.random_pairs; ++i) {
    const Index a = pick(rng), b = pick(rng);
    const Index t = dir == SweepDirection::forward ? std::max(a, b) : std::min(a, b);
    const Index s = dir == SweepDirection::forward ? std::min(a, b) : std::max(a, b);
    const Matrix<Scalar> u = cache.transition(t, s);
    const Scalar value = operator_norm((u * factor(s)).eval());
    if (track && !anchored.keep(value, operator_norm(u), operator_norm(factor(s)), s)) {
      ++env.screened;
      continue;
    }
    env.record(t > s ? t - s : s - t, value, t, s);
  }
  return env;
}

template <typename Scalar>
Envelope<Scalar> merge_envelopes(const Envelope<Scalar>& a, const Envelope<Scalar>& b) {
  Envelope<Scalar> out = a;
  for (std::size_t d = 0; d < b.max_norm.size(); ++d)
    if (b.max_norm[d] > out.max_norm[d]) {
      out.max_norm[d] = b.max_norm[d];
      out.argmax[d] = b.argmax[d];
    }
  return out;
}

/// Least-squares slope of log(envelope) against separation time, over
/// separations >= 1 time unit (all positive separations if the window is shorter).
template <typename Scalar>
Scalar envelope_slope(const Envelope<Scalar>& env, Scalar h) {
  using std::log;
  std::vector<Scalar> x, y;
  const auto collect = [&](Scalar min_sep) {
    x.clear();
    y.clear();
    for (std::size_t d = 1; d < env.max_norm.size(); ++d) {
      const Scalar tau = Scalar(d) * h;
      if (tau + Scalar(1e-12) < min_sep || !(env.max_norm[d] > 0)) continue;
      x.push_back(tau);
      y.push_back(log(env.max_norm[d]));
    }
  };
  collect(Scalar(1));
  if (x.size() < 2) collect(Scalar(0));
  return least_squares_slope(x, y);
}

}  // namespace edich
