#pragma once

// Time grids, coefficient functions A(t) of x' = A(t)x, and perturbations.

#include "edich/errors.hpp"
#include "edich/norms.hpp"
#include "edich/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace edich {

template <typename Scalar>
class TimeGrid {
 public:
  TimeGrid() = default;

  /// Uniform grid t_min + k*h covering [t_min, t_max]. The point count must be
  /// an integer to within 1e-12 (relative); the last point is t_max exactly.
  static TimeGrid make(Scalar t_min, Scalar t_max, Scalar h) {
    using std::abs;
    using std::round;
    if (!std::isfinite(static_cast<double>(t_min)) || !std::isfinite(static_cast<double>(t_max)) ||
        !std::isfinite(static_cast<double>(h)))
      throw Error(ErrorCode::InvalidGrid, "grid parameters must be finite");
    if (!(t_min < t_max)) throw Error(ErrorCode::InvalidGrid, "t_min must be < t_max");
    if (!(h > 0)) throw Error(ErrorCode::InvalidGrid, "step must be positive");
    const Scalar intervals = (t_max - t_min) / h;
    if (intervals > Scalar(kMaxGridPoints))
      throw Error(ErrorCode::InvalidGrid, "grid exceeds 1e7 intervals");
    const Scalar rounded = round(intervals);
    if (rounded < 1 || abs(intervals - rounded) > Scalar(1e-12) * std::max(Scalar(1), rounded))
      throw Error(ErrorCode::InvalidGrid, "(t_max - t_min)/h is not an integer");
    TimeGrid g;
    g.t_min_ = t_min;
    g.t_max_ = t_max;
    g.h_ = h;
    const auto count = static_cast<Index>(rounded) + 1;
    g.points_.resize(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) g.points_[static_cast<std::size_t>(k)] = t_min + Scalar(k) * h;
    g.points_.back() = t_max;
    return g;
  }

  Scalar t_min() const { return t_min_; }
  Scalar t_max() const { return t_max_; }
  Scalar step() const { return h_; }
  Index size() const { return static_cast<Index>(points_.size()); }
  Scalar operator[](Index k) const { return points_[static_cast<std::size_t>(k)]; }
  const std::vector<Scalar>& points() const { return points_; }

  std::optional<Index> find(Scalar t) const {
    using std::abs;
    using std::round;
    const Scalar pos = (t - t_min_) / h_;
    const Scalar r = round(pos);
    if (r < 0 || r > Scalar(size() - 1)) return std::nullopt;
    const auto k = static_cast<Index>(r);
    if (abs((*this)[k] - t) > Scalar(1e-9) * h_) return std::nullopt;
    return k;
  }

  Index index_of(Scalar t) const {
    if (auto k = find(t)) return *k;
    std::ostringstream os;
    os << "time " << static_cast<double>(t) << " is not a grid point";
    throw Error(ErrorCode::OffGrid, os.str());
  }

  /// True when the grid is [-T, T] and contains t = 0.
  bool symmetric() const {
    using std::abs;
    return abs(t_min_ + t_max_) <= Scalar(1e-9) * h_ && find(Scalar(0)).has_value();
  }

 private:
  Scalar t_min_{0};
  Scalar t_max_{0};
  Scalar h_{0};
  std::vector<Scalar> points_;
};

template <typename Scalar>
TimeGrid<Scalar> make_grid(Scalar t_min, Scalar t_max, Scalar h) {
  return TimeGrid<Scalar>::make(t_min, t_max, h);
}

enum class SystemKind { constant, builtin_parametric, sampled };

constexpr std::string_view to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::constant: return "constant";
    case SystemKind::builtin_parametric: return "builtin-parametric";
    case SystemKind::sampled: return "sampled";
  }
  return "unknown";
}

template <typename Scalar>
using ParameterMap = std::map<std::string, std::vector<Scalar>>;

template <typename Scalar>
class LinearSystem {
 public:
  using Coefficient = std::function<Matrix<Scalar>(Scalar)>;

  LinearSystem(std::string name, Index dim, SystemKind kind, Coefficient a,
               ParameterMap<Scalar> params = {},
               Scalar domain_lo = -std::numeric_limits<Scalar>::infinity(),
               Scalar domain_hi = std::numeric_limits<Scalar>::infinity())
      : name_(std::move(name)),
        dim_(dim),
        kind_(kind),
        a_(std::move(a)),
        params_(std::move(params)),
        lo_(domain_lo),
        hi_(domain_hi) {
    if (dim_ < 1 || dim_ > kMaxDimension)
      throw Error(ErrorCode::DimensionError, "dimension must be in [1, 64]");
  }

  static LinearSystem constant(std::string name, Matrix<Scalar> a, ParameterMap<Scalar> params = {}) {
    if (a.rows() != a.cols()) throw Error(ErrorCode::DimensionError, "coefficient must be square");
    if (!a.allFinite()) throw Error(ErrorCode::InvalidParameter, "coefficient must be finite");
    const Index n = a.rows();
    auto shared = std::make_shared<const Matrix<Scalar>>(std::move(a));
    return LinearSystem(std::move(name), n, SystemKind::constant,
                        [shared](Scalar) { return *shared; }, std::move(params));
  }

  Matrix<Scalar> operator()(Scalar t) const {
    if (t < lo_ || t > hi_) {
      std::ostringstream os;
      os << "t = " << static_cast<double>(t) << " outside [" << static_cast<double>(lo_) << ", "
         << static_cast<double>(hi_) << "]";
      throw Error(ErrorCode::OutOfDomain, os.str());
    }
    Matrix<Scalar> m = a_(t);
    if (m.rows() != dim_ || m.cols() != dim_)
      throw Error(ErrorCode::DimensionError, "coefficient has wrong shape");
    if (!m.allFinite()) throw Error(ErrorCode::InvalidParameter, "coefficient is not finite");
    return m;
  }

  const std::string& name() const { return name_; }
  Index dim() const { return dim_; }
  SystemKind kind() const { return kind_; }
  const ParameterMap<Scalar>& params() const { return params_; }
  Scalar domain_lo() const { return lo_; }
  Scalar domain_hi() const { return hi_; }
  bool covers(const TimeGrid<Scalar>& g) const { return g.t_min() >= lo_ && g.t_max() <= hi_; }
  const Coefficient& coefficient() const { return a_; }

 private:
  std::string name_;
  Index dim_;
  SystemKind kind_;
  Coefficient a_;
  ParameterMap<Scalar> params_;
  Scalar lo_;
  Scalar hi_;
};

/// B(t) together with its sup over a grid of the spectral norm.
template <typename Scalar>
class PerturbationSpec {
 public:
  using Coefficient = std::function<Matrix<Scalar>(Scalar)>;

  PerturbationSpec(Index dim, Coefficient b, const TimeGrid<Scalar>& grid)
      : dim_(dim), b_(std::move(b)), grid_(grid) {
    sup_norm_ = 0;
    for (Scalar t : grid_.points()) {
      const Matrix<Scalar> m = b_(t);
      if (m.rows() != dim_ || m.cols() != dim_)
        throw Error(ErrorCode::DimensionError, "perturbation has wrong shape");
      if (!m.allFinite()) throw Error(ErrorCode::InvalidParameter, "perturbation is not finite");
      sup_norm_ = std::max(sup_norm_, operator_norm(m));
    }
  }

  static PerturbationSpec constant(const Matrix<Scalar>& b, const TimeGrid<Scalar>& grid) {
    auto shared = std::make_shared<const Matrix<Scalar>>(b);
    return PerturbationSpec(b.rows(), [shared](Scalar) { return *shared; }, grid);
  }

  PerturbationSpec scaled(Scalar c) const {
    auto inner = b_;
    return PerturbationSpec(dim_, [inner, c](Scalar t) { return Matrix<Scalar>(c * inner(t)); }, grid_);
  }

  /// Rescaled copy whose grid sup norm equals target (zero stays zero).
  PerturbationSpec normalized(Scalar target) const {
    if (!(sup_norm_ > 0)) return *this;
    return scaled(target / sup_norm_);
  }

  Matrix<Scalar> operator()(Scalar t) const { return b_(t); }
  Index dim() const { return dim_; }
  Scalar sup_norm() const { return sup_norm_; }
  const TimeGrid<Scalar>& grid() const { return grid_; }
  const Coefficient& coefficient() const { return b_; }

 private:
  Index dim_;
  Coefficient b_;
  TimeGrid<Scalar> grid_;
  Scalar sup_norm_{0};
};

/// The system x' = (A(t) + B(t))x.
template <typename Scalar>
LinearSystem<Scalar> perturbed(const LinearSystem<Scalar>& sys, const PerturbationSpec<Scalar>& b) {
  if (b.dim() != sys.dim()) throw Error(ErrorCode::DimensionError, "perturbation dimension mismatch");
  auto a = sys.coefficient();
  auto bf = b.coefficient();
  return LinearSystem<Scalar>(sys.name() + "+B", sys.dim(), SystemKind::builtin_parametric,
                              [a, bf](Scalar t) { return Matrix<Scalar>(a(t) + bf(t)); }, sys.params(),
                              sys.domain_lo(), sys.domain_hi());
}

namespace detail {

template <typename Scalar>
std::vector<Scalar> param_or(const ParameterMap<Scalar>& params, const std::string& key,
                             std::vector<Scalar> fallback) {
  auto it = params.find(key);
  return it == params.end() ? std::move(fallback) : it->second;
}

template <typename Scalar>
Scalar scalar_param(const ParameterMap<Scalar>& params, const std::string& key, Scalar fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  if (it->second.size() != 1)
    throw Error(ErrorCode::InvalidParameter, "parameter '" + key + "' must be a single value");
  return it->second.front();
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 2> rotation(Scalar angle) {
  using std::cos;
  using std::sin;
  Eigen::Matrix<Scalar, 2, 2> r;
  r << cos(angle), -sin(angle), sin(angle), cos(angle);
  return r;
}

}  // namespace detail

/// Names accepted by builtin().
inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"const_diag", "const_full", "rotating_hyperbolic",
                                              "periodic_hyperbolic", "no_dichotomy_shear"};
  return names;
}

/// Builtin catalog.
///
///   const_diag          A = diag(d). Params: d (default {-1, 1}). Dichotomic iff no d_i is 0.
///   const_full          A given row-major. Params: a (n^2 entries, default [[0,1],[1,0]]).
///                       Dichotomic iff A has no eigenvalue on the imaginary axis.
///   rotating_hyperbolic A(t) = R(wt) diag(-1,1) R(wt)^T + w J, J the rotation generator.
///                       Params: omega (default 0.1). Solutions are R(wt) e^{diag(-1,1) t} x0,
///                       so it is dichotomic with N = 1, nu = 1 for every omega.
///   periodic_hyperbolic A(t) = [[-1 + a cos(wt), c], [0, 1 + a sin(wt)]].
///                       Params: a (0.5), c (0.5), omega (1). Dichotomic for |a| < 1.
///   no_dichotomy_shear  A = [[0, s], [0, 0]]. Params: s (default 1). Polynomial growth,
///                       never dichotomic.
template <typename Scalar>
LinearSystem<Scalar> builtin(const std::string& name, const ParameterMap<Scalar>& params = {}) {
  using detail::param_or;
  using detail::scalar_param;
  if (name == "const_diag") {
    const auto d = param_or<Scalar>(params, "d", {Scalar(-1), Scalar(1)});
    if (d.empty()) throw Error(ErrorCode::InvalidParameter, "const_diag needs at least one entry");
    Vector<Scalar> v(static_cast<Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) v(static_cast<Index>(i)) = d[i];
    ParameterMap<Scalar> p{{"d", d}};
    return LinearSystem<Scalar>::constant(name, v.asDiagonal().toDenseMatrix(), p);
  }
  if (name == "const_full") {
    const auto a = param_or<Scalar>(params, "a", {Scalar(0), Scalar(1), Scalar(1), Scalar(0)});
    const auto n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(a.size()))));
    if (n < 1 || static_cast<std::size_t>(n * n) != a.size())
      throw Error(ErrorCode::DimensionError, "const_full needs n^2 entries");
    Matrix<Scalar> m(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) m(i, j) = a[static_cast<std::size_t>(i * n + j)];
    ParameterMap<Scalar> p{{"a", a}};
    return LinearSystem<Scalar>::constant(name, m, p);
  }
  if (name == "rotating_hyperbolic") {
    const Scalar omega = scalar_param(params, "omega", Scalar(0.1));
    ParameterMap<Scalar> p{{"omega", {omega}}};
    return LinearSystem<Scalar>(
        name, 2, SystemKind::builtin_parametric,
        [omega](Scalar t) {
          const auto r = detail::rotation(omega * t);
          Eigen::Matrix<Scalar, 2, 2> d = Eigen::Matrix<Scalar, 2, 2>::Zero();
          d(0, 0) = -1;
          d(1, 1) = 1;
          Eigen::Matrix<Scalar, 2, 2> j;
          j << 0, -1, 1, 0;
          return Matrix<Scalar>(r * d * r.transpose() + omega * j);
        },
        p);
  }
  if (name == "periodic_hyperbolic") {
    const Scalar a = scalar_param(params, "a", Scalar(0.5));
    const Scalar c = scalar_param(params, "c", Scalar(0.5));
    const Scalar omega = scalar_param(params, "omega", Scalar(1));
    ParameterMap<Scalar> p{{"a", {a}}, {"c", {c}}, {"omega", {omega}}};
    return LinearSystem<Scalar>(
        name, 2, SystemKind::builtin_parametric,
        [a, c, omega](Scalar t) {
          using std::cos;
          using std::sin;
          Matrix<Scalar> m(2, 2);
          m << -1 + a * cos(omega * t), c, 0, 1 + a * sin(omega * t);
          return m;
        },
        p);
  }
  if (name == "no_dichotomy_shear") {
    const Scalar s = scalar_param(params, "s", Scalar(1));
    Matrix<Scalar> m(2, 2);
    m << 0, s, 0, 0;
    ParameterMap<Scalar> p{{"s", {s}}};
    return LinearSystem<Scalar>::constant(name, m, p);
  }
  throw Error(ErrorCode::UnknownSystem, "no builtin system named '" + name + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Rows of a numeric CSV. '#' lines and blank lines are skipped; an optional
/// first non-numeric row is treated as the header.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline NumericTable read_numeric_csv(std::istream& in) {
  NumericTable table;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = split_commas(t);
    if (first) {
      first = false;
      if (!parse_double(fields.front())) {
        table.header = fields;
        continue;
      }
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      auto v = parse_double(f);
      if (!v || !std::isfinite(*v))
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line_no) + ": malformed number '" + f + "'");
      row.push_back(*v);
    }
    if (!table.rows.empty() && row.size() != table.rows.front().size())
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": inconsistent column count");
    table.rows.push_back(std::move(row));
  }
  if (!table.header.empty() && !table.rows.empty() && table.header.size() != table.rows.front().size())
    throw Error(ErrorCode::ParseError, "header column count does not match data");
  return table;
}

/// Piecewise-linear interpolation of matrix samples; exact at sample times.
template <typename Scalar>
struct PiecewiseLinear {
  std::vector<Scalar> times;
  std::vector<Matrix<Scalar>> values;

  Matrix<Scalar> operator()(Scalar t) const {
    if (t < times.front() || t > times.back())
      throw Error(ErrorCode::OutOfDomain, "query outside sampled range");
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.end()) return values.back();
    const auto hi = static_cast<std::size_t>(it - times.begin());
    const auto lo = hi - 1;
    if (t == times[lo]) return values[lo];
    const Scalar w = (t - times[lo]) / (times[hi] - times[lo]);
    return (Scalar(1) - w) * values[lo] + w * values[hi];
  }
};

}  // namespace detail

/// Sampled A(t) from CSV `t,a11,a12,...,ann`; piecewise-linear between samples.
template <typename Scalar>
LinearSystem<Scalar> load_sampled(std::istream& in, const std::string& name = "sampled") {
  const auto table = detail::read_numeric_csv(in);
  if (table.rows.size() < 2) throw Error(ErrorCode::ParseError, "need at least two sample rows");
  const std::size_t entries = table.rows.front().size() - 1;
  const auto n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(entries))));
  if (entries == 0 || static_cast<std::size_t>(n * n) != entries)
    throw Error(ErrorCode::DimensionError,
                std::to_string(entries + 1) + " columns is not n^2 + 1 for an integer n");
  if (n > kMaxDimension) throw Error(ErrorCode::DimensionError, "dimension exceeds 64");
  detail::PiecewiseLinear<Scalar> interp;
  for (const auto& row : table.rows) {
    const auto t = static_cast<Scalar>(row[0]);
    if (!interp.times.empty() && !(t > interp.times.back()))
      throw Error(ErrorCode::NonMonotoneTime, "sample times must be strictly increasing");
    Matrix<Scalar> m(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) m(i, j) = static_cast<Scalar>(row[static_cast<std::size_t>(1 + i * n + j)]);
    interp.times.push_back(t);
    interp.values.push_back(std::move(m));
  }
  const Scalar lo = interp.times.front();
  const Scalar hi = interp.times.back();
  auto shared = std::make_shared<const detail::PiecewiseLinear<Scalar>>(std::move(interp));
  return LinearSystem<Scalar>(name, n, SystemKind::sampled, [shared](Scalar t) { return (*shared)(t); }, {},
                              lo, hi);
}

template <typename Scalar>
LinearSystem<Scalar> load_sampled(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  return load_sampled<Scalar>(in, path);
}

}  // namespace edich
