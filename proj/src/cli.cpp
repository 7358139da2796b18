#include "edich/cli.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

namespace edich::cli {

namespace {

using json = nlohmann::json;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

double number(const json& j, const char* key) {
  if (!j.is_number()) config_error(std::string("'") + key + "' must be a number");
  return j.get<double>();
}

Matrix<double> matrix_from(const json& j) {
  if (!j.is_array() || j.empty()) config_error("matrix must be a non-empty array of rows");
  const auto n = static_cast<Index>(j.size());
  Matrix<double> m(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != n) config_error("matrix must be square");
    for (Index k = 0; k < n; ++k) m(i, k) = number(row[static_cast<std::size_t>(k)], "matrix entry");
  }
  return m;
}

json matrix_json(const Matrix<double>& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void check_readable(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
}

std::string forcing_file(const std::string& spec) {
  return spec.rfind("file:", 0) == 0 ? spec.substr(5) : std::string();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + path.string() + "'");
  out << content;
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw Error(ErrorCode::ConfigError, "cannot create '" + cfg.out_dir.string() + "': " + ec.message());
}

Certification<double> analyze(const RunConfig& cfg) {
  return certify(make_system(cfg), make_run_grid(cfg), WindowOptions<double>{}, cfg.doublings);
}

std::string constants_line(const DichotomyConstants<double>& c) {
  std::ostringstream os;
  os << "N1 = " << format_number(c.stable.N) << ", nu1 = " << format_number(c.stable.nu)
     << (c.stable.vacuous ? " (vacuous)" : "") << "; N2 = " << format_number(c.unstable.N)
     << ", nu2 = " << format_number(c.unstable.nu) << (c.unstable.vacuous ? " (vacuous)" : "");
  return os.str();
}

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) config_error("config must be a JSON object");
  RunConfig cfg;
  if (!doc.contains("system")) config_error("missing 'system'");
  const auto& sys = doc.at("system");
  if (sys.is_string()) {
    cfg.system_name = sys.get<std::string>();
  } else if (sys.is_object()) {
    if (sys.contains("file")) {
      cfg.sampled_path = sys.at("file").get<std::string>();
      cfg.system_name = *cfg.sampled_path;
    } else if (sys.contains("builtin")) {
      cfg.system_name = sys.at("builtin").get<std::string>();
    } else {
      config_error("'system' needs 'builtin' or 'file'");
    }
    if (sys.contains("params")) {
      for (const auto& [key, value] : sys.at("params").items()) {
        std::vector<double> v;
        if (value.is_number()) {
          v.push_back(value.get<double>());
        } else if (value.is_array()) {
          for (const auto& x : value) v.push_back(number(x, key.c_str()));
        } else {
          config_error("parameter '" + key + "' must be a number or array");
        }
        cfg.params[key] = std::move(v);
      }
    }
  } else {
    config_error("'system' must be a name or an object");
  }
  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    if (g.contains("t_min")) cfg.t_min = number(g.at("t_min"), "t_min");
    if (g.contains("t_max")) cfg.t_max = number(g.at("t_max"), "t_max");
    if (g.contains("h")) cfg.h = number(g.at("h"), "h");
  }
  if (doc.contains("doublings")) cfg.doublings = doc.at("doublings").get<int>();
  if (doc.contains("forcing")) cfg.forcing = doc.at("forcing").get<std::string>();
  if (doc.contains("perturbation")) {
    const auto& p = doc.at("perturbation");
    if (p.contains("amplitude")) cfg.perturbation.amplitude = number(p.at("amplitude"), "amplitude");
    if (p.contains("matrix")) cfg.perturbation.matrix = matrix_from(p.at("matrix"));
  }
  if (doc.contains("amplitudes")) {
    if (!doc.at("amplitudes").is_array()) config_error("'amplitudes' must be an array");
    for (const auto& a : doc.at("amplitudes")) cfg.amplitudes.push_back(number(a, "amplitudes"));
  }
  if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();

  if (cfg.sampled_path) {
    check_readable(*cfg.sampled_path);
    load_sampled<double>(*cfg.sampled_path);
  } else {
    builtin<double>(cfg.system_name, cfg.params);
  }
  if (const auto path = forcing_file(cfg.forcing); !path.empty()) check_readable(path);
  make_run_grid(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "config '" + path.string() + "': " + e.what());
  }
  try {
    return parse_config(doc);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

LinearSystem<double> make_system(const RunConfig& cfg) {
  if (cfg.sampled_path) return load_sampled<double>(*cfg.sampled_path);
  return builtin<double>(cfg.system_name, cfg.params);
}

TimeGrid<double> make_run_grid(const RunConfig& cfg) { return make_grid(cfg.t_min, cfg.t_max, cfg.h); }

ForcingFunction<double> parse_forcing(const std::string& spec, Index dim, const TimeGrid<double>& grid) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ParseError, "forcing spec '" + spec + "' has no kind");
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  if (kind == "const") {
    const auto fields = detail::split_commas(arg);
    Vector<double> c(static_cast<Index>(fields.size()));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto v = detail::parse_double(fields[i]);
      if (!v) throw Error(ErrorCode::ParseError, "forcing constant '" + fields[i] + "' is not a number");
      c(static_cast<Index>(i)) = *v;
    }
    if (c.size() == 1 && dim > 1) c = Vector<double>::Constant(dim, c(0));
    if (c.size() != dim) throw Error(ErrorCode::DimensionError, "forcing has " + std::to_string(c.size()) +
                                                                     " components, system has " + std::to_string(dim));
    return ForcingFunction<double>::constant(c, grid);
  }
  if (kind == "sin") {
    const auto k = detail::parse_double(arg);
    if (!k || *k != std::floor(*k) || *k < 1 || *k > static_cast<double>(dim))
      throw Error(ErrorCode::ParseError, "sin component '" + arg + "' must be in 1.." + std::to_string(dim));
    const auto comp = static_cast<Index>(*k) - 1;
    return ForcingFunction<double>(dim, [dim, comp](double t) {
      Vector<double> f = Vector<double>::Zero(dim);
      f(comp) = std::cos(t);
      return f;
    }, grid);
  }
  if (kind == "file") {
    std::ifstream in(arg);
    if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + arg + "'");
    const auto table = detail::read_numeric_csv(in);
    if (table.rows.size() < 2) throw Error(ErrorCode::ParseError, "forcing file needs at least two rows");
    if (static_cast<Index>(table.rows.front().size()) != dim + 1)
      throw Error(ErrorCode::DimensionError, "forcing file needs columns t,f1..f" + std::to_string(dim));
    detail::PiecewiseLinear<double> interp;
    for (const auto& row : table.rows) {
      if (!interp.times.empty() && !(row[0] > interp.times.back()))
        throw Error(ErrorCode::NonMonotoneTime, "forcing times must be strictly increasing");
      interp.times.push_back(row[0]);
      interp.values.emplace_back(Eigen::Map<const Vector<double>>(row.data() + 1, dim));
    }
    if (grid.t_min() < interp.times.front() || grid.t_max() > interp.times.back())
      throw Error(ErrorCode::OutOfDomain, "forcing file does not cover the grid");
    auto shared = std::make_shared<const detail::PiecewiseLinear<double>>(std::move(interp));
    return ForcingFunction<double>(dim, [shared](double t) { return Vector<double>((*shared)(t)); }, grid);
  }
  throw Error(ErrorCode::ParseError, "unknown forcing kind '" + kind + "'");
}

PerturbationSpec<double> make_direction(const RunConfig& cfg, Index dim, const TimeGrid<double>& grid) {
  if (cfg.perturbation.matrix) {
    if (cfg.perturbation.matrix->rows() != dim)
      throw Error(ErrorCode::DimensionError, "perturbation matrix dimension mismatch");
    const auto b = PerturbationSpec<double>::constant(*cfg.perturbation.matrix, grid);
    if (!(b.sup_norm() > 0)) throw Error(ErrorCode::InvalidParameter, "perturbation direction is zero");
    return b.normalized(1.0);
  }
  std::mt19937_64 rng(cfg.seed);
  return random_perturbation<double>(dim, grid, 1.0, rng);
}

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::dichotomic: return kExitDichotomic;
    case Verdict::not_dichotomic: return kExitNotDichotomic;
    case Verdict::inconclusive: return kExitInconclusive;
  }
  return kExitError;
}

json growth_json(const GrowthEstimate<double>& g) {
  return {{"alpha", g.alpha}, {"beta", g.beta}, {"attained_at", {g.attained_at.first, g.attained_at.second}}};
}

json dichotomy_json(const DichotomyReport<double>& r) {
  json j;
  j["verdict"] = std::string(to_string(r.verdict));
  j["failure"] = r.failure ? json(std::string(to_string(*r.failure))) : json(nullptr);
  j["detail"] = r.detail;
  j["ref_time"] = r.ref_time;
  j["P"] = r.P.size() ? matrix_json(r.P) : json(nullptr);
  j["Q"] = r.Q.size() ? matrix_json(r.Q) : json(nullptr);
  j["gap_ratio"] = finite_or_null(r.gap_ratio);
  j["projection_error"] = finite_or_null(r.projection_error);
  j["window_half_length"] = r.window_half_length;
  j["verification_margin"] = finite_or_null(r.verification_margin);
  j["projector_sup"] = finite_or_null(r.projector_sup);
  if (r.constants) {
    const auto& c = *r.constants;
    j["constants"] = {{"N1", c.stable.N},           {"nu1", c.stable.nu},
                      {"stable_vacuous", c.stable.vacuous}, {"N2", c.unstable.N},
                      {"nu2", c.unstable.nu},       {"unstable_vacuous", c.unstable.vacuous},
                      {"inverse_bound", c.inverse_bound()}};
  } else {
    j["constants"] = nullptr;
  }
  return j;
}

json roughness_json(const RoughnessReport<double>& r) {
  json j;
  j["threshold"] = finite_or_null(r.threshold);
  j["b_norm"] = r.b_norm;
  j["admissible"] = r.admissible;
  j["perturbed_inv_bound"] = r.perturbed_inv_bound ? json(*r.perturbed_inv_bound) : json(nullptr);
  j["constants_traceable"] = r.constants_traceable;
  j["growth"] = growth_json(r.growth);
  if (r.certified) {
    const auto& c = *r.certified;
    j["certified"] = {{"C", c.C}, {"N_step", c.N_step}, {"rate", c.rate}, {"inv_norm_bound", c.inv_norm_bound},
                      {"C_decay", c.C_decay}};
  } else {
    j["certified"] = nullptr;
  }
  j["original"] = dichotomy_json(r.original);
  j["perturbed"] = dichotomy_json(r.perturbed);
  return j;
}

std::string report_text(const std::string& system, const TimeGrid<double>& grid, const GrowthEstimate<double>& g,
                        const DichotomyReport<double>& r) {
  std::ostringstream os;
  os << "system: " << system << "\n";
  os << "grid: [" << format_number(grid.t_min()) << ", " << format_number(grid.t_max())
     << "], h = " << format_number(grid.step()) << ", " << grid.size() << " points\n";
  os << "growth: alpha = " << format_number(g.alpha) << ", beta = " << format_number(g.beta) << "\n";
  os << "verdict: " << to_string(r.verdict) << "\n";
  if (r.failure) os << "failure: " << to_string(*r.failure) << "\n";
  if (!r.detail.empty()) os << "detail: " << r.detail << "\n";
  os << "gap ratio: " << format_number(r.gap_ratio) << "\n";
  if (r.P.size()) {
    const Eigen::IOFormat fmt(Eigen::FullPrecision, 0, ", ", "\n", "  [", "]");
    os << "P:\n" << r.P.format(fmt) << "\n";
  }
  if (r.constants) {
    os << "constants: " << constants_line(*r.constants) << "\n";
    os << "inverse bound N1/nu1 + N2/nu2 = " << format_number(r.constants->inverse_bound()) << "\n";
    os << "verification margin: " << format_number(r.verification_margin) << "\n";
  }
  return os.str();
}

void write_solution_csv(std::ostream& out, const TimeGrid<double>& grid, const GreenSolution<double>& sol) {
  const Index n = sol.u.empty() ? 0 : sol.u.front().size();
  out << "t";
  for (Index i = 1; i <= n; ++i) out << ",u" << i;
  out << ",residual\n";
  for (Index k = 0; k < grid.size(); ++k) {
    const auto uk = static_cast<std::size_t>(k);
    out << format_number(grid[k]);
    for (Index i = 0; i < n; ++i) out << "," << format_number(sol.u[uk](i));
    out << "," << format_number(sol.residual[uk]) << "\n";
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow<double>>& rows) {
  out << "amplitude,b_norm,threshold,admissible,verdict,N1,nu1,N2,nu2,perturbed_inv_bound\n";
  for (const auto& row : rows) {
    out << format_number(row.amplitude) << ",";
    if (!row.report) {
      out << ",,,error:" << to_string(row.error.value_or(ErrorCode::ConfigError)) << ",,,,,\n";
      continue;
    }
    const auto& r = *row.report;
    out << format_number(r.b_norm) << "," << format_number(r.threshold) << "," << (r.admissible ? "true" : "false")
        << "," << to_string(r.perturbed.verdict) << ",";
    if (r.perturbed.constants) {
      const auto& c = *r.perturbed.constants;
      out << format_number(c.stable.N) << "," << format_number(c.stable.nu) << "," << format_number(c.unstable.N)
          << "," << format_number(c.unstable.nu) << ",";
    } else {
      out << ",,,,";
    }
    if (r.perturbed_inv_bound) out << format_number(*r.perturbed_inv_bound);
    out << "\n";
  }
}

int cmd_analyze(const RunConfig& cfg, std::ostream& out) {
  ensure_out_dir(cfg);
  const auto c = analyze(cfg);
  const auto g = estimate_growth(c.cache);
  write_file(cfg.out_dir / "growth.json", growth_json(g).dump(2) + "\n");
  write_file(cfg.out_dir / "dichotomy.json", dichotomy_json(c.report).dump(2) + "\n");
  const auto text = report_text(cfg.system_name, c.cache.grid(), g, c.report);
  write_file(cfg.out_dir / "report.txt", text);
  out << text;
  return exit_code(c.report.verdict);
}

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
  ensure_out_dir(cfg);
  const auto c = analyze(cfg);
  if (!c.report.dichotomic()) {
    out << "verdict: " << to_string(c.report.verdict) << "\n";
    if (!c.report.detail.empty()) out << "detail: " << c.report.detail << "\n";
    return exit_code(c.report.verdict);
  }
  const auto f = parse_forcing(cfg.forcing, c.cache.dim(), c.cache.grid());
  const auto sol = green_solve(c.cache, c.report, f);
  std::ostringstream csv;
  write_solution_csv(csv, c.cache.grid(), sol);
  write_file(cfg.out_dir / "solution.csv", csv.str());
  out << "bound_margin: " << format_number(sol.bound_margin) << "\n";
  out << "u_sup: " << format_number(sol.u_sup) << "\n";
  out << "f_sup: " << format_number(sol.f_sup) << "\n";
  out << "residual_sup: " << format_number(sol.residual_sup) << " (tolerance " << format_number(sol.residual_tol)
      << ")\n";
  return kExitDichotomic;
}

int cmd_perturb(const RunConfig& cfg, std::ostream& out) {
  ensure_out_dir(cfg);
  auto c = analyze(cfg);
  if (!c.report.dichotomic()) {
    out << "unperturbed verdict: " << to_string(c.report.verdict) << "\n";
    return exit_code(c.report.verdict);
  }
  const auto growth = estimate_growth(c.cache);
  const auto grid = c.cache.grid();
  const RoughnessBase<double> base{make_system(cfg), std::move(c), growth};
  const auto b = make_direction(cfg, base.system.dim(), grid).scaled(cfg.perturbation.amplitude);
  const auto r = perturb_and_verify(base, b, RoughnessOptions<double>{WindowOptions<double>{}, cfg.doublings});
  write_file(cfg.out_dir / "roughness.json", roughness_json(r).dump(2) + "\n");
  out << "b_norm: " << format_number(r.b_norm) << "\n";
  out << "threshold: " << format_number(r.threshold) << "\n";
  out << "admissible: " << (r.admissible ? "true" : "false") << "\n";
  out << "perturbed verdict: " << to_string(r.perturbed.verdict) << "\n";
  if (r.perturbed_inv_bound) out << "perturbed inverse bound: " << format_number(*r.perturbed_inv_bound) << "\n";
  return exit_code(r.perturbed.verdict);
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  ensure_out_dir(cfg);
  auto c = analyze(cfg);
  if (!c.report.dichotomic()) {
    out << "unperturbed verdict: " << to_string(c.report.verdict) << "\n";
    return exit_code(c.report.verdict);
  }
  const auto growth = estimate_growth(c.cache);
  const auto grid = c.cache.grid();
  const RoughnessBase<double> base{make_system(cfg), std::move(c), growth};
  const auto dir = make_direction(cfg, base.system.dim(), grid);
  const auto rows = sweep(base, dir, cfg.amplitudes, RoughnessOptions<double>{WindowOptions<double>{}, cfg.doublings});
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_file(cfg.out_dir / "sweep.csv", csv.str());
  out << csv.str();
  return kExitDichotomic;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exponential dichotomy toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = kDefaultSeed;
  bool seed_given = false;
  const auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed = s; seed_given = true; }, "random seed (default 0x5EED)");
    return sub;
  };
  auto* analyze_cmd = add("analyze", "decide dichotomy and fit constants");
  auto* solve_cmd = add("solve", "bounded solution of u' - A(t)u = f");
  auto* perturb_cmd = add("perturb", "certify a perturbed system");
  auto* sweep_cmd = add("sweep", "perturbation amplitude sweep");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? 0 : kExitError;
  }
  try {
    auto cfg = load_config(config_path);
    cfg.out_dir = out_dir;
    if (seed_given) cfg.seed = seed;
    if (analyze_cmd->parsed()) return cmd_analyze(cfg, out);
    if (solve_cmd->parsed()) return cmd_solve(cfg, out);
    if (perturb_cmd->parsed()) return cmd_perturb(cfg, out);
    if (sweep_cmd->parsed()) return cmd_sweep(cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace edich::cli
