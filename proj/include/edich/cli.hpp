#pragma once

// Command-line front end: analyze, solve, perturb and sweep.

#include "edich/dichotomy.hpp"
#include "edich/green.hpp"
#include "edich/roughness.hpp"
#include "edich/system.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace edich::cli {

inline constexpr int kExitDichotomic = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotDichotomic = 2;
inline constexpr int kExitInconclusive = 3;
inline constexpr std::uint64_t kDefaultSeed = 0x5EED;

/// Direction of B(t): a constant matrix, or a seeded random modulated matrix.
struct PerturbationConfig {
  std::optional<Matrix<double>> matrix;
  double amplitude{0};
};

struct RunConfig {
  std::string system_name;
  ParameterMap<double> params;
  std::optional<std::string> sampled_path;
  double t_min{-8};
  double t_max{8};
  double h{0.01};
  int doublings{2};
  std::string forcing{"const:0"};
  PerturbationConfig perturbation;
  std::vector<double> amplitudes;
  std::filesystem::path out_dir{"."};
  std::uint64_t seed{kDefaultSeed};
};

/// Parses a JSON config. Referenced files are checked to exist and parse here,
/// before any computation.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

LinearSystem<double> make_system(const RunConfig& cfg);
TimeGrid<double> make_run_grid(const RunConfig& cfg);

/// Forcing grammar: `const:c1,...,cn`, `sin:k` (cos t on component k, 1-based,
/// zero elsewhere), `file:path` (CSV `t,f1,...,fn`, piecewise linear).
ForcingFunction<double> parse_forcing(const std::string& spec, Index dim, const TimeGrid<double>& grid);

/// Unit-sup-norm direction of B on the grid.
PerturbationSpec<double> make_direction(const RunConfig& cfg, Index dim, const TimeGrid<double>& grid);

int exit_code(Verdict v);

nlohmann::json growth_json(const GrowthEstimate<double>& g);
nlohmann::json dichotomy_json(const DichotomyReport<double>& r);
nlohmann::json roughness_json(const RoughnessReport<double>& r);
std::string report_text(const std::string& system, const TimeGrid<double>& grid, const GrowthEstimate<double>& g,
                        const DichotomyReport<double>& r);
void write_solution_csv(std::ostream& out, const TimeGrid<double>& grid, const GreenSolution<double>& sol);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow<double>>& rows);

/// %.17g formatting; non-finite values print as nan/inf.
std::string format_number(double v);

int cmd_analyze(const RunConfig& cfg, std::ostream& out);
int cmd_solve(const RunConfig& cfg, std::ostream& out);
int cmd_perturb(const RunConfig& cfg, std::ostream& out);
int cmd_sweep(const RunConfig& cfg, std::ostream& out);

/// Full entry point: parses arguments, runs the command, maps errors to exit 1
/// with a message on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace edich::cli
