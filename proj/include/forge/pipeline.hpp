#pragma once

// Experiment orchestration behind the `forge` subcommands: config files,
// dataset generation, training, basis extraction, evolution and analysis.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "forge/basis_forge.hpp"
#include "forge/galerkin.hpp"
#include "forge/operator_net.hpp"
#include "forge/pde.hpp"
#include "forge/reference_solvers.hpp"

namespace forge {

enum ExitCode : int { kOk = 0, kInternal = 1, kIoError = 2, kMissingInput = 3, kDegenerateBasis = 4 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateBasis : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Resolved experiment settings. Defaults come from the preset, then the PDE,
/// then explicit keys.
struct ExperimentConfig {
  Pde pde = Pde::advection;
  double nu = 0.0;
  std::string preset = "desk";
  std::uint64_t seed = 1;

  // data
  double grf_length_scale = 0.5;
  int sensors = 128;
  int train_ics = 200;
  int test_ics = 100;
  int queries_per_ic = 100;
  double t_train = 1.0;
  double save_every = 1e-3;          // reference cadence; query times snap to it
  double trajectory_cadence = 1e-2;  // stored trajectory frames
  int fourier_modes = 128;
  int fv_cells = 4096;

  // network
  int width = 32;
  int branch_depth = 2;
  int trunk_depth = 3;
  int epochs = 2000;
  int batch_ics = 100;
  double learning_rate = 1e-3;
  int repeat = 1;

  // basis
  std::vector<double> freeze_times{0.0};
  double time_sampled = 0.0;  // > 0 replaces freeze_times by 0, dt, .., t_train
  std::optional<double> threshold;  // empty: search upward from 1e-12
  std::optional<int> max_rank;
  int m_analysis = 1024;
  int m_solve = 128;
  int legendre_degree = 127;
  int analysis_degree = 0;  // highest Legendre degree in the analysis; 0 uses L

  // evolution
  double dt = 1e-3;
  double t_final = 10.0;
  double probe_time = 10.0;
  double energy_guard = 1.025;
  bool tau_every_stage = false;
  double error_every = 1e-2;
  int test_ic_index = 0;
  std::string cross_basis;

  /// Sorted key=value lines of every setting; the hash is taken over this.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(), as 16 hex digits.
  std::string hash() const;
  /// "config=<hash> seed=<seed>", embedded in every output.
  std::string stamp() const;
  /// Freeze times after applying time_sampled.
  std::vector<double> effective_freeze_times() const;
};

/// Raw key=value pairs ('#' comments, blank lines ignored).
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Resolves raw pairs; unknown keys and malformed values throw ConfigError.
ExperimentConfig resolve_config(const std::map<std::string, std::string>& raw);

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::map<std::string, std::string>& overrides = {});

/// Network inputs and targets for train and test initial conditions.
struct Dataset {
  std::string stamp;
  TrainingSet train;
  TrainingSet test;
};

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// The GRF initial conditions at the sensors: stream 0 trains, stream 1 tests.
Eigen::MatrixXd training_ics(const ExperimentConfig& cfg);
Eigen::MatrixXd test_ics(const ExperimentConfig& cfg);

/// Builds the data set, running one reference solve per initial condition.
/// Stored trajectories go to `trajectories` when non-null.
Dataset generate_dataset(const ExperimentConfig& cfg, std::vector<Trajectory>* trajectories = nullptr);

/// A test initial condition for the solve step.
struct SolveCase {
  std::string name;
  Eigen::VectorXd u0_uniform;  // at uniform_sensors(cfg.sensors)
};
std::vector<SolveCase> solve_cases(const ExperimentConfig& cfg);

struct SolveResult {
  std::string name;
  std::vector<double> times;
  std::vector<double> errors;
  double mean_error = 0.0;
  bool blowup = false;
  bool non_finite = false;
  double halt_time = 0.0;
};

/// Evolves u0 in the basis and compares against a freshly computed reference
/// every cfg.error_every up to cfg.t_final (or the halt).
SolveResult run_case(const ExperimentConfig& cfg, const GalerkinSystem& sys, const SolveCase& c);

/// Shorter evolution used to pick the threshold; true when no case blows up.
bool probe_stable(const ExperimentConfig& cfg, const OrthonormalBasis& basis);

/// Basis from the trunk of `model`. With no fixed threshold, tries 1e-12,
/// 1e-11, .. and keeps the first one whose probe is stable.
OrthonormalBasis extract_basis(const ExperimentConfig& cfg, const DeepONet& model, std::ostream& log);

/// Subcommands. Each writes its artifacts into `out` and returns an exit code;
/// errors are mapped by run_command.
int cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_extract(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_solve(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_analyze(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// Dispatches by name and converts exceptions to exit codes, printing the
/// message to `err`.
int run_command(const std::string& name, const ExperimentConfig& cfg, const std::filesystem::path& out,
                std::ostream& log, std::ostream& err);

/// Worker count from FORGE_THREADS, else the hardware concurrency.
int thread_count();

}  // namespace forge
