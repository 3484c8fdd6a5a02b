#include "forge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "forge/approximation.hpp"
#include "forge/binary_io.hpp"
#include "forge/log.hpp"
#include "forge/random_fields.hpp"

namespace forge {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

void apply_preset(ExperimentConfig& c, const std::string& preset) {
  if (preset == "desk") {
    c.width = 32;
    c.train_ics = 200;
    c.test_ics = 100;
    c.epochs = 2000;
    c.learning_rate = 1e-3;
  } else if (preset == "full") {
    c.width = 128;
    c.train_ics = 500;
    c.test_ics = 1000;
    c.epochs = 50000;
    c.learning_rate = 1e-5;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected desk or full)");
  }
  c.preset = preset;
}

void apply_pde(ExperimentConfig& c, Pde pde) {
  c.pde = pde;
  c.nu = has_diffusion(pde) ? 0.1 : 0.0;
  const bool nonlinear = is_nonlinear(pde);
  c.dt = nonlinear ? 1e-4 : 1e-3;
  c.save_every = nonlinear ? 1e-4 : 1e-3;
  if (pde == Pde::inviscid_burgers) {
    c.t_train = 3.5;
    c.t_final = 1.5;
    c.probe_time = 0.5;
  } else {
    c.t_train = 1.0;
    c.t_final = 10.0;
    c.probe_time = 10.0;
  }
}

template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::max(1, std::min(thread_count(), n));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

ReferenceOptions reference_options(const ExperimentConfig& cfg) {
  ReferenceOptions o;
  o.fourier_modes = cfg.fourier_modes;
  o.fv_cells = cfg.fv_cells;
  return o;
}

void ensure_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());
  const fs::path probe = out / ".forge_write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory " + out.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void close_out(std::ofstream& f, const fs::path& path) {
  f.close();
  if (!f) throw IoError("failed writing " + path.string());
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw MissingInput(what + " not found: " + path.string());
}

// Per-IC generator seed, independent of scheduling.
std::uint64_t ic_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

struct IcSamples {
  Eigen::MatrixXd queries;
  Eigen::VectorXd targets;
  Trajectory trajectory;
};

IcSamples sample_ic(const ExperimentConfig& cfg, const Eigen::VectorXd& u0, std::uint64_t stream,
                    std::uint64_t index, bool keep_trajectory) {
  const long steps = std::lround(cfg.t_train / cfg.save_every);
  std::mt19937_64 rng(ic_seed(cfg.seed, stream, index));
  std::uniform_int_distribution<long> pick_t(0, steps);
  std::uniform_real_distribution<double> pick_x(0.0, kTwoPi);
  const int q = cfg.queries_per_ic;
  std::vector<long> kt(q);
  std::vector<double> xs(q);
  for (int i = 0; i < q; ++i) {
    kt[i] = pick_t(rng);
    xs[i] = pick_x(rng);
  }

  std::set<long> wanted(kt.begin(), kt.end());
  wanted.insert(0);
  const long cadence = std::max(1L, std::lround(cfg.trajectory_cadence / cfg.save_every));
  // Trajectory frames are always solved for so the targets do not depend on
  // whether the trajectory is kept.
  for (long k = 0; k <= steps; k += cadence) wanted.insert(k);
  std::vector<double> times;
  std::map<long, std::size_t> frame;
  for (long k : wanted) {
    frame[k] = times.size();
    times.push_back(static_cast<double>(k) * cfg.save_every);
  }
  const ReferenceSolution ref = solve_reference(cfg.pde, cfg.nu, u0, times, reference_options(cfg));

  IcSamples s;
  s.queries.resize(2, q);
  s.targets.resize(q);
  for (int i = 0; i < q; ++i) {
    s.queries(0, i) = times[frame[kt[i]]];
    s.queries(1, i) = xs[i];
    const double x[1] = {xs[i]};
    s.targets(i) = ref.eval(frame[kt[i]], x)(0);
  }
  if (keep_trajectory) {
    const Eigen::VectorXd sensors = uniform_sensors(cfg.sensors);
    std::vector<long> ks;
    for (long k = 0; k <= steps; k += cadence) ks.push_back(k);
    s.trajectory.grid = sensors;
    s.trajectory.states.resize(static_cast<Eigen::Index>(ks.size()), sensors.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
      s.trajectory.times.push_back(times[frame[ks[i]]]);
      s.trajectory.states.row(static_cast<Eigen::Index>(i)) = ref.eval(frame[ks[i]], as_span(sensors)).transpose();
    }
    s.trajectory.metadata = cfg.stamp() + " pde=" + std::string(to_string(cfg.pde)) + " ic=" + std::to_string(index);
  }
  return s;
}

TrainingSet assemble_set(const ExperimentConfig& cfg, const Eigen::MatrixXd& ics, std::uint64_t stream,
                         std::vector<Trajectory>* trajectories) {
  const int n = static_cast<int>(ics.rows());
  const int q = cfg.queries_per_ic;
  TrainingSet set;
  set.branch_inputs = ics.transpose();
  set.queries.resize(2, static_cast<Eigen::Index>(n) * q);
  set.targets.resize(static_cast<Eigen::Index>(n) * q);
  set.queries_per_ic = q;
  std::vector<Trajectory> traj(trajectories ? n : 0);
  parallel_for(n, [&](int i) {
    IcSamples s = sample_ic(cfg, ics.row(i).transpose(), stream, i, trajectories != nullptr);
    set.queries.middleCols(static_cast<Eigen::Index>(i) * q, q) = s.queries;
    set.targets.segment(static_cast<Eigen::Index>(i) * q, q) = s.targets;
    if (trajectories) traj[i] = std::move(s.trajectory);
  });
  if (trajectories) *trajectories = std::move(traj);
  return set;
}

void put_set(std::ostream& out, const TrainingSet& s) {
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(s.branch_inputs.rows()));
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(s.ic_count()));
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(s.queries_per_ic));
  io::put_matrix(out, s.branch_inputs);
  io::put_matrix(out, s.queries);
  io::put_vector(out, s.targets);
}

TrainingSet get_set(std::istream& in) {
  TrainingSet s;
  const Eigen::Index sensors = io::get_dim(in, "sensor count");
  const Eigen::Index n = io::get_dim(in, "initial condition count");
  s.queries_per_ic = io::get_dim(in, "queries per initial condition");
  s.branch_inputs = io::get_matrix(in, sensors, n, "branch inputs");
  s.queries = io::get_matrix(in, 2, n * s.queries_per_ic, "queries");
  s.targets = io::get_vector(in, n * s.queries_per_ic, "targets");
  s.validate();
  return s;
}

constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kTrajectorySetVersion = 1;

struct Snapshot {
  long index;
  double t;
  Eigen::VectorXd u;
};

double gram_deviation(const OrthonormalBasis& b) {
  if (b.rank == 0) return 0.0;
  const Eigen::MatrixXd phi = b.node_values.leftCols(b.rank);
  const Eigen::MatrixXd g = phi.transpose() * (phi.array().colwise() * b.grid.weights().array()).matrix();
  double dev = (g - Eigen::MatrixXd::Identity(b.rank, b.rank)).cwiseAbs().maxCoeff();
  if (b.projected()) {
    const Eigen::MatrixXd c = b.legendre_coeffs.transpose() * b.legendre_coeffs;
    dev = std::max(dev, (c - Eigen::MatrixXd::Identity(b.rank, b.rank)).cwiseAbs().maxCoeff());
  }
  return dev;
}

OrthonormalBasis load_basis_checked(const fs::path& path) {
  require_file(path, "basis");
  return load_basis(path);
}

}  // namespace

int thread_count() {
  if (const char* env = std::getenv("FORGE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["pde"] = std::string(to_string(pde));
  kv["nu"] = fmt(nu);
  kv["preset"] = preset;
  kv["seed"] = std::to_string(seed);
  kv["grf_length_scale"] = fmt(grf_length_scale);
  kv["sensors"] = std::to_string(sensors);
  kv["train_ics"] = std::to_string(train_ics);
  kv["test_ics"] = std::to_string(test_ics);
  kv["queries_per_ic"] = std::to_string(queries_per_ic);
  kv["t_train"] = fmt(t_train);
  kv["save_every"] = fmt(save_every);
  kv["trajectory_cadence"] = fmt(trajectory_cadence);
  kv["fourier_modes"] = std::to_string(fourier_modes);
  kv["fv_cells"] = std::to_string(fv_cells);
  kv["width"] = std::to_string(width);
  kv["branch_depth"] = std::to_string(branch_depth);
  kv["trunk_depth"] = std::to_string(trunk_depth);
  kv["epochs"] = std::to_string(epochs);
  kv["batch_ics"] = std::to_string(batch_ics);
  kv["learning_rate"] = fmt(learning_rate);
  kv["repeat"] = std::to_string(repeat);
  std::string ft;
  for (double t : freeze_times) ft += (ft.empty() ? "" : ",") + fmt(t);
  kv["freeze_times"] = ft;
  kv["time_sampled"] = fmt(time_sampled);
  kv["threshold"] = threshold ? fmt(*threshold) : "auto";
  kv["max_rank"] = max_rank ? std::to_string(*max_rank) : "none";
  kv["m_analysis"] = std::to_string(m_analysis);
  kv["m_solve"] = std::to_string(m_solve);
  kv["legendre_degree"] = std::to_string(legendre_degree);
  kv["analysis_degree"] = std::to_string(analysis_degree);
  kv["dt"] = fmt(dt);
  kv["t_final"] = fmt(t_final);
  kv["probe_time"] = fmt(probe_time);
  kv["energy_guard"] = fmt(energy_guard);
  kv["tau_every_stage"] = tau_every_stage ? "true" : "false";
  kv["error_every"] = fmt(error_every);
  kv["test_ic_index"] = std::to_string(test_ic_index);
  kv["cross_basis"] = cross_basis;
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::stamp() const { return "config=" + hash() + " seed=" + std::to_string(seed); }

std::vector<double> ExperimentConfig::effective_freeze_times() const {
  if (time_sampled <= 0.0) return freeze_times;
  const long n = std::lround(t_train / time_sampled);
  std::vector<double> t;
  for (long k = 0; k <= n; ++k) t.push_back(static_cast<double>(k) * time_sampled);
  return t;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key)) throw ConfigError("config key '" + key + "' given twice");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

ExperimentConfig resolve_config(const std::map<std::string, std::string>& raw) {
  ExperimentConfig c;
  auto get = [&](const std::string& k) -> const std::string* {
    const auto it = raw.find(k);
    return it == raw.end() ? nullptr : &it->second;
  };
  apply_preset(c, get("preset") ? *get("preset") : "desk");
  if (const auto* p = get("pde")) {
    try {
      apply_pde(c, parse_pde(*p));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else {
    apply_pde(c, Pde::advection);
  }

  for (const auto& [k, v] : raw) {
    auto as_int = [&](int lo) {
      const long long i = to_int(k, v);
      if (i < lo || i > (1LL << 30)) throw ConfigError("config key '" + k + "' out of range: " + v);
      return static_cast<int>(i);
    };
    if (k == "pde" || k == "preset") continue;
    if (k == "nu") c.nu = to_double(k, v);
    else if (k == "seed") {
      try {
        std::size_t pos = 0;
        c.seed = std::stoull(v, &pos);
        if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw ConfigError("config key 'seed': expected an unsigned integer, got '" + v + "'");
      }
    }
    else if (k == "grf_length_scale") c.grf_length_scale = to_double(k, v);
    else if (k == "sensors") c.sensors = as_int(4);
    else if (k == "train_ics") c.train_ics = as_int(1);
    else if (k == "test_ics") c.test_ics = as_int(1);
    else if (k == "queries_per_ic") c.queries_per_ic = as_int(1);
    else if (k == "t_train") c.t_train = to_double(k, v);
    else if (k == "save_every") c.save_every = to_double(k, v);
    else if (k == "trajectory_cadence") c.trajectory_cadence = to_double(k, v);
    else if (k == "fourier_modes") c.fourier_modes = as_int(4);
    else if (k == "fv_cells") c.fv_cells = as_int(4);
    else if (k == "width") c.width = as_int(1);
    else if (k == "branch_depth") c.branch_depth = as_int(1);
    else if (k == "trunk_depth") c.trunk_depth = as_int(1);
    else if (k == "epochs") c.epochs = as_int(0);
    else if (k == "batch_ics") c.batch_ics = as_int(1);
    else if (k == "learning_rate") c.learning_rate = to_double(k, v);
    else if (k == "repeat") c.repeat = as_int(1);
    else if (k == "freeze_times") c.freeze_times = to_list(k, v);
    else if (k == "time_sampled") c.time_sampled = to_double(k, v);
    else if (k == "threshold") {
      if (v == "auto") c.threshold.reset();
      else c.threshold = to_double(k, v);
    }
    else if (k == "max_rank") {
      if (v == "none") c.max_rank.reset();
      else c.max_rank = as_int(1);
    }
    else if (k == "m_analysis") c.m_analysis = as_int(2);
    else if (k == "m_solve") c.m_solve = as_int(2);
    else if (k == "legendre_degree") c.legendre_degree = as_int(1);
    else if (k == "analysis_degree") c.analysis_degree = as_int(0);
    else if (k == "dt") c.dt = to_double(k, v);
    else if (k == "t_final") c.t_final = to_double(k, v);
    else if (k == "probe_time") c.probe_time = to_double(k, v);
    else if (k == "energy_guard") c.energy_guard = to_double(k, v);
    else if (k == "tau_every_stage") c.tau_every_stage = to_bool(k, v);
    else if (k == "error_every") c.error_every = to_double(k, v);
    else if (k == "test_ic_index") c.test_ic_index = as_int(0);
    else if (k == "cross_basis") c.cross_basis = v;
    else throw ConfigError("unknown config key '" + k + "'");
  }

  require(c.nu >= 0.0, "nu must be >= 0");
  require(c.grf_length_scale > 0.0, "grf_length_scale must be > 0");
  require(c.t_train > 0.0 && c.save_every > 0.0 && c.save_every <= c.t_train, "need 0 < save_every <= t_train");
  require(c.trajectory_cadence >= c.save_every, "trajectory_cadence must be >= save_every");
  require(c.learning_rate >= 0.0, "learning_rate must be >= 0");
  require(c.time_sampled >= 0.0 && c.time_sampled <= c.t_train, "time_sampled must lie in [0, t_train]");
  for (double t : c.freeze_times) require(t >= 0.0, "freeze times must be >= 0");
  require(!c.threshold || *c.threshold >= 0.0, "threshold must be >= 0");
  require(c.legendre_degree < c.m_analysis, "legendre_degree must be below m_analysis");
  require(c.analysis_degree <= c.legendre_degree, "analysis_degree must not exceed legendre_degree");
  require(c.dt > 0.0 && c.t_final > 0.0 && c.probe_time > 0.0, "dt, t_final and probe_time must be > 0");
  require(c.energy_guard > 1.0, "energy_guard must exceed 1");
  require(c.error_every >= c.dt, "error_every must be >= dt");
  require(c.test_ic_index < c.test_ics, "test_ic_index must be below test_ics");
  return c;
}

ExperimentConfig load_config(const fs::path& path, const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw MissingInput("config not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto raw = parse_config_text(ss.str());
  for (const auto& [k, v] : overrides) raw[k] = v;
  return resolve_config(raw);
}

void save_dataset(const Dataset& data, const fs::path& path) {
  std::ofstream out = open_out(path, true);
  io::put_magic(out, "FRGDATAS");
  io::put<std::uint32_t>(out, kDatasetVersion);
  io::put_string(out, data.stamp);
  put_set(out, data.train);
  put_set(out, data.test);
  close_out(out, path);
}

Dataset load_dataset(const fs::path& path) {
  require_file(path, "dataset");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  io::expect_magic(in, "FRGDATAS", "dataset");
  const auto version = io::get<std::uint32_t>(in, "version");
  if (version != kDatasetVersion) throw io::FormatError("unsupported dataset version " + std::to_string(version));
  Dataset d;
  d.stamp = io::get_string(in, "stamp");
  d.train = get_set(in);
  d.test = get_set(in);
  return d;
}

Eigen::MatrixXd training_ics(const ExperimentConfig& cfg) {
  const GrfSampler s(cfg.grf_length_scale, uniform_sensors(cfg.sensors), cfg.seed);
  return s.sample_stream(cfg.train_ics, 0);
}

Eigen::MatrixXd test_ics(const ExperimentConfig& cfg) {
  const GrfSampler s(cfg.grf_length_scale, uniform_sensors(cfg.sensors), cfg.seed);
  return s.sample_stream(cfg.test_ics, 1);
}

Dataset generate_dataset(const ExperimentConfig& cfg, std::vector<Trajectory>* trajectories) {
  Dataset d;
  d.stamp = cfg.stamp();
  d.train = assemble_set(cfg, training_ics(cfg), 0, trajectories);
  d.test = assemble_set(cfg, test_ics(cfg), 1, nullptr);
  return d;
}

std::vector<SolveCase> solve_cases(const ExperimentConfig& cfg) {
  const Eigen::MatrixXd tests = test_ics(cfg);
  const Eigen::VectorXd x = uniform_sensors(cfg.sensors);
  return {{"grf" + std::to_string(cfg.test_ic_index), tests.row(cfg.test_ic_index).transpose()},
          {"sin", x.array().sin().matrix()}};
}

SolveResult run_case(const ExperimentConfig& cfg, const GalerkinSystem& sys, const SolveCase& c) {
  const Eigen::VectorXd& nodes = sys.grid.nodes();
  const Eigen::VectorXd u0 = fourier_interpolate(c.u0_uniform, as_span(nodes));
  const Eigen::VectorXd a0 = initial_coefficients(sys, u0);

  std::vector<Snapshot> snaps;
  EvolveOptions opt;
  opt.dt = cfg.dt;
  opt.t_final = cfg.t_final;
  opt.energy_guard = cfg.energy_guard;
  opt.tau_every_stage = cfg.tau_every_stage;
  opt.save_stride = std::max(1, static_cast<int>(std::lround(cfg.error_every / cfg.dt)));
  const CoefficientTrajectory traj = evolve(sys, a0, opt, [&](double t, const Eigen::VectorXd& a) {
    const long k = std::lround(t / cfg.error_every);
    if (std::abs(t - static_cast<double>(k) * cfg.error_every) > 0.25 * cfg.dt) return;
    snaps.push_back({k, static_cast<double>(k) * cfg.error_every, field_at_nodes(sys, a)});
  });

  SolveResult r;
  r.name = c.name;
  r.blowup = traj.blowup;
  r.non_finite = traj.non_finite;
  r.halt_time = traj.halt_time;
  if (snaps.empty()) return r;
  std::vector<double> times;
  for (const auto& s : snaps) times.push_back(s.t);
  const ReferenceSolution ref = solve_reference(cfg.pde, cfg.nu, c.u0_uniform, times, reference_options(cfg));
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    r.times.push_back(snaps[i].t);
    r.errors.push_back(relative_error(snaps[i].u, ref.eval(i, as_span(nodes))));
  }
  r.mean_error = r.errors.size() > 1 ? averaged_error(r.errors, r.times) : r.errors.front();
  return r;
}

bool probe_stable(const ExperimentConfig& cfg, const OrthonormalBasis& basis) {
  GalerkinSystem sys;
  try {
    sys = assemble(spatial_basis(basis), cfg.pde, cfg.nu, gauss_legendre_rule(cfg.m_solve, basis.domain()));
  } catch (const std::exception& e) {
    warn(std::string("probe: ") + e.what());
    return false;
  }
  EvolveOptions opt;
  opt.dt = cfg.dt;
  opt.t_final = std::min(cfg.probe_time, cfg.t_final);
  opt.energy_guard = cfg.energy_guard;
  opt.tau_every_stage = cfg.tau_every_stage;
  opt.save_stride = 1 << 30;
  for (const SolveCase& c : solve_cases(cfg)) {
    const Eigen::VectorXd u0 = fourier_interpolate(c.u0_uniform, as_span(sys.grid.nodes()));
    const CoefficientTrajectory t = evolve(sys, initial_coefficients(sys, u0), opt);
    if (t.blowup || t.non_finite) return false;
  }
  return true;
}

OrthonormalBasis extract_basis(const ExperimentConfig& cfg, const DeepONet& model, std::ostream& log) {
  const QuadratureGrid grid = gauss_legendre_rule(cfg.m_analysis);
  const std::vector<double> times = cfg.effective_freeze_times();
  const CandidateSet cands = freeze_trunk(model, times, grid, cfg.t_train, cfg.stamp());
  log << "candidates: p = " << cands.count() << " (" << times.size() << " freeze times x w = " << model.width()
      << ")\n";
  int cap = cfg.legendre_degree + 1;
  if (cfg.max_rank) cap = std::min(cap, *cfg.max_rank);

  if (cfg.threshold) {
    OrthonormalBasis b = orthonormalize(cands, *cfg.threshold, cap);
    if (b.rank == 0) throw DegenerateBasis("no singular value exceeds the threshold");
    return legendre_project(std::move(b), cfg.legendre_degree);
  }

  const OrthonormalBasis full = orthonormalize(cands, 0.0, cap);
  int last_rank = -1;
  std::optional<OrthonormalBasis> fallback;
  for (int e = -12; e <= -2; ++e) {
    const double thr = std::pow(10.0, e);
    OrthonormalBasis b = full;
    b.threshold = thr;
    b.rank = 0;
    while (b.rank < b.singular_values.size() && b.singular_values(b.rank) > thr) ++b.rank;
    b.rank = std::min(b.rank, cap);
    if (b.rank == 0) break;
    if (b.rank == last_rank) continue;
    last_rank = b.rank;
    b = legendre_project(std::move(b), cfg.legendre_degree);
    const bool stable = probe_stable(cfg, b);
    log << "threshold " << thr << ": r = " << b.rank << (stable ? " stable" : " unstable") << "\n";
    if (stable) return b;
    if (!fallback) fallback = std::move(b);
  }
  if (!fallback) throw DegenerateBasis("no singular value exceeds the smallest threshold");
  warn("no threshold up to 1e-2 gave a stable probe; keeping " + fmt(fallback->threshold));
  return *fallback;
}

int cmd_generate(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  ensure_dir(out);
  std::vector<Trajectory> traj;
  const Dataset d = generate_dataset(cfg, &traj);
  save_dataset(d, out / "dataset.bin");

  const fs::path tp = out / "trajectories.bin";
  std::ofstream tf = open_out(tp, true);
  io::put_magic(tf, "FRGTRSET");
  io::put<std::uint32_t>(tf, kTrajectorySetVersion);
  io::put_string(tf, cfg.stamp());
  io::put<std::uint64_t>(tf, traj.size());
  for (const auto& t : traj) write_trajectory_binary(tf, t);
  close_out(tf, tp);

  for (const auto& [name, ics] : {std::pair{"train_ics.csv", training_ics(cfg)}, {"test_ics.csv", test_ics(cfg)}}) {
    const fs::path p = out / name;
    std::ofstream f = open_out(p);
    f << "# " << cfg.stamp() << " sensors=" << cfg.sensors << " length_scale=" << fmt(cfg.grf_length_scale)
      << "\n";
    write_samples_csv(f, ics);
    close_out(f, p);
  }
  const fs::path cp = out / "config.txt";
  std::ofstream cf = open_out(cp);
  cf << "# " << cfg.stamp() << "\n" << cfg.canonical();
  close_out(cf, cp);

  log << "generated " << cfg.train_ics << " training and " << cfg.test_ics << " test initial conditions for "
      << to_string(cfg.pde) << "\n";
  log << "reference cadence " << cfg.save_every << " over [0, " << cfg.t_train << "], trajectories stored every "
      << cfg.trajectory_cadence << "\n";
  log << cfg.stamp() << "\n";
  return kOk;
}

int cmd_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const Dataset d = load_dataset(out / "dataset.bin");
  ensure_dir(out);
  if (d.train.branch_inputs.rows() != cfg.sensors) throw ConfigError("dataset sensor count differs from config");

  std::vector<double> finals;
  const fs::path summary_path = out / "train_summary.csv";
  std::ofstream summary = open_out(summary_path);
  summary << "# " << cfg.stamp() << "\nrun,seed,initial_test_mse,final_test_mse\n" << std::setprecision(17);
  for (int rep = 0; rep < cfg.repeat; ++rep) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
    DeepONetShape shape;
    shape.sensors = cfg.sensors;
    shape.width = cfg.width;
    shape.branch_depth = cfg.branch_depth;
    shape.trunk_depth = cfg.trunk_depth;
    const DeepONet init = DeepONet::glorot(shape, seed);
    const double initial = evaluate_mse(init, d.test);

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_ics = cfg.batch_ics;
    tc.learning_rate = cfg.learning_rate;
    tc.seed = seed;
    const std::string suffix = rep == 0 ? "" : "_" + std::to_string(rep);
    const fs::path loss_path = out / ("loss" + suffix + ".csv");
    std::ofstream loss = open_out(loss_path);
    loss << "# " << cfg.stamp() << " run_seed=" << seed << "\nepoch,loss\n" << std::setprecision(17);
    const TrainResult res = train(init, d.train, tc, [&](int epoch, double l) { loss << epoch << ',' << l << '\n'; });
    close_out(loss, loss_path);

    const double final_mse = evaluate_mse(res.model, d.test);
    finals.push_back(final_mse);
    summary << rep << ',' << seed << ',' << initial << ',' << final_mse << '\n';
    save_model(res.model, out / ("model" + suffix + ".bin"),
               cfg.stamp() + " run_seed=" + std::to_string(seed) + " pde=" + std::string(to_string(cfg.pde)));
    log << "run " << rep << " (seed " << seed << "): test MSE " << initial << " -> " << final_mse << "\n";
  }
  close_out(summary, summary_path);

  double mean = 0.0;
  for (double f : finals) mean += f;
  mean /= static_cast<double>(finals.size());
  double var = 0.0;
  for (double f : finals) var += (f - mean) * (f - mean);
  const double sd = finals.size() > 1 ? std::sqrt(var / static_cast<double>(finals.size() - 1)) : 0.0;
  log << "final test MSE " << mean;
  if (finals.size() > 1) log << " +- " << sd << " over " << finals.size() << " runs";
  log << "\n" << cfg.stamp() << "\n";
  return kOk;
}

int cmd_extract(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const fs::path mp = out / "model.bin";
  require_file(mp, "model");
  const DeepONet model = load_model(mp);
  ensure_dir(out);
  const OrthonormalBasis b = extract_basis(cfg, model, log);
  save_basis(b, out / "basis.bin");

  const fs::path sp = out / "singular_values.csv";
  std::ofstream sf = open_out(sp);
  sf << "# " << cfg.stamp() << " threshold=" << fmt(b.threshold) << " rank=" << b.rank << "\n";
  write_singular_values_csv(sf, b.singular_values);
  close_out(sf, sp);

  const double dev = gram_deviation(b);
  log << "rank r = " << b.rank << " at threshold " << b.threshold << "\n";
  log << "sigma_1 / sigma_r = " << b.singular_values(0) / b.singular_values(b.rank - 1) << "\n";
  log << "gram deviation = " << dev << (b.reorthonormalized ? " (reorthonormalized)" : "") << "\n";
  log << cfg.stamp() << "\n";
  if (dev >= 1e-8) {
    warn("basis Gram deviation " + fmt(dev) + " exceeds 1e-8");
    return kInternal;
  }
  return kOk;
}

int cmd_solve(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const fs::path bp = cfg.cross_basis.empty() ? out / "basis.bin" : fs::path(cfg.cross_basis);
  const OrthonormalBasis b = load_basis_checked(bp);
  if (b.rank == 0) throw DegenerateBasis("basis has rank 0");
  ensure_dir(out);
  const GalerkinSystem sys =
      assemble(spatial_basis(b), cfg.pde, cfg.nu, gauss_legendre_rule(cfg.m_solve, b.domain()));
  log << "solving " << to_string(cfg.pde) << " with r = " << sys.r << ", b = " << sys.b << " ("
      << sys.tau.active_rows << " active boundary rows" << (sys.tau.pivoted ? ", pivoted" : "") << ") from "
      << bp.string() << "\n";

  const fs::path sp = out / "summary.csv";
  std::ofstream summary = open_out(sp);
  summary << "# " << cfg.stamp() << " basis=" << bp.filename().string() << " basis_source=" << b.source << "\n";
  summary << "case,pde,rank,threshold,mean_E2,final_E2,blowup,non_finite,halt_time\n" << std::setprecision(17);
  for (const SolveCase& c : solve_cases(cfg)) {
    const SolveResult r = run_case(cfg, sys, c);
    const fs::path ep = out / ("errors_" + c.name + ".csv");
    std::ofstream ef = open_out(ep);
    ef << "# " << cfg.stamp() << " case=" << c.name << " basis=" << bp.filename().string() << "\nt,E2\n"
       << std::setprecision(17);
    for (std::size_t i = 0; i < r.times.size(); ++i) ef << r.times[i] << ',' << r.errors[i] << '\n';
    close_out(ef, ep);
    const double last = r.errors.empty() ? std::nan("") : r.errors.back();
    summary << c.name << ',' << to_string(cfg.pde) << ',' << sys.r << ',' << b.threshold << ',' << r.mean_error
            << ',' << last << ',' << (r.blowup ? 1 : 0) << ',' << (r.non_finite ? 1 : 0) << ',' << r.halt_time
            << '\n';
    log << c.name << ": mean E2 = " << r.mean_error << ", final E2 = " << last;
    if (r.blowup) log << ", blowup at t = " << r.halt_time;
    if (r.non_finite) log << ", non-finite state at t = " << r.halt_time;
    log << "\n";
  }
  close_out(summary, sp);
  log << cfg.stamp() << "\n";
  return kOk;
}

int cmd_analyze(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const OrthonormalBasis b = load_basis_checked(out / "basis.bin");
  if (b.rank == 0) throw DegenerateBasis("basis has rank 0");
  if (!b.projected()) throw std::runtime_error("basis has no Legendre representation");
  ensure_dir(out);
  const int l = cfg.analysis_degree > 0 ? std::min(cfg.analysis_degree, b.max_degree) : b.max_degree;
  const int r_top = l - 1;

  bool all_hold = true;
  for (const char* name : {"f1", "f2", "f3"}) {
    const ApproxReport rep = ac3_bound(named_target(name), b, r_top, name);
    const Eigen::VectorXd& lc = rep.legendre_coeffs;
    const fs::path bp = out / (std::string("bound_") + name + ".csv");
    std::ofstream bf = open_out(bp);
    bf << "# " << cfg.stamp() << " target=" << name << " projection_error=" << fmt(rep.projection_error) << "\n";
    bf << "j,tail,term,bound\n" << std::setprecision(17);
    double cumulative = 0.0;
    int violations = 0;
    for (int j = 0; j <= r_top; ++j) {
      const Eigen::Index rest = lc.size() - (j + 1);
      const double tail = rest > 0 ? lc.tail(rest).norm() : 0.0;
      cumulative += rep.contributions(j);
      const double bound = tail + cumulative;
      if (rep.projection_error > bound + 1e-9) ++violations;
      bf << j << ',' << tail << ',' << rep.contributions(j) << ',' << bound << '\n';
    }
    close_out(bf, bp);

    const fs::path dp = out / (std::string("decay_") + name + ".csv");
    std::ofstream df = open_out(dp);
    df << "# " << cfg.stamp() << " target=" << name << "\n";
    write_curve_csv(df, rep.coefficients.cwiseAbs(), "k,abs_coefficient");
    close_out(df, dp);

    const DecayFit fit = fit_geometric_decay(rep.coefficients);
    log << name << ": ||f - Pf|| = " << rep.projection_error << ", bound at r_leg = " << r_top << ": " << rep.bound
        << ", decay rate " << fit.rho << " (R^2 " << fit.r_squared << ")";
    if (violations > 0) {
      log << ", VIOLATED for " << violations << " truncations";
      all_hold = false;
    }
    log << "\n";
  }

  const fs::path pp = out / "legendre_profile.csv";
  std::ofstream pf = open_out(pp);
  pf << "# " << cfg.stamp() << " rank=" << b.rank << "\n";
  write_curve_csv(pf, legendre_error_profile(b, l), "j,error");
  close_out(pf, pp);
  log << cfg.stamp() << "\n";
  return all_hold ? kOk : kInternal;
}

int run_command(const std::string& name, const ExperimentConfig& cfg, const fs::path& out, std::ostream& log,
                std::ostream& err) {
  try {
    if (name == "generate") return cmd_generate(cfg, out, log);
    if (name == "train") return cmd_train(cfg, out, log);
    if (name == "extract") return cmd_extract(cfg, out, log);
    if (name == "solve") return cmd_solve(cfg, out, log);
    if (name == "analyze") return cmd_analyze(cfg, out, log);
    err << "error: unknown command '" << name << "'\n";
    return kInternal;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << "\n";
    return kMissingInput;
  } catch (const DegenerateBasis& e) {
    err << "error: " << e.what() << "\n";
    return kDegenerateBasis;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace forge
