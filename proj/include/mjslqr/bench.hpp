#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mjslqr/adaptive.hpp"
#include "mjslqr/errors.hpp"
#include "mjslqr/io.hpp"
#include "mjslqr/lqr.hpp"
#include "mjslqr/model.hpp"
#include "mjslqr/random.hpp"
#include "mjslqr/sysid.hpp"

namespace mjslqr::bench {

enum class Kind { SysidSweep, RegretSweep, SingleRun };

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::SysidSweep: return "sysid-sweep";
    case Kind::RegretSweep: return "regret-sweep";
    case Kind::SingleRun: return "single-run";
  }
  return "";
}

inline Kind parse_kind(const std::string& s) {
  if (s == "sysid-sweep") return Kind::SysidSweep;
  if (s == "regret-sweep") return Kind::RegretSweep;
  if (s == "single-run" || s == "single") return Kind::SingleRun;
  throw ConfigError("kind: unknown experiment kind '" + s + "'");
}

struct SysidOverrides {
  std::optional<double> c_x;
  std::optional<double> c_z;
  std::optional<int> min_samples;
};

struct ExperimentConfig {
  Kind kind = Kind::SysidSweep;
  std::vector<int> n{5};
  std::vector<int> p{3};
  std::vector<int> s{5};
  std::vector<double> sigma_w{0.01};
  std::vector<double> sigma_z{0.01};
  std::vector<int> T{4000};
  int T0 = 2000;
  double gamma = 2.0;
  int num_epochs = 5;
  int replications = 10;
  std::uint64_t base_seed = 0;
  double spectral_cap = 0.5;
  SysidOverrides sysid;
  bool known_B = false;
  bool shared_model = false;
  /// Explicit model (with optional Q, R); replaces the n, p, s grid.
  std::optional<std::string> model_file;
  /// Empty means standard output.
  std::string output;

  EpochSchedule schedule() const { return {T0, gamma, num_epochs}; }

  void validate() const {
    auto nonempty = [](bool ok, const char* field) {
      if (!ok) throw ConfigError(std::string(field) + ": grid must be non-empty");
    };
    nonempty(!n.empty(), "n");
    nonempty(!p.empty(), "p");
    nonempty(!s.empty(), "s");
    nonempty(!sigma_w.empty(), "sigma_w");
    nonempty(!sigma_z.empty(), "sigma_z");
    nonempty(!T.empty(), "T");
    for (int v : n)
      if (v < 1) throw ConfigError("n: entries must be >= 1");
    for (int v : p)
      if (v < 1) throw ConfigError("p: entries must be >= 1");
    for (int v : s)
      if (v < 1) throw ConfigError("s: entries must be >= 1");
    for (double v : sigma_w)
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("sigma_w: entries must be positive");
    for (double v : sigma_z)
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("sigma_z: entries must be positive");
    for (int v : T)
      if (v < 2) throw ConfigError("T: entries must be >= 2");
    if (replications < 1) throw ConfigError("replications: must be >= 1");
    if (!(spectral_cap > 0.0 && spectral_cap < 1.0)) throw ConfigError("spectral_cap: must lie in (0, 1)");
    try {
      schedule().validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("T0/gamma/num_epochs: ") + e.what());
    }
    if (sysid.c_x && !(*sysid.c_x > 0.0)) throw ConfigError("sysid.c_x: must be positive");
    if (sysid.c_z && !(*sysid.c_z > 0.0)) throw ConfigError("sysid.c_z: must be positive");
    if (sysid.min_samples && *sysid.min_samples < 1) throw ConfigError("sysid.min_samples: must be >= 1");
  }
};

namespace detail {

template <typename T>
std::vector<T> scalar_or_list(const json& j, const std::string& field) {
  try {
    if (j.is_array()) {
      std::vector<T> out;
      for (const auto& e : j) out.push_back(e.get<T>());
      return out;
    }
    return {j.get<T>()};
  } catch (const json::exception&) {
    throw ConfigError(field + ": expected a number or a list of numbers");
  }
}

template <typename T>
T scalar(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field + ": wrong type");
  }
}

}  // namespace detail

/// Parse an experiment config. `base_dir` resolves a relative model_file.
inline ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "kind") {
      cfg.kind = parse_kind(detail::scalar<std::string>(v, key));
    } else if (key == "n") {
      cfg.n = detail::scalar_or_list<int>(v, key);
    } else if (key == "p") {
      cfg.p = detail::scalar_or_list<int>(v, key);
    } else if (key == "s") {
      cfg.s = detail::scalar_or_list<int>(v, key);
    } else if (key == "sigma_w") {
      cfg.sigma_w = detail::scalar_or_list<double>(v, key);
    } else if (key == "sigma_z") {
      cfg.sigma_z = detail::scalar_or_list<double>(v, key);
    } else if (key == "T") {
      cfg.T = detail::scalar_or_list<int>(v, key);
    } else if (key == "T0") {
      cfg.T0 = detail::scalar<int>(v, key);
    } else if (key == "gamma") {
      cfg.gamma = detail::scalar<double>(v, key);
    } else if (key == "num_epochs") {
      cfg.num_epochs = detail::scalar<int>(v, key);
    } else if (key == "replications") {
      cfg.replications = detail::scalar<int>(v, key);
    } else if (key == "base_seed") {
      cfg.base_seed = detail::scalar<std::uint64_t>(v, key);
    } else if (key == "spectral_cap") {
      cfg.spectral_cap = detail::scalar<double>(v, key);
    } else if (key == "known_B") {
      cfg.known_B = detail::scalar<bool>(v, key);
    } else if (key == "shared_model") {
      cfg.shared_model = detail::scalar<bool>(v, key);
    } else if (key == "model_file") {
      std::filesystem::path path = detail::scalar<std::string>(v, key);
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      cfg.model_file = path.string();
    } else if (key == "output") {
      cfg.output = detail::scalar<std::string>(v, key);
    } else if (key == "sysid") {
      if (!v.is_object()) throw ConfigError("sysid: expected an object");
      for (auto s = v.begin(); s != v.end(); ++s) {
        const std::string field = "sysid." + s.key();
        if (s.key() == "c_x") cfg.sysid.c_x = detail::scalar<double>(s.value(), field);
        else if (s.key() == "c_z") cfg.sysid.c_z = detail::scalar<double>(s.value(), field);
        else if (s.key() == "min_samples") cfg.sysid.min_samples = detail::scalar<int>(s.value(), field);
        else throw ConfigError(field + ": unknown field");
      }
    } else {
      throw ConfigError(key + ": unknown field");
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  const json j = read_json_file(path);
  return parse_config(j, std::filesystem::path(path).parent_path());
}

inline SysidConfig sysid_config_for(const ExperimentConfig& cfg, Eigen::Index n, Eigen::Index p, bool known_B) {
  SysidConfig out = SysidConfig::defaults(n, p, known_B);
  if (cfg.sysid.c_x) out.c_x = *cfg.sysid.c_x;
  if (cfg.sysid.c_z) out.c_z = *cfg.sysid.c_z;
  if (cfg.sysid.min_samples) out.min_samples_per_mode = *cfg.sysid.min_samples;
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

/// Sample quantile with linear interpolation between order statistics
/// (position q (N - 1) in the sorted sample).
inline double quantile(std::vector<double> values, double q) {
  mjslqr::detail::require(!values.empty(), "quantile: empty sample");
  mjslqr::detail::require(q >= 0.0 && q <= 1.0, "quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline double median(const std::vector<double>& values) { return quantile(values, 0.5); }
inline double iqr(const std::vector<double>& values) { return quantile(values, 0.75) - quantile(values, 0.25); }

// ---------------------------------------------------------------------------
// CSV

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* kSysidHeader = "kind,n,p,s,sigma_w,sigma_z,T,seed,err_A,err_B,err_T,rel_Psi,samples_min";
inline const char* kRegretHeader = "kind,n,p,s,sigma_w,T0,gamma,epoch,t,seed,regret,err_A,err_B,err_T,failed_cdare";

struct SysidRow {
  std::string kind = "sysid";
  int n = 0, p = 0, s = 0;
  double sigma_w = 0.0, sigma_z = 0.0;
  int T = 0;
  std::optional<std::uint64_t> seed;
  double err_A = 0.0, err_B = 0.0, err_T = 0.0, rel_Psi = 0.0, samples_min = 0.0;

  std::string to_csv() const {
    std::ostringstream os;
    os << kind << ',' << n << ',' << p << ',' << s << ',' << format_number(sigma_w) << ','
       << format_number(sigma_z) << ',' << T << ',' << (seed ? std::to_string(*seed) : "") << ','
       << format_number(err_A) << ',' << format_number(err_B) << ',' << format_number(err_T) << ','
       << format_number(rel_Psi) << ',' << format_number(samples_min);
    return os.str();
  }
};

struct RegretRow {
  std::string kind = "regret";
  int n = 0, p = 0, s = 0;
  double sigma_w = 0.0;
  int T0 = 0;
  double gamma = 0.0;
  int epoch = 0;
  long t = 0;
  std::optional<std::uint64_t> seed;
  double regret = 0.0, err_A = 0.0, err_B = 0.0, err_T = 0.0;
  /// 0/1 on raw rows, number of failed runs on aggregate rows.
  int failed_cdare = 0;

  std::string to_csv() const {
    std::ostringstream os;
    os << kind << ',' << n << ',' << p << ',' << s << ',' << format_number(sigma_w) << ',' << T0 << ','
       << format_number(gamma) << ',' << epoch << ',' << t << ',' << (seed ? std::to_string(*seed) : "") << ','
       << format_number(regret) << ',' << format_number(err_A) << ',' << format_number(err_B) << ','
       << format_number(err_T) << ',' << failed_cdare;
    return os.str();
  }
};

/// Header plus rows of fields. No quoting: the emitted CSV never needs it.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != table.header.size())
      throw ConfigError("csv: row has " + std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

inline double parse_double(const std::string& s) { return s.empty() ? std::nan("") : std::stod(s); }

inline std::optional<std::uint64_t> parse_seed(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stoull(s);
}

inline SysidRow sysid_row_from_fields(const std::vector<std::string>& f) {
  mjslqr::detail::require_shape(f.size() == 13, "csv: sysid rows have 13 fields");
  SysidRow r;
  r.kind = f[0];
  r.n = std::stoi(f[1]);
  r.p = std::stoi(f[2]);
  r.s = std::stoi(f[3]);
  r.sigma_w = parse_double(f[4]);
  r.sigma_z = parse_double(f[5]);
  r.T = std::stoi(f[6]);
  r.seed = parse_seed(f[7]);
  r.err_A = parse_double(f[8]);
  r.err_B = parse_double(f[9]);
  r.err_T = parse_double(f[10]);
  r.rel_Psi = parse_double(f[11]);
  r.samples_min = parse_double(f[12]);
  return r;
}

inline RegretRow regret_row_from_fields(const std::vector<std::string>& f) {
  mjslqr::detail::require_shape(f.size() == 15, "csv: regret rows have 15 fields");
  RegretRow r;
  r.kind = f[0];
  r.n = std::stoi(f[1]);
  r.p = std::stoi(f[2]);
  r.s = std::stoi(f[3]);
  r.sigma_w = parse_double(f[4]);
  r.T0 = std::stoi(f[5]);
  r.gamma = parse_double(f[6]);
  r.epoch = std::stoi(f[7]);
  r.t = std::stol(f[8]);
  r.seed = parse_seed(f[9]);
  r.regret = parse_double(f[10]);
  r.err_A = parse_double(f[11]);
  r.err_B = parse_double(f[12]);
  r.err_T = parse_double(f[13]);
  r.failed_cdare = std::stoi(f[14]);
  return r;
}

// ---------------------------------------------------------------------------
// Work pool

/// Run task(i) for i in [0, count) on `jobs` threads. Results are indexed by
/// task, so output order never depends on completion order. The first
/// exception (by task index) is rethrown after all workers finish.
template <typename Result>
std::vector<Result> run_tasks(std::size_t count, int jobs, const std::function<Result(std::size_t)>& task) {
  std::vector<std::optional<Result>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(task(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<Result> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Problem construction and seeds
//
// Seeds use derive_seed (splitmix64 chain). For grid cell c, model-dimension
// index d and replication r:
//   model seed      = derive_seed(base, {shared_model ? d : c, r, 0})
//   simulation seed = derive_seed(base, {c, r, 1})
// The simulation seed is the `seed` column of raw CSV rows.

struct Dims {
  int n = 0, p = 0, s = 0;
};

inline std::vector<Dims> dims_grid(const ExperimentConfig& cfg, const std::optional<RandomProblem>& fixed) {
  if (fixed) return {{static_cast<int>(fixed->model.n()), static_cast<int>(fixed->model.p()), fixed->model.s()}};
  std::vector<Dims> out;
  for (int n : cfg.n)
    for (int p : cfg.p)
      for (int s : cfg.s) out.push_back({n, p, s});
  return out;
}

inline std::optional<RandomProblem> load_fixed_problem(const ExperimentConfig& cfg) {
  if (!cfg.model_file) return std::nullopt;
  const json j = read_json_file(*cfg.model_file);
  MjsModel model = model_from_json(j);
  CostSpec cost = cost_from_json(j, model);
  return RandomProblem{std::move(model), std::move(cost)};
}

inline RandomProblem problem_for(const ExperimentConfig& cfg, const std::optional<RandomProblem>& fixed,
                                 const Dims& d, std::uint64_t model_seed) {
  if (fixed) return *fixed;
  return random_model(d.n, d.p, d.s, cfg.spectral_cap, model_seed);
}

// ---------------------------------------------------------------------------
// Identification sweep

struct SysidCell {
  std::size_t dims_index = 0;
  Dims dims;
  double sigma_w = 0.0;
  double sigma_z = 0.0;
  int T = 0;
};

inline std::vector<SysidCell> sysid_cells(const ExperimentConfig& cfg, const std::vector<Dims>& dims) {
  std::vector<SysidCell> out;
  for (std::size_t d = 0; d < dims.size(); ++d)
    for (double w : cfg.sigma_w)
      for (double z : cfg.sigma_z)
        for (int t : cfg.T) out.push_back({d, dims[d], w, z, t});
  return out;
}

/// One identification experiment: K = 0 (the generated models are open-loop
/// MSS), x_0 = 0, uniform initial mode.
inline SysidRow run_sysid_replication(const ExperimentConfig& cfg, const std::optional<RandomProblem>& fixed,
                                      const SysidCell& cell, std::size_t cell_index, int rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  const std::uint64_t model_seed =
      derive_seed(cfg.base_seed, {cfg.shared_model ? cell.dims_index : cell_index, r, 0});
  const std::uint64_t sim_seed = derive_seed(cfg.base_seed, {cell_index, r, 1});
  const RandomProblem problem = problem_for(cfg, fixed, cell.dims, model_seed);
  const MjsModel& model = problem.model;
  const auto controller = ModeController::zeros(model);
  const NoiseSpec noise(cell.sigma_w, cell.sigma_z);
  const Trajectory traj =
      simulate(model, controller, noise, VectorXd::Zero(model.n()), uniform_distribution(model.s()), cell.T, sim_seed);
  const SysidConfig sc = sysid_config_for(cfg, model.n(), model.p(), cfg.known_B);

  SysidRow row;
  row.n = cell.dims.n;
  row.p = cell.dims.p;
  row.s = cell.dims.s;
  row.sigma_w = cell.sigma_w;
  row.sigma_z = cell.sigma_z;
  row.T = cell.T;
  row.seed = sim_seed;
  try {
    const SysidResult id = cfg.known_B ? mjs_sysid_known_B(traj, controller, model.B(), noise, sc)
                                       : mjs_sysid(traj, controller, noise, sc);
    const auto e = estimation_error(id, model);
    row.err_A = e.err_A;
    row.err_B = e.err_B;
    row.err_T = e.err_T;
    row.rel_Psi = e.rel_Psi;
    row.samples_min = id.min_samples();
  } catch (const DegenerateRegressors&) {
    row.err_A = row.err_B = row.err_T = row.rel_Psi = std::nan("");
  }
  return row;
}

inline std::vector<SysidRow> aggregate_sysid(const std::vector<SysidRow>& raw, std::size_t num_cells, int reps) {
  std::vector<SysidRow> out;
  for (std::size_t c = 0; c < num_cells; ++c) {
    const auto begin = raw.begin() + static_cast<std::ptrdiff_t>(c * static_cast<std::size_t>(reps));
    std::vector<double> a, b, t, psi, smin;
    for (auto it = begin; it != begin + reps; ++it) {
      a.push_back(it->err_A);
      b.push_back(it->err_B);
      t.push_back(it->err_T);
      psi.push_back(it->rel_Psi);
      smin.push_back(it->samples_min);
    }
    SysidRow med = *begin;
    med.kind = "sysid-median";
    med.seed.reset();
    SysidRow spread = med;
    spread.kind = "sysid-iqr";
    med.err_A = median(a), med.err_B = median(b), med.err_T = median(t), med.rel_Psi = median(psi),
    med.samples_min = median(smin);
    spread.err_A = iqr(a), spread.err_B = iqr(b), spread.err_T = iqr(t), spread.rel_Psi = iqr(psi),
    spread.samples_min = iqr(smin);
    out.push_back(med);
    out.push_back(spread);
  }
  return out;
}

struct SweepOutput {
  std::vector<std::string> lines;

  std::string text() const {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
  }
};

/// Raw rows for every cell x replication (cell-major), then median and IQR rows per cell.
inline SweepOutput run_sysid_sweep(const ExperimentConfig& cfg, int jobs = 1) {
  mjslqr::detail::require(cfg.kind == Kind::SysidSweep, "run_sysid_sweep: config kind must be sysid-sweep");
  cfg.validate();
  const auto fixed = load_fixed_problem(cfg);
  const auto cells = sysid_cells(cfg, dims_grid(cfg, fixed));
  const auto reps = static_cast<std::size_t>(cfg.replications);
  const std::function<SysidRow(std::size_t)> task = [&](std::size_t k) {
    return run_sysid_replication(cfg, fixed, cells[k / reps], k / reps, static_cast<int>(k % reps));
  };
  const auto raw = run_tasks<SysidRow>(cells.size() * reps, jobs, task);
  SweepOutput out;
  out.lines.emplace_back(kSysidHeader);
  for (const auto& r : raw) out.lines.push_back(r.to_csv());
  for (const auto& r : aggregate_sysid(raw, cells.size(), cfg.replications)) out.lines.push_back(r.to_csv());
  return out;
}

// ---------------------------------------------------------------------------
// Regret sweep

struct RegretCell {
  std::size_t dims_index = 0;
  Dims dims;
  double sigma_w = 0.0;
};

inline std::vector<RegretCell> regret_cells(const ExperimentConfig& cfg, const std::vector<Dims>& dims) {
  std::vector<RegretCell> out;
  for (std::size_t d = 0; d < dims.size(); ++d)
    for (double w : cfg.sigma_w) out.push_back({d, dims[d], w});
  return out;
}

/// One adaptive run from K^(0) = 0; one row per epoch boundary. A run that
/// cannot start (no optimal controller for the true model) yields rows with
/// NaN regret and failed_cdare = 1.
inline std::vector<RegretRow> run_regret_replication(const ExperimentConfig& cfg,
                                                     const std::optional<RandomProblem>& fixed,
                                                     const RegretCell& cell, std::size_t cell_index, int rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  const std::uint64_t model_seed =
      derive_seed(cfg.base_seed, {cfg.shared_model ? cell.dims_index : cell_index, r, 0});
  const std::uint64_t sim_seed = derive_seed(cfg.base_seed, {cell_index, r, 1});
  const RandomProblem problem = problem_for(cfg, fixed, cell.dims, model_seed);
  const auto schedule = cfg.schedule();

  RegretRow base;
  base.n = cell.dims.n;
  base.p = cell.dims.p;
  base.s = cell.dims.s;
  base.sigma_w = cell.sigma_w;
  base.T0 = cfg.T0;
  base.gamma = cfg.gamma;
  base.seed = sim_seed;

  std::vector<RegretRow> rows;
  try {
    AdaptiveOptions options;
    options.known_B = cfg.known_B;
    const auto record = adaptive_mjs_lqr(problem.model, problem.cost, cell.sigma_w,
                                         ModeController::zeros(problem.model), schedule,
                                         sysid_config_for(cfg, problem.model.n(), problem.model.p(), cfg.known_B),
                                         sim_seed, options);
    for (std::size_t i = 0; i < record.epochs.size(); ++i) {
      const auto& e = record.epochs[i];
      RegretRow row = base;
      row.epoch = e.epoch;
      row.t = record.regret_samples[i].first;
      row.regret = record.regret_samples[i].second;
      row.err_A = e.errors.err_A;
      row.err_B = e.errors.err_B;
      row.err_T = e.errors.err_T;
      row.failed_cdare = e.cdare_failed ? 1 : 0;
      rows.push_back(row);
    }
  } catch (const Error&) {
    long t = 0;
    for (int i = 0; i < schedule.num_epochs; ++i) {
      t += schedule.length(i);
      RegretRow row = base;
      row.epoch = i;
      row.t = t;
      row.regret = row.err_A = row.err_B = row.err_T = std::nan("");
      row.failed_cdare = 1;
      rows.push_back(row);
    }
  }
  return rows;
}

inline std::vector<RegretRow> aggregate_regret(const std::vector<std::vector<RegretRow>>& raw, std::size_t num_cells,
                                               int reps, int num_epochs) {
  std::vector<RegretRow> out;
  for (std::size_t c = 0; c < num_cells; ++c) {
    for (int e = 0; e < num_epochs; ++e) {
      std::vector<double> regret, a, b, t;
      int failed = 0;
      for (int r = 0; r < reps; ++r) {
        const auto& row = raw[c * static_cast<std::size_t>(reps) + static_cast<std::size_t>(r)]
                             [static_cast<std::size_t>(e)];
        regret.push_back(row.regret);
        a.push_back(row.err_A);
        b.push_back(row.err_B);
        t.push_back(row.err_T);
        failed += row.failed_cdare;
      }
      RegretRow med = raw[c * static_cast<std::size_t>(reps)][static_cast<std::size_t>(e)];
      med.kind = "regret-median";
      med.seed.reset();
      med.failed_cdare = failed;
      RegretRow spread = med;
      spread.kind = "regret-iqr";
      med.regret = median(regret), med.err_A = median(a), med.err_B = median(b), med.err_T = median(t);
      spread.regret = iqr(regret), spread.err_A = iqr(a), spread.err_B = iqr(b), spread.err_T = iqr(t);
      out.push_back(med);
      out.push_back(spread);
    }
  }
  return out;
}

inline SweepOutput run_regret_sweep(const ExperimentConfig& cfg, int jobs = 1) {
  mjslqr::detail::require(cfg.kind == Kind::RegretSweep, "run_regret_sweep: config kind must be regret-sweep");
  cfg.validate();
  const auto fixed = load_fixed_problem(cfg);
  const auto cells = regret_cells(cfg, dims_grid(cfg, fixed));
  const auto reps = static_cast<std::size_t>(cfg.replications);
  const std::function<std::vector<RegretRow>(std::size_t)> task = [&](std::size_t k) {
    return run_regret_replication(cfg, fixed, cells[k / reps], k / reps, static_cast<int>(k % reps));
  };
  const auto raw = run_tasks<std::vector<RegretRow>>(cells.size() * reps, jobs, task);
  SweepOutput out;
  out.lines.emplace_back(kRegretHeader);
  for (const auto& run : raw)
    for (const auto& r : run) out.lines.push_back(r.to_csv());
  for (const auto& r : aggregate_regret(raw, cells.size(), cfg.replications, cfg.num_epochs))
    out.lines.push_back(r.to_csv());
  return out;
}

// ---------------------------------------------------------------------------
// Single run

/// Model summary, open-loop stability, K*, J* and one adaptive run record.
/// Uses the model file if given, otherwise the first n, p, s and sigma_w.
inline json run_single(const ExperimentConfig& cfg) {
  mjslqr::detail::require(cfg.kind == Kind::SingleRun, "run_single: config kind must be single-run");
  cfg.validate();
  const auto fixed = load_fixed_problem(cfg);
  const Dims dims = dims_grid(cfg, fixed).front();
  const RandomProblem problem = problem_for(cfg, fixed, dims, derive_seed(cfg.base_seed, {0, 0, 0}));
  const MjsModel& model = problem.model;
  const double sigma_w = cfg.sigma_w.front();
  const std::uint64_t sim_seed = derive_seed(cfg.base_seed, {0, 0, 1});

  const auto open_loop = is_mss(model, ModeController::zeros(model));
  json report{{"model", model_to_json(model)},
              {"cost", cost_to_json(problem.cost)},
              {"sigma_w", sigma_w},
              {"seed", sim_seed},
              {"open_loop_rho", open_loop.rho},
              {"open_loop_mss", open_loop.mss}};
  try {
    const auto stationary = stationary_distribution(model.chain());
    report["stationary_distribution"] = std::vector<double>(stationary.pi.data(), stationary.pi.data() + stationary.pi.size());
  } catch (const NotErgodic&) {
    report["stationary_distribution"] = nullptr;
  }

  AdaptiveOptions options;
  options.known_B = cfg.known_B;
  const auto record = adaptive_mjs_lqr(model, problem.cost, sigma_w, ModeController::zeros(model), cfg.schedule(),
                                       sysid_config_for(cfg, model.n(), model.p(), cfg.known_B), sim_seed, options);
  report["K_star"] = controller_to_json(record.k_star);
  report["J_star"] = record.j_star;
  report["run"] = run_record_to_json(record);
  return report;
}

}  // namespace mjslqr::bench
