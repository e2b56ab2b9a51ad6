#pragma once

// Design-of-experiments sweep over volume fractions and the on-disk dataset
// store (one RRTO array per field and split, plus manifest.json).

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/fem.hpp"
#include "rrto/grid.hpp"
#include "rrto/io.hpp"
#include "rrto/parallel.hpp"
#include "rrto/topopt.hpp"

namespace rrto::dataset {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

struct DoePlan {
  int n_train = 100;
  int n_test = 20;
  double f_min = 0.1;
  double f_max = 0.9;
  int nx = 80;
  int ny = 80;
  std::uint64_t seed = 0;  // recorded for provenance; the sweep itself is deterministic

  static std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(std::max(n, 0)));
    if (n <= 0) return v;
    if (n == 1) {
      v[0] = a;
      return v;
    }
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    v.back() = b;
    return v;
  }
  std::vector<double> train_fractions() const { return linspace(f_min, f_max, n_train); }
  std::vector<double> test_fractions() const { return linspace(f_min, f_max, n_test); }

  void validate() const {
    if (n_train < 1 || n_test < 0) throw ConfigError("DoePlan: sample counts must be positive");
    if (!(f_min > 0 && f_max < 1 && f_min <= f_max))
      throw ConfigError("DoePlan: require 0 < f_min <= f_max < 1");
    if (nx < 1 || ny < 1) throw ConfigError("DoePlan: mesh size must be positive");
  }
};

inline void to_json(json& j, const DoePlan& p) {
  j = json{{"n_train", p.n_train}, {"n_test", p.n_test}, {"f_min", p.f_min}, {"f_max", p.f_max},
           {"nx", p.nx},           {"ny", p.ny},         {"seed", p.seed}};
}
inline void from_json(const json& j, DoePlan& p) {
  j.at("n_train").get_to(p.n_train);
  j.at("n_test").get_to(p.n_test);
  j.at("f_min").get_to(p.f_min);
  j.at("f_max").get_to(p.f_max);
  j.at("nx").get_to(p.nx);
  j.at("ny").get_to(p.ny);
  j.at("seed").get_to(p.seed);
}

}  // namespace rrto::dataset

namespace rrto::topopt {
inline void to_json(nlohmann::json& j, const SimpConfig& c) {
  j = nlohmann::json{{"penal", c.penal},         {"e0", c.e0},
                     {"emin", c.emin},           {"filter_radius", c.filter_radius},
                     {"volfrac", c.volfrac},     {"move", c.move},
                     {"eta", c.eta},             {"lambda_lo", c.lambda_lo},
                     {"lambda_hi", c.lambda_hi}, {"max_iters", c.max_iters},
                     {"tol_change", c.tol_change}};
}
inline void from_json(const nlohmann::json& j, SimpConfig& c) {
  j.at("penal").get_to(c.penal);
  j.at("e0").get_to(c.e0);
  j.at("emin").get_to(c.emin);
  j.at("filter_radius").get_to(c.filter_radius);
  j.at("volfrac").get_to(c.volfrac);
  j.at("move").get_to(c.move);
  j.at("eta").get_to(c.eta);
  j.at("lambda_lo").get_to(c.lambda_lo);
  j.at("lambda_hi").get_to(c.lambda_hi);
  j.at("max_iters").get_to(c.max_iters);
  j.at("tol_change").get_to(c.tol_change);
}
}  // namespace rrto::topopt

namespace rrto::dataset {

/// One optimized design and its stress response.
struct Sample {
  double f = 0.0;
  Grid geometry;
  Grid stress;
  double compliance = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Aligned columns for one split. Index j refers to the same DoE point in
/// every field.
struct SplitData {
  std::vector<double> f;
  std::vector<Grid> X;
  std::vector<double> s_scalar;
  std::vector<std::vector<double>> s_1d;
  std::vector<Grid> s_2d;
  std::vector<double> compliance;
  std::vector<int> iterations;

  std::size_t size() const { return f.size(); }

  void push(const Sample& s) {
    f.push_back(s.f);
    X.push_back(s.geometry);
    s_scalar.push_back(s.stress.max());
    s_1d.push_back(s.stress.diagonal());
    s_2d.push_back(s.stress);
    compliance.push_back(s.compliance);
    iterations.push_back(s.iterations);
  }
  bool operator==(const SplitData&) const = default;
};

struct ExcludedRun {
  std::string split;
  double f = 0.0;
  int iterations = 0;
  std::string reason;
  bool operator==(const ExcludedRun&) const = default;
};

struct DatasetBundle {
  DoePlan plan;
  topopt::SimpConfig simp;
  SplitData train;
  SplitData test;
  std::vector<ExcludedRun> excluded;

  int rows() const { return plan.ny; }
  int cols() const { return plan.nx; }
  const SplitData& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "test") return test;
    throw ContractError("unknown split '" + name + "'");
  }

  /// Provenance hash of the generating configuration.
  std::string config_hash() const {
    json j{{"plan", plan}, {"simp", simp}};
    return io::hex64(io::fnv1a(j.dump()));
  }

  bool operator==(const DatasetBundle& o) const {
    return json(plan) == json(o.plan) && json(simp) == json(o.simp) && train == o.train &&
           test == o.test && excluded == o.excluded;
  }
};

/// Runs one SIMP optimization and post-processes its stress field.
inline Sample run_point(double f, const DoePlan& plan, topopt::SimpConfig cfg) {
  cfg.volfrac = f;
  const fem::Mesh mesh = fem::Mesh::half_mbb(plan.nx, plan.ny);
  auto result = topopt::optimize(cfg, mesh);
  const auto young = topopt::penalize(result.rho.grid.values, cfg);
  Sample s;
  s.f = f;
  s.stress = fem::von_mises_field(mesh, result.displacements, young).grid;
  s.geometry = std::move(result.rho.grid);
  s.compliance = result.trace.final_compliance;
  s.iterations = static_cast<int>(result.trace.iterations.size());
  s.converged = result.trace.converged;
  return s;
}

using ProgressFn = std::function<void(const std::string& split, int index, const Sample&)>;

inline DatasetBundle generate(const DoePlan& plan, const topopt::SimpConfig& cfg,
                              int threads = thread_count(), const ProgressFn& progress = {}) {
  plan.validate();
  {
    auto probe = cfg;
    probe.volfrac = plan.f_min;
    probe.validate();
  }
  struct Job {
    std::string split;
    int index;
    double f;
  };
  std::vector<Job> jobs;
  const auto ftr = plan.train_fractions();
  const auto fte = plan.test_fractions();
  for (int i = 0; i < static_cast<int>(ftr.size()); ++i) jobs.push_back({"train", i, ftr[i]});
  for (int i = 0; i < static_cast<int>(fte.size()); ++i) jobs.push_back({"test", i, fte[i]});

  std::vector<Sample> results(jobs.size());
  std::mutex progress_mutex;
  parallel_for(static_cast<int>(jobs.size()), threads, [&](int k) {
    results[k] = run_point(jobs[k].f, plan, cfg);
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(jobs[k].split, jobs[k].index, results[k]);
    }
  });

  DatasetBundle b;
  b.plan = plan;
  b.simp = cfg;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const Sample& s = results[k];
    if (!s.converged) {
      b.excluded.push_back({jobs[k].split, s.f, s.iterations,
                            "not converged within " + std::to_string(cfg.max_iters) + " iterations"});
      continue;
    }
    (jobs[k].split == "train" ? b.train : b.test).push(s);
  }
  return b;
}

/// Exact consistency checks between the stored fields. Returns one message
/// per violation; empty means consistent.
inline std::vector<std::string> check_alignment(const DatasetBundle& b) {
  std::vector<std::string> issues;
  for (const std::string name : {"train", "test"}) {
    const SplitData& s = b.split(name);
    const std::size_t n = s.size();
    if (s.X.size() != n || s.s_scalar.size() != n || s.s_1d.size() != n || s.s_2d.size() != n) {
      issues.push_back(name + ": field counts differ");
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const std::string at = name + "[" + std::to_string(j) + "]";
      if (s.s_scalar[j] != s.s_2d[j].max()) issues.push_back(at + ": scalar != max of 2-d field");
      if (s.s_1d[j] != s.s_2d[j].diagonal()) issues.push_back(at + ": 1-d slice != diagonal");
      if (s.X[j].rows != b.rows() || s.X[j].cols != b.cols())
        issues.push_back(at + ": geometry shape mismatch");
    }
  }
  return issues;
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline io::Array stack(const std::vector<Grid>& grids, int rows, int cols) {
  io::Array a;
  a.shape = {grids.size(), static_cast<std::uint64_t>(rows), static_cast<std::uint64_t>(cols)};
  a.data.reserve(grids.size() * rows * cols);
  for (const auto& g : grids) a.data.insert(a.data.end(), g.values.begin(), g.values.end());
  return a;
}

inline io::Array stack(const std::vector<std::vector<double>>& rows, std::size_t width) {
  io::Array a;
  a.shape = {rows.size(), width};
  for (const auto& r : rows) a.data.insert(a.data.end(), r.begin(), r.end());
  return a;
}

inline io::Array vec(const std::vector<double>& v) { return io::Array{{v.size()}, v}; }

inline std::vector<Grid> unstack_grids(const io::Array& a) {
  std::vector<Grid> out;
  const std::size_t r = a.shape[1], c = a.shape[2];
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    out.emplace_back(static_cast<int>(r), static_cast<int>(c),
                     std::vector<double>(a.data.begin() + i * r * c, a.data.begin() + (i + 1) * r * c));
  return out;
}

inline std::vector<std::vector<double>> unstack_rows(const io::Array& a) {
  std::vector<std::vector<double>> out;
  const std::size_t w = a.shape[1];
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    out.emplace_back(a.data.begin() + i * w, a.data.begin() + (i + 1) * w);
  return out;
}

inline std::vector<std::pair<std::string, io::Array>> arrays_of(const DatasetBundle& b,
                                                                 const std::string& split) {
  const SplitData& s = b.split(split);
  const std::size_t diag = static_cast<std::size_t>(std::min(b.rows(), b.cols()));
  return {{"X_" + split, stack(s.X, b.rows(), b.cols())},
          {"S_scalar_" + split, vec(s.s_scalar)},
          {"S_1d_" + split, stack(s.s_1d, diag)},
          {"S_2d_" + split, stack(s.s_2d, b.rows(), b.cols())},
          {"f_" + split, vec(s.f)}};
}

}  // namespace detail

inline json manifest(const DatasetBundle& b) {
  json m;
  m["format"] = "rrto-dataset";
  m["version"] = kFormatVersion;
  m["config_hash"] = b.config_hash();
  m["plan"] = b.plan;
  m["simp"] = b.simp;
  m["dtype"] = "f64le";
  json arrays = json::object();
  for (const std::string split : {"train", "test"}) {
    for (const auto& [name, a] : detail::arrays_of(b, split))
      arrays[name] = {{"file", name + ".rrto"}, {"shape", a.shape}};
    const SplitData& s = b.split(split);
    m["samples"][split] = {{"compliance", s.compliance}, {"iterations", s.iterations}};
  }
  m["arrays"] = arrays;
  json ex = json::array();
  for (const auto& e : b.excluded)
    ex.push_back({{"split", e.split}, {"f", e.f}, {"iterations", e.iterations}, {"reason", e.reason}});
  m["excluded"] = ex;
  return m;
}

inline void save(const DatasetBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const std::string split : {"train", "test"})
    for (const auto& [name, a] : detail::arrays_of(b, split)) io::write_array(dir / (name + ".rrto"), a);
  io::write_text(dir / "manifest.json", manifest(b).dump(2) + "\n");
}

inline DatasetBundle load(const std::filesystem::path& dir) {
  json m;
  try {
    m = json::parse(io::read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (m.value("format", "") != "rrto-dataset")
    throw FormatError("manifest: format is not 'rrto-dataset'");
  if (m.value("version", -1) != kFormatVersion)
    throw FormatError("manifest: unsupported version " + m.value("version", json(-1)).dump());

  DatasetBundle b;
  try {
    b.plan = m.at("plan").get<DoePlan>();
    b.simp = m.at("simp").get<topopt::SimpConfig>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }

  auto read = [&](const std::string& name) {
    const json& entry = m.at("arrays").at(name);
    io::Array a = io::read_array(dir / entry.at("file").get<std::string>());
    const auto expected = entry.at("shape").get<std::vector<std::uint64_t>>();
    if (a.shape != expected)
      throw FormatError("array '" + name + "': shape " + json(a.shape).dump() +
                        " does not match manifest " + json(expected).dump());
    return a;
  };

  for (const std::string split : {"train", "test"}) {
    SplitData& s = split == "train" ? b.train : b.test;
    s.X = detail::unstack_grids(read("X_" + split));
    s.s_scalar = read("S_scalar_" + split).data;
    s.s_1d = detail::unstack_rows(read("S_1d_" + split));
    s.s_2d = detail::unstack_grids(read("S_2d_" + split));
    s.f = read("f_" + split).data;
    const json& meta = m.at("samples").at(split);
    s.compliance = meta.at("compliance").get<std::vector<double>>();
    s.iterations = meta.at("iterations").get<std::vector<int>>();
    const std::size_t n = s.f.size();
    if (s.X.size() != n || s.s_scalar.size() != n || s.s_1d.size() != n || s.s_2d.size() != n ||
        s.compliance.size() != n || s.iterations.size() != n)
      throw FormatError("split '" + split + "': sample counts disagree across arrays");
  }
  for (const auto& e : m.at("excluded"))
    b.excluded.push_back({e.at("split").get<std::string>(), e.at("f").get<double>(),
                          e.at("iterations").get<int>(), e.at("reason").get<std::string>()});
  return b;
}

}  // namespace rrto::dataset
