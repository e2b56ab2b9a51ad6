// rrto: dataset generation, training, evaluation, prediction and serving.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rrto/config.hpp"
#include "rrto/pipelines.hpp"
#include "rrto/service.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace rrto;
using latentmap::Direction;
using latentmap::Qoi;
using nn::RowMat;
using nn::Tensor;

namespace {

/// Error that maps onto a specific exit status.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& p) {
  try {
    return json::parse(io::read_text(p));
  } catch (const json::parse_error& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

config::RunConfig load_config(const std::string& path) {
  return path.empty() ? config::RunConfig{} : config::load(path);
}

void progress(const json& j) { std::cerr << j.dump() << std::endl; }

/// Provenance mismatch; fatal unless forced.
void check_pair(bool ok, const std::string& what, bool force) {
  if (ok) return;
  if (!force) throw FormatError(what + " (use --force to override)");
  progress({{"warning", what}});
}

std::string meta_string(const json& meta, const char* key) {
  return meta.contains(key) && meta.at(key).is_string() ? meta.at(key).get<std::string>() : "";
}

// ---------------------------------------------------------------------------
// Array shape helpers

Tensor geometry_input(const io::Array& a, int rows, int cols) {
  const auto& s = a.shape;
  int n = 0;
  if (s.size() == 2 && s[0] == static_cast<std::uint64_t>(rows) && s[1] == static_cast<std::uint64_t>(cols)) n = 1;
  else if (s.size() == 3 && s[1] == static_cast<std::uint64_t>(rows) && s[2] == static_cast<std::uint64_t>(cols))
    n = static_cast<int>(s[0]);
  else if (s.size() == 4 && s[1] == 1 && s[2] == static_cast<std::uint64_t>(rows) && s[3] == static_cast<std::uint64_t>(cols))
    n = static_cast<int>(s[0]);
  else
    throw ContractError("input array does not hold " + std::to_string(rows) + "x" + std::to_string(cols) + " grids");
  return Tensor({n, 1, rows, cols}, a.data);
}

Tensor qoi_input(const io::Array& a, const pipelines::Pipeline& p) {
  const nn::Shape qs = p.qoi_shape();
  if (qs.size() == 3) return geometry_input(a, qs[1], qs[2]);
  const auto w = static_cast<std::uint64_t>(qs[0]);
  const auto& s = a.shape;
  if (p.qoi() == Qoi::scalar && s.size() == 1) return Tensor({static_cast<int>(s[0]), 1}, a.data);
  if (s.size() == 1 && s[0] == w) return Tensor({1, qs[0]}, a.data);
  if (s.size() == 2 && s[1] == w) return Tensor({static_cast<int>(s[0]), qs[0]}, a.data);
  throw ContractError("input array does not hold " + latentmap::qoi_name(p.qoi()) + " samples of width " +
                      std::to_string(w));
}

/// Output arrays drop the channel axis of grids and the trailing 1 of scalars.
io::Array output_array(const Tensor& t) {
  std::vector<std::uint64_t> shape{static_cast<std::uint64_t>(t.batch())};
  for (std::size_t i = 1; i < t.shape.size(); ++i)
    if (!(t.shape.size() == 4 && i == 1) && !(t.shape.size() == 2 && t.shape[1] == 1))
      shape.push_back(static_cast<std::uint64_t>(t.shape[i]));
  return io::Array{shape, std::vector<double>(t.data.begin(), t.data.end())};
}

// ---------------------------------------------------------------------------
// Commands. Each returns its summary and stores the hash of its effective
// configuration in `hash`.

json gen_dataset(const std::string& cfg_path, const fs::path& out, std::string& hash) {
  const config::RunConfig cfg = load_config(cfg_path);
  const auto t0 = std::chrono::steady_clock::now();
  const auto bundle = dataset::generate(cfg.plan, cfg.simp, thread_count(),
                                        [](const std::string& split, int i, const dataset::Sample& s) {
                                          progress({{"split", split},
                                                    {"index", i},
                                                    {"f", s.f},
                                                    {"iterations", s.iterations},
                                                    {"compliance", s.compliance},
                                                    {"converged", s.converged}});
                                        });
  dataset::save(bundle, out);
  hash = bundle.config_hash();
  return {{"out", out.string()},
          {"config_hash", hash},
          {"n_train", bundle.train.size()},
          {"n_test", bundle.test.size()},
          {"excluded", bundle.excluded.size()},
          {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
}

json train_rrae(const std::string& kind_name, const fs::path& data_dir, const fs::path& out, double stages_scale,
                const std::string& cfg_path, std::string& hash) {
  const rrae::Kind kind = rrae::parse_kind(kind_name);
  const config::RunConfig cfg = load_config(cfg_path);
  rrae::RraeConfig rc = cfg.rrae(kind);
  rc.schedule = rc.schedule.scaled(stages_scale);
  const auto bundle = dataset::load(data_dir);
  const Tensor x = rrae::training_data(bundle, kind, "train");
  rrae::RraeModel model(rc, x.sample_shape());
  int total = 0;
  for (const auto& s : rc.schedule.stages) total += s.epochs;
  const int every = std::max(1, total / 100);
  int done = 0;
  model.train(x, [&](const rrae::EpochInfo& e) {
    if (++done % every == 0 || done == total)
      progress({{"stage", e.stage}, {"epoch", e.epoch}, {"lr", e.learning_rate}, {"loss", e.mean_batch_loss},
                {"seconds", e.seconds}});
  });
  json& meta = model.metadata();
  meta["dataset_hash"] = bundle.config_hash();
  meta["simp"] = bundle.simp;
  meta["stages_scale"] = stages_scale;
  hash = config::hash({{"rrae", rc}, {"dataset", bundle.config_hash()}});
  meta["config_hash"] = hash;
  if (bundle.test.size() > 0) meta["test_loss"] = model.loss(rrae::training_data(bundle, kind, "test"));
  model.save(out);
  return {{"out", out.string()},
          {"kind", kind_name},
          {"config_hash", hash},
          {"train_loss", meta["train_loss"]},
          {"test_loss", meta.value("test_loss", json(nullptr))}};
}

std::vector<std::string> coefficient_names(const char* prefix, int k) {
  std::vector<std::string> v;
  for (int i = 0; i < k; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

json train_map(const std::string& qoi_name, const std::string& dir_name, const fs::path& geom, const fs::path& sol,
               const fs::path& data_dir, const fs::path& out, const std::string& cfg_path, bool force,
               std::string& hash) {
  const Qoi q = latentmap::parse_qoi(qoi_name);
  const Direction d = latentmap::parse_direction(dir_name);
  const config::RunConfig cfg = load_config(cfg_path);
  const auto g = rrae::RraeModel::load(geom);
  std::optional<rrae::RraeModel> s;
  if (q != Qoi::scalar) {
    if (sol.empty()) throw UsageError("--sol is required for field QoIs");
    s = rrae::RraeModel::load(sol);
    if (s->kind() != pipelines::solution_kind(q))
      throw ConfigError("--sol holds a " + rrae::kind_name(s->kind()) + " model, QoI " + qoi_name + " needs " +
                        rrae::kind_name(pipelines::solution_kind(q)));
  }
  const auto bundle = dataset::load(data_dir);
  check_pair(meta_string(g.metadata(), "dataset_hash") == bundle.config_hash(),
             "geometry checkpoint was trained on another dataset", force);
  if (s)
    check_pair(meta_string(s->metadata(), "dataset_hash") == bundle.config_hash(),
               "solution checkpoint was trained on another dataset", force);

  const auto tr = pipelines::latent_pairs(g, s ? &*s : nullptr, bundle, q, "train");
  const bool direct = d == Direction::direct;
  const RowMat& in = direct ? tr.alpha : tr.beta;
  const RowMat& target = direct ? tr.beta : tr.alpha;
  const auto names = direct ? (q == Qoi::scalar ? std::vector<std::string>{"s"} : coefficient_names("beta_", target.cols()))
                            : coefficient_names("alpha_", target.cols());
  latentmap::LatentMap map(static_cast<int>(in.cols()), static_cast<int>(target.cols()));
  const auto rep = map.fit(in, target, cfg.map, names);

  json& meta = map.metadata();
  meta["qoi"] = qoi_name;
  meta["direction"] = dir_name;
  meta["dataset_hash"] = bundle.config_hash();
  meta["geometry_hash"] = meta_string(g.metadata(), "config_hash");
  meta["solution_hash"] = s ? meta_string(s->metadata(), "config_hash") : "";
  hash = config::hash({{"map", cfg.map},
                       {"qoi", qoi_name},
                       {"direction", dir_name},
                       {"geometry", meta["geometry_hash"]},
                       {"solution", meta["solution_hash"]}});
  meta["config_hash"] = hash;
  json out_j{{"out", out.string()}, {"config_hash", hash}, {"mse_train", rep.mse_train}, {"r2_train", rep.r2_train}};
  if (bundle.test.size() >= 2) {
    const auto te = pipelines::latent_pairs(g, s ? &*s : nullptr, bundle, q, "test");
    const RowMat pred = map.predict(direct ? te.alpha : te.beta);
    meta["r2_test"] = latentmap::r_squared(direct ? te.beta : te.alpha, pred);
    out_j["r2_test"] = meta["r2_test"];
  }
  map.save(out);
  return out_j;
}

/// Count of f-steps along which compliance increases.
int monotonicity_violations(const dataset::SplitData& s) {
  int v = 0;
  for (std::size_t j = 1; j < s.size(); ++j)
    if (s.compliance[j] > s.compliance[j - 1]) ++v;
  return v;
}

struct Report {
  std::vector<std::tuple<std::string, std::string, double>> rows;
  void add(const std::string& metric, const std::string& split, double v) { rows.emplace_back(metric, split, v); }
  void write(const fs::path& p) const {
    std::string s = "metric,split,value\n";
    for (const auto& [m, sp, v] : rows) s += m + "," + sp + "," + latentmap::format_double(v) + "\n";
    io::write_text(p, s);
  }
};

fs::path sibling(const fs::path& report, const std::string& suffix) {
  return report.parent_path() / (report.stem().string() + suffix);
}

json eval(const fs::path& data_dir, const std::string& models_dir, const std::string& kind_name,
          const std::string& qoi_name, const std::string& dir_name, const std::string& report_path, bool force,
          std::string& hash) {
  const auto bundle = dataset::load(data_dir);
  hash = bundle.config_hash();
  if (!report_path.empty() && fs::path(report_path).has_parent_path())
    fs::create_directories(fs::path(report_path).parent_path());
  Report rep;
  const auto issues = dataset::check_alignment(bundle);
  const int mono = monotonicity_violations(bundle.train);
  rep.add("alignment_issues", "all", static_cast<double>(issues.size()));
  rep.add("monotonicity_violations", "train", mono);
  json out{{"dataset", data_dir.string()},
           {"config_hash", hash},
           {"n_train", bundle.train.size()},
           {"n_test", bundle.test.size()},
           {"excluded", bundle.excluded.size()},
           {"alignment_ok", issues.empty()},
           {"alignment_issues", issues},
           {"monotonicity_violations", mono}};
  if ((!kind_name.empty() || !qoi_name.empty()) && models_dir.empty()) throw UsageError("--models is required");

  if (!kind_name.empty()) {
    const rrae::Kind k = rrae::parse_kind(kind_name);
    const auto m = rrae::RraeModel::load(fs::path(models_dir) / kind_name);
    check_pair(meta_string(m.metadata(), "dataset_hash") == hash, kind_name + " checkpoint was trained on another dataset",
               force);
    json losses;
    for (const std::string split : {"train", "test"}) {
      if (bundle.split(split).size() == 0) continue;
      const double l = m.loss(rrae::training_data(bundle, k, split));
      losses[split] = l;
      rep.add(kind_name + "_loss", split, l);
    }
    out["rrae"] = {{"kind", kind_name}, {"loss", losses}};
  }

  if (!qoi_name.empty()) {
    if (dir_name.empty()) throw UsageError("--direction is required with --qoi");
    const Qoi q = latentmap::parse_qoi(qoi_name);
    const Direction d = latentmap::parse_direction(dir_name);
    const auto set = pipelines::ModelSet::load(models_dir);
    const auto p = set.pipeline(q);
    if (!p || !set.map(q, d)) throw FormatError("models directory lacks the " + qoi_name + "/" + dir_name + " pipeline");
    const auto& map = *set.map(q, d);
    check_pair(meta_string(map.metadata(), "geometry_hash") == meta_string(p->geometry().metadata(), "config_hash"),
               "map and geometry checkpoint do not belong together", force);
    if (p->solution())
      check_pair(meta_string(map.metadata(), "solution_hash") == meta_string(p->solution()->metadata(), "config_hash"),
                 "map and solution checkpoint do not belong together", force);
    check_pair(meta_string(map.metadata(), "dataset_hash") == hash, "map was trained on another dataset", force);

    json metrics;
    std::vector<latentmap::PredictionRow> fit;
    for (const std::string split : {"train", "test"}) {
      if (bundle.split(split).size() == 0) continue;
      Tensor pred;
      if (d == Direction::direct) {
        const auto m = pipelines::evaluate_direct(*p, bundle, split, &pred);
        metrics[split] = {{"r2", m.r2}, {"loss", m.loss}};
        rep.add("geo2sol_" + qoi_name + "_r2", split, m.r2);
        rep.add("geo2sol_" + qoi_name + "_loss", split, m.loss);
      } else {
        const auto m = pipelines::evaluate_inverse(*p, bundle, split, &pred);
        metrics[split] = {{"loss", m.loss},
                          {"max_volume_fraction_gap", m.max_volume_fraction_gap},
                          {"out_of_range", m.out_of_range}};
        rep.add("sol2geo_" + qoi_name + "_loss", split, m.loss);
        rep.add("sol2geo_" + qoi_name + "_max_volume_fraction_gap", split, m.max_volume_fraction_gap);
      }
      // Latent-space fitting curve of the map itself.
      const auto lp = pipelines::latent_pairs(p->geometry(), p->solution(), bundle, q, split);
      const RowMat& in = d == Direction::direct ? lp.alpha : lp.beta;
      const RowMat& truth = d == Direction::direct ? lp.beta : lp.alpha;
      const RowMat y = map.predict(in);
      std::vector<int> ids(in.rows());
      std::iota(ids.begin(), ids.end(), 0);
      const auto names = coefficient_names(d == Direction::direct ? (q == Qoi::scalar ? "s" : "beta_") : "alpha_",
                                           static_cast<int>(truth.cols()));
      latentmap::LatentMap::append_rows(fit, ids, split, truth, y, names);
      if (!report_path.empty()) io::write_array(sibling(report_path, "_pred_" + split + ".rrto"), output_array(pred));
    }
    out["pipeline"] = {{"qoi", qoi_name}, {"direction", dir_name}, {"metrics", metrics}};
    if (!report_path.empty()) latentmap::write_fit_csv(sibling(report_path, "_fit.csv"), fit);
  }
  if (!report_path.empty()) {
    rep.write(report_path);
    out["report"] = report_path;
  }
  return out;
}

json predict(const std::string& which, const std::string& qoi_name, const fs::path& models_dir, const fs::path& input,
             const fs::path& output, std::string& hash) {
  const Qoi q = latentmap::parse_qoi(qoi_name);
  const auto set = pipelines::ModelSet::load(models_dir);
  const auto p = set.pipeline(q);
  if (!p) throw FormatError("models directory lacks the " + qoi_name + " pipeline");
  const io::Array in = io::read_array(input);
  hash = meta_string(p->geometry().metadata(), "config_hash");
  json out{{"pipeline", which}, {"qoi", qoi_name}, {"output", output.string()}};
  if (which == "geo2sol") {
    const nn::Shape gs = p->geometry().sample_shape();
    const Tensor s = p->geo2sol(geometry_input(in, gs[1], gs[2]));
    io::write_array(output, output_array(s));
    out["n"] = s.batch();
  } else if (which == "sol2geo") {
    const auto r = p->sol2geo(qoi_input(in, *p));
    io::write_array(output, output_array(r.x));
    out["n"] = r.x.batch();
    out["out_of_range"] = std::vector<bool>(r.out_of_range.begin(), r.out_of_range.end());
    out["clamped"] = r.clamped;
  } else {
    throw UsageError("--pipeline must be geo2sol or sol2geo");
  }
  return out;
}

json roundtrip(const fs::path& geom, const fs::path& sol, const fs::path& map_dir, double t, const std::string& pair,
               const std::string& csv, std::string& hash) {
  int i = -1, j = -1;
  if (std::sscanf(pair.c_str(), "%d,%d", &i, &j) != 2) throw UsageError("--pair expects i,j");
  auto g = std::make_shared<const rrae::RraeModel>(rrae::RraeModel::load(geom));
  auto s = std::make_shared<const rrae::RraeModel>(rrae::RraeModel::load(sol));
  auto m = std::make_shared<const latentmap::LatentMap>(latentmap::LatentMap::load(map_dir));
  if (s->kind() != rrae::Kind::sol1d) throw ConfigError("--sol must be a sol1d checkpoint");
  const pipelines::Pipeline p(Qoi::d1, g, s, nullptr, m, pipelines::simp_of(*g));
  const std::vector<double> s_new = pipelines::interpolated_curve(*s, i, j, t);
  const Eigen::MatrixXd& B = s->train_coefficients();
  const Eigen::RowVectorXd beta = pipelines::latent_interpolate(B.col(i).transpose(), B.col(j).transpose(), t);
  const auto r = p.roundtrip_verify(s_new);
  hash = meta_string(m->metadata(), "config_hash");
  if (!csv.empty()) {
    std::string text = "index,requested,fem\n";
    for (std::size_t k = 0; k < s_new.size(); ++k)
      text += std::to_string(k) + "," + latentmap::format_double(s_new[k]) + "," +
              (r.s_fem.empty() ? std::string() : latentmap::format_double(r.s_fem[k])) + "\n";
    io::write_text(csv, text);
  }
  return {{"pair", {i, j}},
          {"t", t},
          {"beta", std::vector<double>(beta.data(), beta.data() + beta.size())},
          {"out_of_range", r.out_of_range},
          {"discrepancy", std::isfinite(r.discrepancy) ? json(r.discrepancy) : json(nullptr)},
          {"volume_fraction", r.x.mean()}};
}

int serve(const fs::path& models_dir, const std::string& host, int port, const std::string& origin) {
  auto set = std::make_shared<const pipelines::ModelSet>(pipelines::ModelSet::load(models_dir));
  const service::Service svc(set, origin);
  httplib::Server server;
  svc.bind(server);
  progress({{"listening", host + ":" + std::to_string(port)}, {"models", models_dir.string()}});
  if (!server.listen(host, port)) throw std::runtime_error("could not listen on " + host + ":" + std::to_string(port));
  return 0;
}

// ---------------------------------------------------------------------------
// Error reporting and run log

int exit_code(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const UsageError&) {
    return 2;
  } catch (const ConfigError&) {
    return 2;
  } catch (const FormatError&) {
    return 3;
  } catch (const ContractError&) {
    return 4;
  } catch (const SolverError&) {
    return 5;
  } catch (const DivergenceError&) {
    return 5;
  } catch (...) {
    return 1;
  }
}

std::string error_kind(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const UsageError&) {
    return "usage";
  } catch (const ConfigError&) {
    return "config";
  } catch (const FormatError&) {
    return "format";
  } catch (const ContractError&) {
    return "contract";
  } catch (const SolverError&) {
    return "solver";
  } catch (const DivergenceError&) {
    return "divergence";
  } catch (...) {
    return "internal";
  }
}

void append_log(const std::string& path, const json& entry) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::app);
  if (f) f << entry.dump() << "\n";
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology-optimization dataset, rank-reduction autoencoders and latent pipelines"};
  app.require_subcommand(1);
  const char* env_log = std::getenv("RRTO_RUN_LOG");
  std::string run_log = env_log ? env_log : "rrto_runs.jsonl";
  app.add_option("--run-log", run_log, "JSON-lines run log (empty to disable)");

  std::string cfg, out, data, kind, qoi, direction, geom, sol, map_dir, models, input, output, which, pair, report,
      csv, host = "127.0.0.1", origin = "*";
  double stages_scale = 1.0, t = 0.5;
  int port = 8080;
  bool force = false;

  auto* gen = app.add_subcommand("gen-dataset", "Run the volume-fraction sweep and store the dataset");
  gen->add_option("--config", cfg, "JSON run configuration");
  gen->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train-rrae", "Train one rank-reduction autoencoder");
  tr->add_option("--kind", kind, "geometry | sol1d | sol2d")->required()->check(CLI::IsMember({"geometry", "sol1d", "sol2d"}));
  tr->add_option("--dataset", data, "Dataset directory")->required();
  tr->add_option("--out", out, "Checkpoint directory")->required();
  tr->add_option("--stages-scale", stages_scale, "Multiplier on every stage's epoch count")
      ->check(CLI::PositiveNumber);
  tr->add_option("--config", cfg, "JSON run configuration");

  auto* tm = app.add_subcommand("train-map", "Fit a latent map between geometry and solution coefficients");
  tm->add_option("--qoi", qoi, "s | 1d | 2d")->required()->check(CLI::IsMember({"s", "1d", "2d"}));
  tm->add_option("--direction", direction, "d | i")->required()->check(CLI::IsMember({"d", "i"}));
  tm->add_option("--geom", geom, "Geometry checkpoint")->required();
  tm->add_option("--sol", sol, "Solution checkpoint (field QoIs)");
  tm->add_option("--dataset", data, "Dataset directory")->required();
  tm->add_option("--out", out, "Map checkpoint directory")->required();
  tm->add_option("--config", cfg, "JSON run configuration");
  tm->add_flag("--force", force, "Accept checkpoints from another dataset");

  auto* ev = app.add_subcommand("eval", "Report dataset invariants, autoencoder losses and pipeline metrics");
  ev->add_option("--dataset", data, "Dataset directory")->required();
  ev->add_option("--models", models, "Models directory");
  ev->add_option("--kind", kind, "Autoencoder to evaluate")->check(CLI::IsMember({"geometry", "sol1d", "sol2d"}));
  ev->add_option("--qoi", qoi, "s | 1d | 2d")->check(CLI::IsMember({"s", "1d", "2d"}));
  ev->add_option("--direction", direction, "d | i")->check(CLI::IsMember({"d", "i"}));
  ev->add_option("--report", report, "Metrics CSV; fitting curves and predictions are written next to it");
  ev->add_flag("--force", force, "Evaluate mismatched artifacts anyway");

  auto* pr = app.add_subcommand("predict", "Run a pipeline on an RRTO array");
  pr->add_option("--pipeline", which, "geo2sol | sol2geo")->required()->check(CLI::IsMember({"geo2sol", "sol2geo"}));
  pr->add_option("--qoi", qoi, "s | 1d | 2d")->required()->check(CLI::IsMember({"s", "1d", "2d"}));
  pr->add_option("--models", models, "Models directory")->required();
  pr->add_option("--input", input, "Input RRTO array")->required()->check(CLI::ExistingFile);
  pr->add_option("--output", output, "Output RRTO array")->required();

  auto* rt = app.add_subcommand("roundtrip", "Interpolate two training curves, invert, and verify by FEM");
  rt->add_option("--geom", geom, "Geometry checkpoint")->required();
  rt->add_option("--sol", sol, "sol1d checkpoint")->required();
  rt->add_option("--map", map_dir, "Inverse 1d map checkpoint")->required();
  rt->add_option("--t", t, "Interpolation parameter in [0, 1]")->required();
  rt->add_option("--pair", pair, "Training sample indices i,j")->required();
  rt->add_option("--csv", csv, "Write requested and FEM curves");

  auto* sv = app.add_subcommand("serve", "Serve the explorer HTTP API");
  sv->add_option("--models", models, "Models directory")->required();
  sv->add_option("--port", port, "TCP port")->check(CLI::Range(1, 65535));
  sv->add_option("--host", host, "Bind address");
  sv->add_option("--cors-origin", origin, "Allowed browser origin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) std::cerr << json{{"error", {{"kind", "usage"}, {"message", e.what()}}}}.dump() << std::endl;
    return rc == 0 ? 0 : 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const auto t0 = std::chrono::steady_clock::now();
  std::string hash;
  json entry{{"time", utc_now()}, {"command", cmd->get_name()}, {"args", std::vector<std::string>(argv + 1, argv + argc)}};
  try {
    json result;
    if (cmd == gen) result = gen_dataset(cfg, out, hash);
    else if (cmd == tr) result = train_rrae(kind, data, out, stages_scale, cfg, hash);
    else if (cmd == tm) result = train_map(qoi, direction, geom, sol, data, out, cfg, force, hash);
    else if (cmd == ev) result = eval(data, models, kind, qoi, direction, report, force, hash);
    else if (cmd == pr) result = predict(which, qoi, models, input, output, hash);
    else if (cmd == rt) result = roundtrip(geom, sol, map_dir, t, pair, csv, hash);
    else if (cmd == sv) return serve(models, host, port, origin);
    std::cout << result.dump() << std::endl;
    entry["status"] = "ok";
  } catch (const std::exception& e) {
    const auto ep = std::current_exception();
    std::cerr << json{{"error", {{"kind", error_kind(ep)}, {"message", e.what()}}}}.dump() << std::endl;
    entry["status"] = "error";
    entry["error"] = e.what();
    entry["config_hash"] = hash;
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    append_log(run_log, entry);
    return exit_code(ep);
  }
  entry["config_hash"] = hash;
  entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  append_log(run_log, entry);
  return 0;
}
