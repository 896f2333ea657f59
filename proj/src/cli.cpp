#include "dyncov/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dyncov/data.hpp"
#include "dyncov/error.hpp"
#include "dyncov/eval.hpp"
#include "dyncov/mle.hpp"
#include "dyncov/rapf.hpp"

namespace dyncov {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Globals {
  std::uint64_t seed = 0;
  int particles = 4000;
  double shrinkage = 0.95;
  int warmup = 50;
  std::string innovation = "gaussian";
  bool no_standardize = false;
  std::string output;
  std::string format = "csv";
  int jobs = 1;
  bool timing = false;
  std::string input_kind = "returns";
  std::string return_kind = "log";
  int stale_gap = 5;

  Innovation law() const {
    return innovation == "gaussian" ? Innovation::gaussian : Innovation::student_t;
  }
  RapfConfig rapf() const {
    RapfConfig cfg;
    cfg.n_particles = particles;
    cfg.shrinkage_a = shrinkage;
    cfg.innovation = law();
    cfg.seed = seed;
    cfg.jobs = jobs;
    return cfg;
  }
};

// Writes to a file when a path is given, otherwise to `fallback`.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) fail(ErrorKind::InvalidArgument, "cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

std::ofstream open_file(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::InvalidArgument, "cannot write " + path.string());
  return f;
}

json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

Vector vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix matrix_from(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != m.cols()) {
      fail(ErrorKind::ParseError, "ragged matrix in parameter file");
    }
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  return m;
}

json params_to_json(const BekkParams& p) {
  json j;
  j["variant"] = p.variant == BekkVariant::diagonal ? "diagonal" : "full";
  j["dim"] = p.dim();
  if (p.variant == BekkVariant::diagonal) {
    j["a"] = to_json(p.a);
    j["b"] = to_json(p.b);
  } else {
    j["A"] = to_json(p.A);
    j["B"] = to_json(p.B);
  }
  j["c"] = to_json(p.c);
  if (p.nu) j["nu"] = *p.nu;
  return j;
}

BekkParams params_from_json(const json& j) {
  try {
    std::optional<double> nu;
    if (j.contains("nu") && !j["nu"].is_null()) nu = j["nu"].get<double>();
    if (j.value("variant", "diagonal") == "full") {
      return BekkParams::full(matrix_from(j.at("A")), matrix_from(j.at("B")),
                              vector_from(j.at("c")), nu);
    }
    return BekkParams::diagonal(vector_from(j.at("a")), vector_from(j.at("b")),
                                vector_from(j.at("c")), nu);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("bad parameter file: ") + e.what());
  }
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FileNotFound, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path + ": " + e.what());
  }
}

Dataset load_dataset(const std::string& path, const Globals& g, std::ostream& err) {
  const RawTable raw = load_csv(path);
  if (raw.dropped_rows > 0) {
    err << "warning: dropped " << raw.dropped_rows << " unparsable rows from " << path << '\n';
  }
  ReturnSeries series = raw.values;
  if (g.input_kind == "prices") {
    const Returns r = to_returns(raw.values,
                                 g.return_kind == "simple" ? ReturnKind::simple : ReturnKind::log,
                                 g.stale_gap);
    if (r.stale_rows > 0) {
      err << "warning: dropped " << r.stale_rows << " stale zero-return rows from " << path << '\n';
    }
    series = r.series;
  }
  const std::string name = fs::path(path).stem().string();
  if (series.rows() == 0) fail(ErrorKind::EmptyFile, "no usable rows in " + path);
  if (g.no_standardize) return Dataset{name, series, path, false};
  return standardize(series, name, path);
}

CovMatrix start_sigma(const ReturnSeries& series, int warmup) {
  const Eigen::Index n = std::min<Eigen::Index>(series.rows(), std::max(warmup, 1));
  return initial_sigma(series.topRows(n));
}

std::string filter_method(Innovation law) {
  return law == Innovation::student_t ? "BMDC-T" : "BMDC";
}

json record_to_json(const PredictionRecord& r, std::string_view method, bool timing) {
  return {{"step", r.step},
          {"method", method},
          {"pred_loglik_mixture", r.pred_logdensity_mixture},
          {"pred_loglik_plugin", r.pred_logdensity_plugin},
          {"ess", r.ess},
          {"elapsed_seconds", timing ? r.elapsed_seconds : 0.0},
          {"predicted_cov", to_json(Matrix(r.predicted_cov_mean))}};
}

void write_records(std::ostream& out, const std::string& format, std::string_view method,
                   const std::vector<PredictionRecord>& records, bool timing) {
  if (format == "json") {
    json arr = json::array();
    for (const auto& r : records) arr.push_back(record_to_json(r, method, timing));
    out << arr.dump(2) << '\n';
  } else {
    write_records_csv(out, method, records, timing);
  }
}

Vector broadcast(const std::vector<double>& values, Eigen::Index d, const char* name) {
  if (values.size() == 1) return Vector::Constant(d, values.front());
  if (static_cast<Eigen::Index>(values.size()) != d) {
    fail(ErrorKind::DimensionMismatch, std::string("--") + name + " needs 1 or " +
                                           std::to_string(d) + " values");
  }
  return Eigen::Map<const Vector>(values.data(), d);
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  int dim = 2;
  int steps = 1000;
  std::vector<double> a{0.9};
  std::vector<double> b{0.35};
  double variance = 1.0;
  double nu = 8.0;
  std::vector<double> drift;
  std::string params;
  std::string truth;
};

void do_simulate(const SimulateArgs& s, const Globals& g, std::ostream& out) {
  BekkParams p;
  CovMatrix sigma0;
  if (!s.params.empty()) {
    p = params_from_json(read_json(s.params));
    if (g.law() == Innovation::student_t && !p.nu) p.nu = s.nu;
    if (g.law() == Innovation::gaussian) p.nu.reset();
    sigma0 = gram_from_packed(p.c);
  } else {
    const Eigen::Index d = s.dim;
    if (d < 1) fail(ErrorKind::InvalidArgument, "--dim must be >= 1");
    const Vector a = broadcast(s.a, d, "a");
    const Vector b = broadcast(s.b, d, "b");
    if (!diagonal_stationary(a, b)) fail(ErrorKind::InvalidParams, "a, b are not stationary");
    if (!(s.variance > 0.0)) fail(ErrorKind::InvalidArgument, "--variance must be positive");
    // Diagonal C with unconditional covariance variance * I.
    Matrix c = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double room = 1.0 - a[i] * a[i] - b[i] * b[i];
      if (!(room > 0.0)) fail(ErrorKind::InvalidParams, "a_i^2 + b_i^2 must be below 1");
      c(i, i) = std::sqrt(room * s.variance);
    }
    std::optional<double> nu;
    if (g.law() == Innovation::student_t) nu = s.nu;
    p = BekkParams::diagonal(a, b, pack_upper(c), nu);
    sigma0 = s.variance * Matrix::Identity(d, d);
  }
  p.validate();
  if (s.steps < 1) fail(ErrorKind::InvalidArgument, "--steps must be >= 1");

  Rng rng(g.seed);
  Simulation sim;
  if (!s.drift.empty()) {
    if (s.drift.size() != 3) fail(ErrorKind::InvalidArgument, "--drift takes alpha,beta,gamma");
    if (p.variant != BekkVariant::diagonal) {
      fail(ErrorKind::InvalidParams, "diffusing parameters need the diagonal variant");
    }
    const DriftHypers h{s.drift[0], s.drift[1], s.drift[2]};
    sim = simulate(to_param_state(p), h, static_cast<std::size_t>(s.steps), sigma0, rng,
                   p.innovation(), p.nu.value_or(0.0));
  } else {
    sim = simulate(p, static_cast<std::size_t>(s.steps), sigma0, rng);
  }
  Output sink(g.output, out);
  write_series_csv(*sink, sim.x);

  if (!s.truth.empty()) {
    std::ofstream f = open_file(s.truth);
    const Eigen::Index d = sim.x.cols();
    f << "step";
    if (!sim.thetas.empty()) {
      for (Eigen::Index i = 0; i < d; ++i) f << ",a_" << i + 1;
      for (Eigen::Index i = 0; i < d; ++i) f << ",b_" << i + 1;
    }
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i; j < d; ++j) f << ",sigma_" << i + 1 << '_' << j + 1;
    f << '\n';
    for (std::size_t t = 0; t < sim.sigmas.size(); ++t) {
      f << t;
      if (!sim.thetas.empty()) {
        for (Eigen::Index i = 0; i < d; ++i) f << ',' << format_double(sim.thetas[t].a[i]);
        for (Eigen::Index i = 0; i < d; ++i) f << ',' << format_double(sim.thetas[t].b[i]);
      }
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i; j < d; ++j) f << ',' << format_double(sim.sigmas[t](i, j));
      f << '\n';
    }
  }
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string input;
  std::string variant = "diagonal";
  int restarts = 5;
  int max_iters = 2000;
};

void do_fit(const FitArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  const Dataset ds = load_dataset(a.input, g, err);
  FitConfig cfg;
  cfg.variant = a.variant == "full" ? BekkVariant::full : BekkVariant::diagonal;
  cfg.innovation = g.law();
  cfg.n_restarts = a.restarts;
  cfg.max_iters = a.max_iters;
  cfg.seed = g.seed;
  const FitResult r = fit_bekk(ds.series, cfg);
  json j = params_to_json(r.params);
  j["loglik"] = r.loglik;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["dataset"] = ds.name;
  j["observations"] = ds.series.rows();
  j["standardized"] = ds.standardized;
  j["seed"] = g.seed;
  Output sink(g.output, out);
  *sink << j.dump(2) << '\n';
}

// ------------------------------------------------------------------ filter

struct FilterArgs {
  std::string input;
  int snapshot_every = 0;
  std::string snapshot_dir = ".";
  std::string resume;
  std::string posterior;
};

void do_filter(const FilterArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  const Dataset ds = load_dataset(a.input, g, err);
  const RapfConfig cfg = g.rapf();
  const Eigen::Index d = ds.series.cols();

  std::ofstream post;
  if (!a.posterior.empty()) {
    post = open_file(a.posterior);
    post << "step";
    for (Eigen::Index i = 0; i < d; ++i) post << ",a_" << i + 1;
    for (Eigen::Index i = 0; i < d; ++i) post << ",b_" << i + 1;
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d))); ++k) {
      post << ",c_" << k + 1;
    }
    post << ",alpha,beta,gamma" << (cfg.innovation == Innovation::student_t ? ",nu" : "") << '\n';
  }
  if (a.snapshot_every > 0) fs::create_directories(a.snapshot_dir);

  const FilterObserver observer = [&](const ParticleCloud& cloud, const PredictionRecord&) {
    if (post.is_open()) {
      const PosteriorMean pm = posterior_mean(cloud);
      post << cloud.step;
      for (Eigen::Index i = 0; i < d; ++i) post << ',' << format_double(pm.theta.a[i]);
      for (Eigen::Index i = 0; i < d; ++i) post << ',' << format_double(pm.theta.b[i]);
      for (Eigen::Index k = 0; k < pm.theta.c.size(); ++k) post << ',' << format_double(pm.theta.c[k]);
      post << ',' << format_double(pm.hypers.alpha) << ',' << format_double(pm.hypers.beta) << ','
           << format_double(pm.hypers.gamma);
      if (cfg.innovation == Innovation::student_t) post << ',' << format_double(pm.nu);
      post << '\n';
    }
    if (a.snapshot_every > 0 && cloud.step % a.snapshot_every == 0) {
      std::ofstream f = open_file(fs::path(a.snapshot_dir) /
                                  ("cloud_" + std::to_string(cloud.step) + ".txt"));
      save_cloud(f, cloud);
    }
  };

  FilterRun run;
  if (!a.resume.empty()) {
    std::ifstream in(a.resume);
    if (!in) fail(ErrorKind::FileNotFound, "cannot open " + a.resume);
    run = continue_filter(load_cloud(in), ds.series, cfg, observer);
  } else {
    run = run_filter(ds.series, start_sigma(ds.series, g.warmup), cfg, observer);
  }
  Output sink(g.output, out);
  write_records(*sink, g.format, filter_method(cfg.innovation), run.records, g.timing);
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::vector<std::string> inputs;
  std::vector<std::string> methods{"BEKK", "BEKK-T", "BMDC", "BMDC-T"};
  std::string refit = "warm";
  int fit_restarts = 5;
  int fit_iters = 2000;
  int refit_iters = 200;
  std::string manifest;
};

// Arguments with --output and --manifest removed, for the manifest.
std::vector<std::string> replayable_args(const std::vector<std::string>& args) {
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& s = args[i];
    if (s == "--output" || s == "-o" || s == "--manifest") {
      ++i;
      continue;
    }
    if (s.rfind("--output=", 0) == 0 || s.rfind("--manifest=", 0) == 0) continue;
    kept.push_back(s);
  }
  return kept;
}

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

void do_evaluate(const EvaluateArgs& a, const Globals& g, const std::vector<std::string>& args,
                 std::ostream& err) {
  if (g.output.empty()) fail(ErrorKind::InvalidArgument, "evaluate needs --output <directory>");
  const auto started = std::chrono::steady_clock::now();
  std::vector<Method> methods;
  for (const auto& name : a.methods) {
    const auto m = parse_method(name);
    if (!m) fail(ErrorKind::InvalidArgument, "unknown method " + name);
    methods.push_back(*m);
  }
  std::vector<Dataset> datasets;
  for (const auto& path : a.inputs) datasets.push_back(load_dataset(path, g, err));

  EvalConfig cfg;
  cfg.warmup = g.warmup;
  cfg.seed = g.seed;
  cfg.rapf = g.rapf();
  cfg.rapf.jobs = 1;
  cfg.fit_restarts = a.fit_restarts;
  cfg.fit_iters = a.fit_iters;
  cfg.refit_iters = a.refit_iters;
  cfg.cold_refit = a.refit == "cold";

  // Independent (dataset, method) runs on up to --jobs workers.
  const std::size_t tasks = datasets.size() * methods.size();
  std::vector<std::optional<EvalRun>> runs(tasks);
  std::vector<std::exception_ptr> errors(tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      try {
        runs[t] = rolling_evaluate(datasets[t / methods.size()].series,
                                   methods[t % methods.size()], cfg);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp<int>(g.jobs, 1, static_cast<int>(tasks)));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const fs::path dir(g.output);
  fs::create_directories(dir);
  ScoreTable scores;
  for (Method m : methods) scores.methods.emplace_back(method_name(m));
  scores.scores.resize(static_cast<Eigen::Index>(methods.size()),
                       static_cast<Eigen::Index>(datasets.size()));
  json summary_runs = json::array();
  for (std::size_t t = 0; t < tasks; ++t) {
    const Dataset& ds = datasets[t / methods.size()];
    const EvalRun& run = *runs[t];
    const std::string method(method_name(run.method));
    const std::string ext = g.format == "json" ? ".json" : ".csv";
    std::ofstream f = open_file(dir / ("records_" + file_safe(ds.name) + "_" + file_safe(method) + ext));
    write_records(f, g.format, method, run.records, g.timing);
    scores.scores(static_cast<Eigen::Index>(t % methods.size()),
                  static_cast<Eigen::Index>(t / methods.size())) = run.avg_loglik;
    summary_runs.push_back({{"method", method},
                            {"dataset", ds.name},
                            {"avg_loglik", run.avg_loglik},
                            {"cum_loglik", run.cum_loglik},
                            {"failures", run.failures},
                            {"records", run.records.size()},
                            {"warmup", run.warmup}});
  }
  for (const auto& ds : datasets) scores.datasets.push_back(ds.name);

  const json config = {{"seed", g.seed},
                       {"particles", g.particles},
                       {"shrinkage", g.shrinkage},
                       {"warmup", g.warmup},
                       {"standardize", !g.no_standardize},
                       {"input_kind", g.input_kind},
                       {"return_kind", g.return_kind},
                       {"stale_gap", g.stale_gap},
                       {"refit", a.refit},
                       {"fit_restarts", a.fit_restarts},
                       {"fit_iters", a.fit_iters},
                       {"refit_iters", a.refit_iters},
                       {"methods", a.methods}};
  {
    std::ofstream f = open_file(dir / "summary.json");
    f << json{{"runs", summary_runs}, {"config", config}}.dump(2) << '\n';
  }
  if (datasets.size() >= 2 && methods.size() >= 2) {
    std::ofstream f = open_file(dir / "scores.csv");
    write_score_table(f, scores);
  }
  std::vector<std::string> inputs;
  for (const auto& ds : datasets) inputs.push_back(ds.source_path);
  const json manifest = {
      {"command", "evaluate"},
      {"args", replayable_args(args)},
      {"inputs", inputs},
      {"methods", a.methods},
      {"config", config},
      {"seed", g.seed},
      {"version", kVersion},
      {"wall_time_seconds",
       std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};
  std::ofstream f = open_file(dir / "manifest.json");
  f << manifest.dump(2) << '\n';
}

// ----------------------------------------------------------------- compare

void do_compare(const std::string& input, double alpha, const Globals& g, std::ostream& out) {
  std::ifstream in(input);
  if (!in) fail(ErrorKind::FileNotFound, "cannot open " + input);
  const ScoreTable tbl = read_score_table(in);
  const Matrix ranks = rank_table(tbl);
  const FriedmanResult fr = friedman_test(tbl, alpha);
  const int k = static_cast<int>(tbl.methods.size());
  const int n = static_cast<int>(tbl.datasets.size());
  const double cd = nemenyi_critical_distance(k, n, alpha);
  const BoolMatrix sig = pairwise_significance(fr.avg_ranks, cd);

  Output sink(g.output, out);
  if (g.format == "json") {
    json per_dataset = json::object();
    for (int j = 0; j < n; ++j) {
      per_dataset[tbl.datasets[static_cast<std::size_t>(j)]] = to_json(Vector(ranks.col(j)));
    }
    json pairs = json::array();
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j)
        pairs.push_back({{"a", tbl.methods[static_cast<std::size_t>(i)]},
                         {"b", tbl.methods[static_cast<std::size_t>(j)]},
                         {"significant", static_cast<bool>(sig(i, j))}});
    *sink << json{{"methods", tbl.methods},
                  {"test", "friedman_chi_square"},
                  {"statistic", fr.statistic},
                  {"critical_value", fr.critical_value},
                  {"p_value", fr.p_value},
                  {"reject", fr.reject},
                  {"alpha", alpha},
                  {"avg_ranks", to_json(fr.avg_ranks)},
                  {"ranks", per_dataset},
                  {"nemenyi_cd", cd},
                  {"pairwise", pairs}}
                 .dump(2)
          << '\n';
    return;
  }
  *sink << "dataset";
  for (const auto& m : tbl.methods) *sink << ',' << m;
  *sink << '\n';
  for (int j = 0; j < n; ++j) {
    *sink << tbl.datasets[static_cast<std::size_t>(j)];
    for (int i = 0; i < k; ++i) *sink << ',' << format_double(ranks(i, j));
    *sink << '\n';
  }
  *sink << "average";
  for (int i = 0; i < k; ++i) *sink << ',' << format_double(fr.avg_ranks[i]);
  *sink << '\n';
}

// ------------------------------------------------------------------- curve

struct CurveArgs {
  std::string input;
  std::string snapshot;
  int dim_index = 0;
  double grid_min = -5.0;
  double grid_max = 5.0;
  int grid_points = 101;
};

void do_curve(const CurveArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  if (a.grid_points < 1) fail(ErrorKind::InvalidArgument, "--grid-points must be >= 1");
  const RapfConfig cfg = g.rapf();
  ParticleCloud cloud;
  if (!a.snapshot.empty()) {
    std::ifstream in(a.snapshot);
    if (!in) fail(ErrorKind::FileNotFound, "cannot open " + a.snapshot);
    cloud = load_cloud(in);
  } else {
    if (a.input.empty()) fail(ErrorKind::InvalidArgument, "curve needs an input series or --snapshot");
    const Dataset ds = load_dataset(a.input, g, err);
    cloud = run_filter(ds.series, start_sigma(ds.series, g.warmup), cfg).cloud;
  }
  std::vector<double> grid;
  for (int i = 0; i < a.grid_points; ++i) {
    grid.push_back(a.grid_points == 1
                       ? a.grid_min
                       : a.grid_min + (a.grid_max - a.grid_min) * i / (a.grid_points - 1));
  }
  Rng rng = filter_step_stream(g.seed, cloud.step);
  const auto curve = predictive_density_curve(cloud, a.dim_index, grid, cfg, rng);
  Output sink(g.output, out);
  if (g.format == "json") {
    json arr = json::array();
    for (const auto& p : curve) {
      arr.push_back({{"point", p.point}, {"mixture_logpdf", p.mixture_logpdf},
                     {"plugin_logpdf", p.plugin_logpdf}});
    }
    *sink << arr.dump(2) << '\n';
    return;
  }
  *sink << "point,mixture_logpdf,plugin_logpdf\n";
  for (const auto& p : curve) {
    *sink << format_double(p.point) << ',' << format_double(p.mixture_logpdf) << ','
          << format_double(p.plugin_logpdf) << '\n';
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-varying covariance forecasting with BEKK and particle-filtered BMDC models",
               "dyncov"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--particles", g.particles, "Particles for the BMDC filter")
      ->check(CLI::Range(2, 100000000))
      ->capture_default_str();
  app.add_option("--shrinkage", g.shrinkage, "Shrinkage coefficient a in (0, 1]")
      ->capture_default_str();
  app.add_option("--warmup", g.warmup, "Observations before the first prediction")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--innovation", g.innovation, "Innovation law")
      ->check(CLI::IsMember({"gaussian", "student-t"}))
      ->capture_default_str();
  app.add_flag("--no-standardize", g.no_standardize, "Use the series as given");
  app.add_option("-o,--output", g.output, "Output file (directory for evaluate)");
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--timing", g.timing, "Write measured wall times instead of 0");
  app.add_option("--input-kind", g.input_kind, "Whether input columns hold returns or prices")
      ->check(CLI::IsMember({"returns", "prices"}))
      ->capture_default_str();
  app.add_option("--return-kind", g.return_kind, "Return construction for price input")
      ->check(CLI::IsMember({"log", "simple"}))
      ->capture_default_str();
  app.add_option("--stale-gap", g.stale_gap, "Drop runs of at least this many zero-return rows")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "Simulate a diagonal BEKK or BMDC series");
  sim->add_option("--dim", sim_args.dim, "Number of series")->capture_default_str();
  sim->add_option("--steps", sim_args.steps, "Observations to draw")->capture_default_str();
  sim->add_option("--a", sim_args.a, "diag(A), one value or one per series")->delimiter(',');
  sim->add_option("--b", sim_args.b, "diag(B), one value or one per series")->delimiter(',');
  sim->add_option("--variance", sim_args.variance, "Unconditional variance")->capture_default_str();
  sim->add_option("--nu", sim_args.nu, "Student-t degrees of freedom")->capture_default_str();
  sim->add_option("--drift", sim_args.drift, "alpha,beta,gamma for diffusing parameters")
      ->delimiter(',');
  sim->add_option("--params", sim_args.params, "Parameter JSON as written by fit");
  sim->add_option("--truth", sim_args.truth, "Also write the true covariance path here");

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Maximum-likelihood BEKK fit");
  fit->add_option("input", fit_args.input, "Series CSV")->required();
  fit->add_option("--variant", fit_args.variant, "BEKK parameterization")
      ->check(CLI::IsMember({"diagonal", "full"}))
      ->capture_default_str();
  fit->add_option("--restarts", fit_args.restarts, "Optimizer restarts")->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--max-iters", fit_args.max_iters, "Iterations per restart")->check(CLI::PositiveNumber)->capture_default_str();

  FilterArgs filter_args;
  CLI::App* filter = app.add_subcommand("filter", "Run the BMDC particle filter over a series");
  filter->add_option("input", filter_args.input, "Series CSV")->required();
  filter->add_option("--snapshot-every", filter_args.snapshot_every, "Write the cloud every k steps");
  filter->add_option("--snapshot-dir", filter_args.snapshot_dir)->capture_default_str();
  filter->add_option("--resume", filter_args.resume, "Continue from a cloud snapshot");
  filter->add_option("--posterior", filter_args.posterior, "Write posterior means per step here");

  EvaluateArgs eval_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Rolling one-step-ahead evaluation");
  evaluate->add_option("inputs", eval_args.inputs, "Series CSV files");
  evaluate->add_option("--methods", eval_args.methods)->delimiter(',')->capture_default_str();
  evaluate->add_option("--refit", eval_args.refit)
      ->check(CLI::IsMember({"warm", "cold"}))
      ->capture_default_str();
  evaluate->add_option("--fit-restarts", eval_args.fit_restarts)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--fit-iters", eval_args.fit_iters)->check(CLI::PositiveNumber)->capture_default_str();
  evaluate->add_option("--refit-iters", eval_args.refit_iters)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--manifest", eval_args.manifest, "Re-run the evaluation a manifest describes");

  std::string compare_input;
  double alpha = 0.05;
  CLI::App* compare = app.add_subcommand("compare", "Friedman test and Nemenyi distances");
  compare->add_option("scores", compare_input, "Score table CSV")->required();
  compare->add_option("--alpha", alpha)->capture_default_str();

  CurveArgs curve_args;
  CLI::App* curve = app.add_subcommand("curve", "Predictive densities along one coordinate");
  curve->add_option("input", curve_args.input, "Series CSV");
  curve->add_option("--snapshot", curve_args.snapshot, "Use a saved cloud instead of filtering");
  curve->add_option("--dim-index", curve_args.dim_index)->capture_default_str();
  curve->add_option("--grid-min", curve_args.grid_min)->capture_default_str();
  curve->add_option("--grid-max", curve_args.grid_max)->capture_default_str();
  curve->add_option("--grid-points", curve_args.grid_points)->capture_default_str();

  for (CLI::App* sub : {sim, fit, filter, evaluate, compare, curve}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: Usage: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*sim) do_simulate(sim_args, g, out);
    if (*fit) do_fit(fit_args, g, out, err);
    if (*filter) do_filter(filter_args, g, out, err);
    if (*evaluate) {
      if (!eval_args.manifest.empty()) {
        const json m = read_json(eval_args.manifest);
        if (m.value("command", "") != "evaluate" || !m.contains("args")) {
          fail(ErrorKind::ParseError, "not an evaluate manifest: " + eval_args.manifest);
        }
        auto replay = m["args"].get<std::vector<std::string>>();
        if (!g.output.empty()) {
          replay.push_back("--output");
          replay.push_back(g.output);
        }
        return run_cli(replay, out, err);
      }
      if (eval_args.inputs.empty()) {
        err << "error: Usage: evaluate needs at least one input\n\n" << evaluate->help();
        return 2;
      }
      do_evaluate(eval_args, g, args, err);
    }
    if (*compare) do_compare(compare_input, alpha, g, out);
    if (*curve) do_curve(curve_args, g, out, err);
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace dyncov
