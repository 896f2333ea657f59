#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dyncov/cli.hpp"
#include "dyncov/error.hpp"
#include "dyncov/eval.hpp"
#include "dyncov/mle.hpp"
#include "dyncov/models.hpp"
#include "dyncov/mvstat.hpp"
#include "dyncov/rapf.hpp"

namespace py = pybind11;
using namespace dyncov;

namespace {

Innovation parse_innovation(const std::string& s) {
  if (s == "gaussian") return Innovation::gaussian;
  if (s == "student-t") return Innovation::student_t;
  fail(ErrorKind::InvalidArgument, "innovation must be 'gaussian' or 'student-t'");
}

py::dict params_dict(const BekkParams& p) {
  py::dict d;
  d["variant"] = p.variant == BekkVariant::diagonal ? "diagonal" : "full";
  if (p.variant == BekkVariant::diagonal) {
    d["a"] = p.a;
    d["b"] = p.b;
  } else {
    d["A"] = p.A;
    d["B"] = p.B;
  }
  d["c"] = p.c;
  d["nu"] = p.nu ? py::cast(*p.nu) : py::none();
  return d;
}

py::dict records_dict(const std::vector<PredictionRecord>& records) {
  const auto n = static_cast<Eigen::Index>(records.size());
  Eigen::VectorXi step(n);
  Vector mixture(n), plugin(n), ess(n);
  std::vector<Matrix> cov;
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto& r = records[static_cast<std::size_t>(t)];
    step[t] = static_cast<int>(r.step);
    mixture[t] = r.pred_logdensity_mixture;
    plugin[t] = r.pred_logdensity_plugin;
    ess[t] = r.ess;
    cov.push_back(r.predicted_cov_mean);
  }
  py::dict d;
  d["step"] = step;
  d["pred_loglik_mixture"] = mixture;
  d["pred_loglik_plugin"] = plugin;
  d["ess"] = ess;
  d["predicted_cov"] = cov;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "BEKK and BMDC covariance forecasting";
  m.attr("__version__") = kVersion;

  static py::exception<Error> error(m, "DyncovError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def("mvn_logpdf", [](const Vector& x, const Matrix& s) { return mvn_logpdf(x, s); },
        py::arg("x"), py::arg("sigma"));
  m.def("mvt_logpdf", [](const Vector& x, double nu, const Matrix& s) { return mvt_logpdf(x, nu, s); },
        py::arg("x"), py::arg("nu"), py::arg("scale"),
        "Student-t log density with scale matrix (not covariance).");

  m.def(
      "simulate_bekk",
      [](const Vector& a, const Vector& b, const Vector& c, std::size_t steps, const Matrix& sigma0,
         std::uint64_t seed, std::optional<double> nu) {
        Rng rng(seed);
        return simulate(BekkParams::diagonal(a, b, c, nu), steps, sigma0, rng).x;
      },
      py::arg("a"), py::arg("b"), py::arg("c"), py::arg("steps"), py::arg("sigma0"),
      py::arg("seed") = 0, py::arg("nu") = py::none(),
      "Diagonal BEKK draw; c is the packed upper triangle of C.");

  m.def(
      "fit_bekk",
      [](const Matrix& series, const std::string& variant, const std::string& innovation,
         int restarts, int max_iters, std::uint64_t seed) {
        FitConfig cfg;
        cfg.variant = variant == "full" ? BekkVariant::full : BekkVariant::diagonal;
        cfg.innovation = parse_innovation(innovation);
        cfg.n_restarts = restarts;
        cfg.max_iters = max_iters;
        cfg.seed = seed;
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit_bekk(series, cfg);
        }
        py::dict d = params_dict(r.params);
        d["loglik"] = r.loglik;
        d["iterations"] = r.iterations;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("series"), py::arg("variant") = "diagonal", py::arg("innovation") = "gaussian",
      py::arg("restarts") = 5, py::arg("max_iters") = 2000, py::arg("seed") = 0);

  m.def(
      "run_filter",
      [](const Matrix& series, int particles, double shrinkage, const std::string& innovation,
         std::uint64_t seed, int warmup) {
        RapfConfig cfg;
        cfg.n_particles = particles;
        cfg.shrinkage_a = shrinkage;
        cfg.innovation = parse_innovation(innovation);
        cfg.seed = seed;
        FilterRun run;
        {
          py::gil_scoped_release release;
          const Eigen::Index n = std::min<Eigen::Index>(series.rows(), std::max(warmup, 1));
          run = run_filter(series, initial_sigma(series.topRows(n)), cfg);
        }
        const PosteriorMean pm = posterior_mean(run.cloud);
        py::dict d = records_dict(run.records);
        d["posterior_a"] = pm.theta.a;
        d["posterior_b"] = pm.theta.b;
        d["posterior_c"] = pm.theta.c;
        return d;
      },
      py::arg("series"), py::arg("particles") = 4000, py::arg("shrinkage") = 0.95,
      py::arg("innovation") = "gaussian", py::arg("seed") = 0, py::arg("warmup") = 50);

  m.def(
      "rolling_evaluate",
      [](const Matrix& series, const std::string& method, int warmup, int particles,
         std::uint64_t seed) {
        const auto parsed = parse_method(method);
        if (!parsed) fail(ErrorKind::InvalidArgument, "unknown method " + method);
        EvalConfig cfg;
        cfg.warmup = warmup;
        cfg.seed = seed;
        cfg.rapf.n_particles = particles;
        EvalRun run;
        {
          py::gil_scoped_release release;
          run = rolling_evaluate(series, *parsed, cfg);
        }
        py::dict d = records_dict(run.records);
        d["avg_loglik"] = run.avg_loglik;
        d["cum_loglik"] = run.cum_loglik;
        d["failures"] = run.failures;
        return d;
      },
      py::arg("series"), py::arg("method"), py::arg("warmup") = 50, py::arg("particles") = 4000,
      py::arg("seed") = 0);

  m.def(
      "friedman_test",
      [](const Matrix& scores, double alpha) {
        ScoreTable tbl;
        tbl.scores = scores;
        for (Eigen::Index i = 0; i < scores.rows(); ++i) tbl.methods.push_back("m" + std::to_string(i));
        for (Eigen::Index j = 0; j < scores.cols(); ++j) tbl.datasets.push_back("d" + std::to_string(j));
        const FriedmanResult r = friedman_test(tbl, alpha);
        py::dict d;
        d["statistic"] = r.statistic;
        d["critical_value"] = r.critical_value;
        d["p_value"] = r.p_value;
        d["reject"] = r.reject;
        d["avg_ranks"] = r.avg_ranks;
        return d;
      },
      py::arg("scores"), py::arg("alpha") = 0.05,
      "scores is methods x datasets; larger is better.");

  m.def("nemenyi_critical_distance", &nemenyi_critical_distance, py::arg("k"), py::arg("n"),
        py::arg("alpha") = 0.05);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit code, stdout, stderr).");
}
