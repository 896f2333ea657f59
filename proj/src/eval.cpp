#include "dyncov/eval.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

#include <boost/math/distributions/chi_squared.hpp>

#include "dyncov/error.hpp"

namespace dyncov {

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::bekk: return "BEKK";
    case Method::bekk_t: return "BEKK-T";
    case Method::bmdc: return "BMDC";
    case Method::bmdc_t: return "BMDC-T";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  std::string key;
  for (char c : name) {
    key.push_back(c == '_' ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  for (Method m : {Method::bekk, Method::bekk_t, Method::bmdc, Method::bmdc_t}) {
    if (key == method_name(m)) return m;
  }
  return std::nullopt;
}

Innovation method_innovation(Method m) noexcept {
  return (m == Method::bekk_t || m == Method::bmdc_t) ? Innovation::student_t
                                                      : Innovation::gaussian;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<PredictionRecord> bekk_records(const ReturnSeries& series, Method method,
                                           const EvalConfig& cfg, const CovMatrix& sigma0) {
  const Eigen::Index total = series.rows();
  BekkLikelihood likelihood(series, sigma0);
  FitConfig fit;
  fit.innovation = method_innovation(method);
  fit.max_iters = cfg.fit_iters;
  fit.n_restarts = cfg.fit_restarts;
  fit.seed = cfg.seed;

  std::vector<PredictionRecord> records;
  std::optional<BekkParams> previous;
  for (Eigen::Index t = cfg.warmup; t < total; ++t) {
    const auto started = Clock::now();
    FitConfig step_cfg = fit;
    if (previous && !cfg.cold_refit) {
      step_cfg.initial = previous;
      step_cfg.max_iters = cfg.refit_iters;
      step_cfg.n_restarts = 1;
      step_cfg.initial_step = 0.1;
      step_cfg.polish_iters = 0;
    }
    PredictionRecord rec;
    rec.step = static_cast<long>(t);
    rec.ess = 1.0;
    try {
      const FitResult result = fit_bekk(likelihood, t, step_cfg);
      previous = result.params;
      const CovRecursionState state = likelihood.final_state(result.params, t);
      auto [sigma, lp] = predict_one_step(result.params, state, series.row(t).transpose());
      rec.predicted_cov_mean = std::move(sigma);
      rec.pred_logdensity_mixture = lp;
    } catch (const Error&) {
      rec.pred_logdensity_mixture = -std::numeric_limits<double>::infinity();
      rec.predicted_cov_mean = CovMatrix::Constant(series.cols(), series.cols(),
                                                   std::numeric_limits<double>::quiet_NaN());
    }
    rec.pred_logdensity_plugin = rec.pred_logdensity_mixture;
    rec.elapsed_seconds = seconds_since(started);
    records.push_back(std::move(rec));
  }
  return records;
}

// Moves every particle through the deterministic recursion without
// reweighting; used when an observation cannot be assimilated.
ParticleCloud pass_through(const ParticleCloud& cloud, const Vector& x) {
  ParticleCloud next = cloud;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    next.particles[i].sigma = bmdc_step({cloud.particles[i].sigma, cloud.last_x},
                                        cloud.particles[i].theta);
  }
  next.last_x = x;
  next.step = cloud.step + 1;
  return next;
}

std::vector<PredictionRecord> bmdc_records(const ReturnSeries& series, Method method,
                                           const EvalConfig& cfg, const CovMatrix& sigma0) {
  RapfConfig rcfg = cfg.rapf;
  rcfg.innovation = method_innovation(method);
  rcfg.seed = cfg.seed;
  Rng init = Rng::substream(rcfg.seed, 0x1417);
  ParticleCloud cloud = init_cloud(rcfg, series.cols(), sigma0, init);
  std::vector<PredictionRecord> records;
  for (Eigen::Index t = 0; t < series.rows(); ++t) {
    const Vector x = series.row(t).transpose();
    PredictionRecord rec;
    try {
      Rng rng = filter_step_stream(rcfg.seed, cloud.step);
      auto [next, r] = rapf_update(cloud, x, rcfg, rng);
      cloud = std::move(next);
      rec = std::move(r);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateWeights) throw;
      rec.step = cloud.step;
      rec.pred_logdensity_mixture = -std::numeric_limits<double>::infinity();
      rec.pred_logdensity_plugin = rec.pred_logdensity_mixture;
      rec.ess = 1.0;
      rec.predicted_cov_mean = CovMatrix::Constant(series.cols(), series.cols(),
                                                   std::numeric_limits<double>::quiet_NaN());
      cloud = pass_through(cloud, x);
    }
    if (t >= cfg.warmup) records.push_back(std::move(rec));
  }
  return records;
}

// Replaces non-finite densities with the worst finite one of the column.
int patch_failures(std::vector<PredictionRecord>& records) {
  double worst_mix = std::numeric_limits<double>::infinity();
  double worst_plug = worst_mix;
  int failures = 0;
  for (const auto& r : records) {
    if (std::isfinite(r.pred_logdensity_mixture)) {
      worst_mix = std::min(worst_mix, r.pred_logdensity_mixture);
    } else {
      ++failures;
    }
    if (std::isfinite(r.pred_logdensity_plugin)) {
      worst_plug = std::min(worst_plug, r.pred_logdensity_plugin);
    }
  }
  for (auto& r : records) {
    if (!std::isfinite(r.pred_logdensity_mixture)) r.pred_logdensity_mixture = worst_mix;
    if (!std::isfinite(r.pred_logdensity_plugin)) r.pred_logdensity_plugin = worst_plug;
  }
  return failures;
}

}  // namespace

EvalRun rolling_evaluate(const ReturnSeries& series, Method method, const EvalConfig& cfg) {
  const Eigen::Index d = series.cols();
  if (cfg.warmup < d + 2) {
    fail(ErrorKind::InvalidArgument,
         "warmup must be at least d + 2 = " + std::to_string(d + 2));
  }
  if (series.rows() <= cfg.warmup) {
    fail(ErrorKind::TooFewObservations, "series must be longer than the warmup");
  }
  if (!series.allFinite()) fail(ErrorKind::NonFinite, "series contains non-finite values");

  const CovMatrix sigma0 = initial_sigma(series.topRows(cfg.warmup));
  EvalRun run;
  run.method = method;
  run.warmup = cfg.warmup;
  run.records = (method == Method::bekk || method == Method::bekk_t)
                    ? bekk_records(series, method, cfg, sigma0)
                    : bmdc_records(series, method, cfg, sigma0);
  run.failures = patch_failures(run.records);
  const auto steps = static_cast<double>(run.records.size());
  if (run.failures > cfg.max_failure_fraction * steps) {
    fail(ErrorKind::RunAborted, std::string(method_name(method)) + ": " +
                                    std::to_string(run.failures) + " of " +
                                    std::to_string(run.records.size()) + " steps failed");
  }
  std::tie(run.avg_loglik, run.cum_loglik) = average_and_cumulative(run.records);
  return run;
}

std::pair<double, double> average_and_cumulative(const std::vector<PredictionRecord>& records) {
  if (records.empty()) fail(ErrorKind::EmptyRun, "no prediction records");
  double sum = 0.0;
  for (const auto& r : records) sum += r.pred_logdensity_mixture;
  return {sum / static_cast<double>(records.size()), sum};
}

std::vector<std::pair<long, double>> learning_curve(const std::vector<PredictionRecord>& records,
                                                    int window) {
  if (window < 1) fail(ErrorKind::InvalidArgument, "window must be >= 1");
  std::vector<std::pair<long, double>> out;
  const auto w = static_cast<std::size_t>(window);
  double acc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    acc += records[i].pred_logdensity_mixture;
    if (i >= w) acc -= records[i - w].pred_logdensity_mixture;
    if (i + 1 >= w) out.emplace_back(records[i].step, acc / static_cast<double>(w));
  }
  return out;
}

void ScoreTable::validate() const {
  const auto k = static_cast<Eigen::Index>(methods.size());
  const auto n = static_cast<Eigen::Index>(datasets.size());
  if (k < 2 || n < 2) fail(ErrorKind::InvalidArgument, "score table needs k >= 2 and n >= 2");
  if (scores.rows() != k || scores.cols() != n) {
    fail(ErrorKind::DimensionMismatch, "score matrix must be methods x datasets");
  }
  if (!scores.allFinite()) fail(ErrorKind::NonFinite, "score table contains NaN or inf");
}

Matrix rank_table(const ScoreTable& tbl) {
  tbl.validate();
  const Eigen::Index k = tbl.scores.rows();
  const Eigen::Index n = tbl.scores.cols();
  Matrix ranks(k, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < n; ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index l, Eigen::Index r) {
      return tbl.scores(l, j) > tbl.scores(r, j);
    });
    for (std::size_t lo = 0; lo < order.size();) {
      std::size_t hi = lo + 1;
      while (hi < order.size() && tbl.scores(order[hi], j) == tbl.scores(order[lo], j)) ++hi;
      const double avg = 0.5 * static_cast<double>(lo + 1 + hi);  // mean of lo+1 .. hi
      for (std::size_t m = lo; m < hi; ++m) ranks(order[m], j) = avg;
      lo = hi;
    }
  }
  return ranks;
}

FriedmanResult friedman_test(const ScoreTable& tbl, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  const Matrix ranks = rank_table(tbl);
  const Eigen::Index k = ranks.rows();
  const Eigen::Index n = ranks.cols();
  if (k == 2) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (tbl.scores(0, j) == tbl.scores(1, j)) {
        fail(ErrorKind::DegenerateTable,
             "dataset '" + tbl.datasets[static_cast<std::size_t>(j)] + "' is tied for k = 2");
      }
    }
  }
  FriedmanResult out;
  out.avg_ranks = ranks.rowwise().mean();
  const double kd = static_cast<double>(k);
  const double nd = static_cast<double>(n);
  out.statistic = 12.0 * nd / (kd * (kd + 1.0)) *
                  (out.avg_ranks.squaredNorm() - kd * (kd + 1.0) * (kd + 1.0) / 4.0);
  // Rounding can leave a tiny negative value for identical columns.
  out.statistic = std::max(out.statistic, 0.0);
  const boost::math::chi_squared dist(kd - 1.0);
  out.critical_value = boost::math::quantile(boost::math::complement(dist, alpha));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  out.reject = out.statistic > out.critical_value;
  return out;
}

double nemenyi_critical_distance(int k, int n, double alpha) {
  // Studentized range quantiles divided by sqrt(2), k = 2 .. 10.
  static constexpr std::array<double, 9> q05 = {1.960, 2.343, 2.569, 2.728, 2.850,
                                                2.949, 3.031, 3.102, 3.164};
  static constexpr std::array<double, 9> q10 = {1.645, 2.052, 2.291, 2.459, 2.589,
                                                2.693, 2.780, 2.855, 2.920};
  if (k < 2 || k > 10) fail(ErrorKind::UnsupportedK, "k must lie in [2, 10]");
  if (n < 1) fail(ErrorKind::InvalidArgument, "n must be >= 1");
  const std::array<double, 9>* table = nullptr;
  if (std::abs(alpha - 0.05) < 1e-12) table = &q05;
  if (std::abs(alpha - 0.10) < 1e-12) table = &q10;
  if (!table) fail(ErrorKind::UnsupportedAlpha, "alpha must be 0.05 or 0.10");
  const double q = (*table)[static_cast<std::size_t>(k - 2)];
  return q * std::sqrt(k * (k + 1.0) / (6.0 * n));
}

BoolMatrix pairwise_significance(const Vector& avg_ranks, double cd) {
  const Eigen::Index k = avg_ranks.size();
  BoolMatrix sig = BoolMatrix::Constant(k, k, false);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      sig(i, j) = i != j && std::abs(avg_ranks[i] - avg_ranks[j]) > cd;
  return sig;
}

}  // namespace dyncov
