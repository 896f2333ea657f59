#pragma once

// Rolling one-step-ahead evaluation, scoring and the Friedman / Nemenyi
// comparison of several methods over several datasets.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dyncov/mle.hpp"
#include "dyncov/rapf.hpp"

namespace dyncov {

enum class Method { bekk, bekk_t, bmdc, bmdc_t };

// "BEKK", "BEKK-T", "BMDC", "BMDC-T".
std::string_view method_name(Method m) noexcept;
// Case-insensitive; also accepts "bekk_t" style spellings.
std::optional<Method> parse_method(std::string_view name);
Innovation method_innovation(Method m) noexcept;

struct EvalConfig {
  int warmup = 50;
  std::uint64_t seed = 0;
  RapfConfig rapf;  // innovation is overridden by the method
  // First BEKK fit on the warmup prefix.
  int fit_iters = 2000;
  int fit_restarts = 5;
  // Later refits: warm start from the previous optimum, capped iterations.
  int refit_iters = 200;
  bool cold_refit = false;
  double max_failure_fraction = 0.10;
};

struct EvalRun {
  Method method = Method::bmdc;
  int warmup = 0;
  // One record per predicted row; record.step is the 0-based row index.
  // BEKK records carry the same value in both density columns and ESS 1.
  std::vector<PredictionRecord> records;
  double avg_loglik = 0.0;
  double cum_loglik = 0.0;
  int failures = 0;
};

// Predicts rows warmup .. T-1 one step ahead. BEKK methods refit on the
// expanding window before every prediction; BMDC methods run one filter pass
// over the whole series. Failed steps get the worst finite density of the run
// and are counted; more than max_failure_fraction of them aborts the run.
EvalRun rolling_evaluate(const ReturnSeries& series, Method method, const EvalConfig& cfg);

// (mean, sum) of the mixture density column.
std::pair<double, double> average_and_cumulative(const std::vector<PredictionRecord>& records);

// Trailing-window means, one point per full window, keyed by the step of the
// window's last record.
std::vector<std::pair<long, double>> learning_curve(const std::vector<PredictionRecord>& records,
                                                    int window);

// k methods x n datasets, higher is better.
struct ScoreTable {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  Matrix scores;

  void validate() const;
};

// Per-dataset ranks (rows = methods), 1 = best, ties averaged.
Matrix rank_table(const ScoreTable& tbl);

struct FriedmanResult {
  double statistic = 0.0;  // chi-square form
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  Vector avg_ranks;
};

FriedmanResult friedman_test(const ScoreTable& tbl, double alpha);

// q_alpha(k) sqrt(k (k + 1) / (6 n)), tabulated for k in [2, 10] and
// alpha in {0.05, 0.10}.
double nemenyi_critical_distance(int k, int n, double alpha);

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// true iff |R_i - R_j| > cd.
BoolMatrix pairwise_significance(const Vector& avg_ranks, double cd);

}  // namespace dyncov
