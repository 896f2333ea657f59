#include "dyncov/mvstat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dyncov/error.hpp"

namespace dyncov {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_square(const Matrix& s) {
  if (s.rows() != s.cols() || s.rows() == 0) {
    fail(ErrorKind::DimensionMismatch,
         "expected a non-empty square matrix, got " + std::to_string(s.rows()) +
             "x" + std::to_string(s.cols()));
  }
}

void check_dims(const Vector& x, const Matrix& s) {
  check_square(s);
  if (x.size() != s.rows()) {
    fail(ErrorKind::DimensionMismatch,
         "vector of size " + std::to_string(x.size()) + " against " +
             std::to_string(s.rows()) + "x" + std::to_string(s.rows()) +
             " matrix");
  }
}

void check_dof(double nu) {
  if (!(nu > 2.0) || std::isnan(nu)) {
    fail(ErrorKind::InvalidDof,
         "degrees of freedom must exceed 2, got " + std::to_string(nu));
  }
}

// Factorizes `s` into `llt`, retrying once with diagonal jitter.
bool try_factor(const Matrix& s, Eigen::LLT<Matrix>& llt, Matrix& scratch) {
  if (!s.allFinite()) return false;
  llt.compute(s);
  if (llt.info() == Eigen::Success) return true;
  const double jitter = kJitterScale * s.trace() / static_cast<double>(s.rows());
  if (!(jitter > 0.0)) return false;
  scratch = s;
  scratch.diagonal().array() += jitter;
  llt.compute(scratch);
  return llt.info() == Eigen::Success;
}

double log_det_from(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

struct Factored {
  Eigen::LLT<Matrix> llt;
  Matrix scratch;
};

Factored factor_or_throw(const Matrix& s) {
  check_square(s);
  Factored f;
  if (!try_factor(s, f.llt, f.scratch)) {
    fail(ErrorKind::NotPositiveDefinite,
         "matrix is not positive definite (Cholesky failed after jitter)");
  }
  return f;
}

double gaussian_from(double quad, double log_det, double d) {
  return -0.5 * (d * kLog2Pi + log_det + quad);
}

double student_from(double quad_scale, double log_det_scale, double d,
                    double nu) {
  return std::lgamma(0.5 * (nu + d)) - std::lgamma(0.5 * nu) -
         0.5 * d * std::log(nu * std::numbers::pi) - 0.5 * log_det_scale -
         0.5 * (nu + d) * std::log1p(quad_scale / nu);
}

// Density given a factorization of the covariance `sigma`.
double innovation_from(double quad_sigma, double log_det_sigma, double d,
                       Innovation law, double nu) {
  if (law == Innovation::gaussian) {
    return gaussian_from(quad_sigma, log_det_sigma, d);
  }
  // S = r * Sigma with r = (nu - 2) / nu.
  const double r = (nu - 2.0) / nu;
  return student_from(quad_sigma / r, log_det_sigma + d * std::log(r), d, nu);
}

}  // namespace

Matrix cholesky(const CovMatrix& s) {
  Factored f = factor_or_throw(s);
  return f.llt.matrixL();
}

double log_det_spd(const CovMatrix& s) {
  return log_det_from(factor_or_throw(s).llt);
}

double mvn_logpdf(const Vector& x, const CovMatrix& s) {
  check_dims(x, s);
  Factored f = factor_or_throw(s);
  Vector y = x;
  f.llt.matrixL().solveInPlace(y);
  return gaussian_from(y.squaredNorm(), log_det_from(f.llt),
                       static_cast<double>(x.size()));
}

double mvt_logpdf(const Vector& x, double nu, const CovMatrix& s) {
  check_dof(nu);
  check_dims(x, s);
  Factored f = factor_or_throw(s);
  Vector y = x;
  f.llt.matrixL().solveInPlace(y);
  return student_from(y.squaredNorm(), log_det_from(f.llt),
                      static_cast<double>(x.size()), nu);
}

CovMatrix scale_from_cov(double nu, const CovMatrix& sigma) {
  check_dof(nu);
  return ((nu - 2.0) / nu) * sigma;
}

double innovation_logpdf(const Vector& x, const CovMatrix& sigma,
                         Innovation law, double nu) {
  if (law == Innovation::student_t) check_dof(nu);
  check_dims(x, sigma);
  Factored f = factor_or_throw(sigma);
  Vector y = x;
  f.llt.matrixL().solveInPlace(y);
  return innovation_from(y.squaredNorm(), log_det_from(f.llt),
                         static_cast<double>(x.size()), law, nu);
}

Vector sample_mvn(const Vector& mean, const Matrix& cov, Rng& rng) {
  check_dims(mean, cov);
  const Eigen::Index k = mean.size();
  Vector z(k);
  for (Eigen::Index i = 0; i < k; ++i) z[i] = rng.normal();

  const bool diagonal =
      (cov.array() != 0.0).count() == (cov.diagonal().array() != 0.0).count();
  if (diagonal) {
    if ((cov.diagonal().array() < 0.0).any() || !cov.allFinite()) {
      fail(ErrorKind::NotPositiveDefinite, "negative variance in diagonal covariance");
    }
    return mean + (cov.diagonal().array().sqrt() * z.array()).matrix();
  }
  Factored f = factor_or_throw(cov);
  return mean + f.llt.matrixL() * z;
}

Vector sample_mvt(double nu, const CovMatrix& sigma, Rng& rng) {
  check_dof(nu);
  Vector z = sample_mvn(Vector::Zero(sigma.rows()), scale_from_cov(nu, sigma), rng);
  const double w = rng.chi_squared(nu);
  return z * std::sqrt(nu / w);
}

Vector sample_innovation(const CovMatrix& sigma, Innovation law, double nu,
                         Rng& rng) {
  if (law == Innovation::student_t) return sample_mvt(nu, sigma, rng);
  return sample_mvn(Vector::Zero(sigma.rows()), sigma, rng);
}

MeanCov weighted_mean_and_cov(const WeightedPoints& pts) {
  const Eigen::Index n = pts.points.cols();
  if (n == 0) fail(ErrorKind::EmptyCloud, "no points");
  if (pts.weights.size() != n) {
    fail(ErrorKind::DimensionMismatch, "weights and points disagree in count");
  }
  MeanCov out;
  out.mean = pts.points * pts.weights;
  const Matrix centered = pts.points.colwise() - out.mean;
  out.cov = centered * pts.weights.asDiagonal() * centered.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights,
                                             Rng& rng) {
  return systematic_resample(weights, weights.size(), rng);
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights,
                                             std::size_t count, Rng& rng) {
  const std::size_t n = weights.size();
  if (n == 0) fail(ErrorKind::DegenerateWeights, "empty weight vector");
  double total = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) {
      fail(ErrorKind::DegenerateWeights, "negative or non-finite weight");
    }
    total += w;
    if (w > 0.0) last_positive = i;
  }
  if (!(total > 0.0)) fail(ErrorKind::DegenerateWeights, "all weights are zero");

  std::vector<std::size_t> out(count);
  const double offset = rng.uniform();
  const double dn = static_cast<double>(count);
  std::size_t j = 0;
  double cumulative = weights[0] / total;
  for (std::size_t i = 0; i < count; ++i) {
    const double position = (offset + static_cast<double>(i)) / dn;
    while (position >= cumulative && j < last_positive) {
      ++j;
      cumulative += weights[j] / total;
    }
    out[i] = j;
  }
  return out;
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double effective_sample_size(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return 1.0 / sq;
}

DensityKernel::DensityKernel(Eigen::Index dim)
    : llt_(dim), jittered_(dim, dim), solve_(dim) {}

double DensityKernel::logpdf(const Eigen::Ref<const Vector>& x,
                             const CovMatrix& sigma, Innovation law,
                             double nu) {
  if (x.size() != sigma.rows() || sigma.rows() != sigma.cols()) {
    fail(ErrorKind::DimensionMismatch, "observation and covariance disagree");
  }
  if (!try_factor(sigma, llt_, jittered_)) {
    return -std::numeric_limits<double>::infinity();
  }
  solve_ = x;
  llt_.matrixL().solveInPlace(solve_);
  return innovation_from(solve_.squaredNorm(), log_det_from(llt_),
                         static_cast<double>(x.size()), law, nu);
}

}  // namespace dyncov
