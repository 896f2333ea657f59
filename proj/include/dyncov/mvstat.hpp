#pragma once

// Dense SPD linear algebra and multivariate density / sampling kernels.
//
// Everything here is pure given an explicit Rng, and every density is
// returned in log space.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "dyncov/random.hpp"

namespace dyncov {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A d x d symmetric positive definite matrix. Kept as a plain Eigen matrix so
// it composes with the rest of Eigen; the SPD contract is checked wherever a
// factorization is taken.
using CovMatrix = Eigen::MatrixXd;

enum class Innovation { gaussian, student_t };

// Relative size of the diagonal jitter added once when a factorization fails:
// jitter = kJitterScale * trace(S) / d.
inline constexpr double kJitterScale = 1e-10;

// Lower Cholesky factor with one jittered retry. Throws NotPositiveDefinite.
Matrix cholesky(const CovMatrix& s);

double log_det_spd(const CovMatrix& s);

double mvn_logpdf(const Vector& x, const CovMatrix& s);

// Multivariate Student-t with `nu` degrees of freedom and scale matrix `s`
// (not the covariance; see scale_from_cov).
double mvt_logpdf(const Vector& x, double nu, const CovMatrix& s);

// Scale matrix whose Student-t covariance equals `sigma`: ((nu - 2) / nu) sigma.
CovMatrix scale_from_cov(double nu, const CovMatrix& sigma);

// Density of x when its covariance is `sigma` under the given innovation law.
// `nu` is ignored for Gaussian innovations.
double innovation_logpdf(const Vector& x, const CovMatrix& sigma,
                         Innovation law, double nu);

// mean + L z. A diagonal `cov` may carry zero variances (those coordinates
// are returned as the mean exactly).
Vector sample_mvn(const Vector& mean, const Matrix& cov, Rng& rng);

// Zero-mean Student-t draw whose covariance is `sigma` (nu > 2).
Vector sample_mvt(double nu, const CovMatrix& sigma, Rng& rng);

// Draw from the innovation law with covariance `sigma`.
Vector sample_innovation(const CovMatrix& sigma, Innovation law, double nu,
                         Rng& rng);

struct WeightedPoints {
  Matrix points;   // k x n, one point per column
  Vector weights;  // n, normalized
};

struct MeanCov {
  Vector mean;
  Matrix cov;
};

MeanCov weighted_mean_and_cov(const WeightedPoints& pts);

// Systematic resampling with a single uniform offset. Weights are
// renormalized internally; throws DegenerateWeights if they sum to zero or
// contain NaN.
std::vector<std::size_t> systematic_resample(std::span<const double> weights,
                                             Rng& rng);
// Same, drawing `count` ancestors instead of weights.size().
std::vector<std::size_t> systematic_resample(std::span<const double> weights,
                                             std::size_t count, Rng& rng);

double log_sum_exp(std::span<const double> values);

// 1 / sum w^2 for normalized weights.
double effective_sample_size(std::span<const double> weights);

// Reusable factorization scratch for hot loops. Holds no state between calls
// other than buffers, so one per thread suffices.
class DensityKernel {
 public:
  explicit DensityKernel(Eigen::Index dim = 0);

  // Returns -inf when `sigma` is not SPD even after jitter, instead of
  // throwing.
  double logpdf(const Eigen::Ref<const Vector>& x, const CovMatrix& sigma,
                Innovation law, double nu);

 private:
  Eigen::LLT<Matrix> llt_;
  Matrix jittered_;
  Vector solve_;
};

}  // namespace dyncov
