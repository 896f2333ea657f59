#pragma once

// Constrained maximum-likelihood fitting of BEKK / BEKK-T and their one-step
// predictions.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dyncov/models.hpp"
#include "dyncov/mvstat.hpp"

namespace dyncov {

// Smooth bijection between an unconstrained vector z and the feasible BEKK
// parameter set.
//
// Diagonal variant: a_i = logistic(z), b_i = sqrt(1 - a_i^2) logistic(z'),
// so a_i^2 + b_i^2 < 1 (and hence the determinant condition) always holds.
// The diagonal of C goes through softplus, off-diagonal entries are free,
// and nu = 2 + exp(z_nu).
//
// Full variant: A and B entries are free (infeasible points are rejected by
// the objective), C and nu as above.
class BekkTransform {
 public:
  BekkTransform(BekkVariant variant, Eigen::Index dim, Innovation law);

  Eigen::Index size() const { return size_; }
  BekkParams to_params(const Vector& z) const;
  // Values on the boundary of the feasible set are nudged inside first.
  Vector to_unconstrained(const BekkParams& p) const;

 private:
  BekkVariant variant_;
  Eigen::Index dim_;
  Innovation law_;
  Eigen::Index size_;
};

// Log-likelihood of a series under the BEKK recursion started from
// (sigma0, 0). Reuses buffers across calls, so one instance per thread.
class BekkLikelihood {
 public:
  BekkLikelihood(const ReturnSeries& series, CovMatrix sigma0);

  // Sum of log p(x_t | Sigma_t) over the first `length` rows (all rows when
  // length is 0). Returns -inf if some Sigma_t is not SPD.
  double operator()(const BekkParams& p, Eigen::Index length = 0);

  // Recursion state (Sigma_{n-1}, x_{n-1}) after consuming `length` rows.
  CovRecursionState final_state(const BekkParams& p, Eigen::Index length = 0) const;

  Eigen::Index rows() const { return obs_.cols(); }
  const CovMatrix& sigma0() const { return sigma0_; }

 private:
  Matrix obs_;  // d x T, one observation per column
  CovMatrix sigma0_;
  DensityKernel kernel_;
  Matrix prev_, next_, ctc_;
  Vector bx_;
};

double bekk_loglik(const BekkParams& params, const ReturnSeries& series,
                   const CovMatrix& sigma0);

struct FitConfig {
  BekkVariant variant = BekkVariant::diagonal;
  Innovation innovation = Innovation::gaussian;
  int max_iters = 2000;
  int n_restarts = 5;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  double initial_step = 0.5;
  int polish_iters = 100;
  // Recursion start; defaults to initial_sigma(series).
  std::optional<CovMatrix> sigma0;
  // Warm start used as the first initialization.
  std::optional<BekkParams> initial;

  void validate() const;
};

struct FitResult {
  BekkParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

FitResult fit_bekk(const ReturnSeries& series, const FitConfig& cfg);

// Same as fit_bekk but over the first `length` rows of a shared likelihood.
FitResult fit_bekk(BekkLikelihood& likelihood, Eigen::Index length,
                   const FitConfig& cfg);

// (Sigma_{t+1}, log p(x_next | Sigma_{t+1})).
std::pair<CovMatrix, double> predict_one_step(const BekkParams& params,
                                              const CovRecursionState& state,
                                              const Vector& x_next);

}  // namespace dyncov
