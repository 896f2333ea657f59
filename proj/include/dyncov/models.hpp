#pragma once

// Covariance recursions (GARCH(1,1), diagonal and full BEKK(1,1), BMDC),
// the random-walk parameter diffusion, constraint checks and simulators.

#include <cstddef>
#include <optional>
#include <vector>

#include "dyncov/mvstat.hpp"
#include "dyncov/random.hpp"

namespace dyncov {

// T x d, one observation per row.
using ReturnSeries = Eigen::MatrixXd;

struct GarchParams {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  double beta1 = 0.0;

  // Throws InvalidParams unless alpha0 > 0, alpha1, beta1 >= 0,
  // alpha1 + beta1 < 1 and everything is finite.
  void validate() const;
};

// sigma2_t = alpha0 + alpha1 x_{t-1}^2 + beta1 sigma2_{t-1}
double garch_step(double sigma2, double last_x, const GarchParams& p);

// Number of entries in the packed upper triangle of a d x d matrix.
constexpr std::size_t packed_size(std::size_t d) { return d * (d + 1) / 2; }

// Dimension whose packed upper triangle has `n` entries; throws
// DimensionMismatch if `n` is not triangular.
Eigen::Index dim_from_packed(Eigen::Index n);

// Upper-triangular C from its row-major packed entries, and back.
Matrix unpack_upper(const Vector& c);
Vector pack_upper(const Matrix& upper);

// C^T C for packed upper-triangular C, exactly symmetric.
Matrix gram_from_packed(const Vector& c);

enum class BekkVariant { diagonal, full };

struct BekkParams {
  BekkVariant variant = BekkVariant::diagonal;
  Vector a;  // diag(A), diagonal variant
  Vector b;  // diag(B), diagonal variant
  Matrix A;  // full variant
  Matrix B;  // full variant
  Vector c;  // packed upper-triangular C
  std::optional<double> nu;  // Student-t degrees of freedom

  static BekkParams diagonal(Vector a, Vector b, Vector c,
                             std::optional<double> nu = std::nullopt);
  static BekkParams full(Matrix A, Matrix B, Vector c,
                         std::optional<double> nu = std::nullopt);

  Eigen::Index dim() const;
  Innovation innovation() const {
    return nu ? Innovation::student_t : Innovation::gaussian;
  }
  Matrix A_matrix() const;
  Matrix B_matrix() const;
  std::size_t parameter_count() const;

  // Throws DimensionMismatch / InvalidDof on malformed parameter sets.
  void validate() const;
};

// Time-indexed BMDC parameters theta_t = (a_t, b_t, c_t).
struct ParamState {
  Vector a;
  Vector b;
  Vector c;

  Eigen::Index dim() const { return a.size(); }
};

// Drift hyper-parameters. Only |alpha|, |beta|, |gamma| are used as the
// diffusion standard deviations.
struct DriftHypers {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double kappa = 0.0;
  double tau = 0.005 * 0.005;
};

// (Sigma_{t-1}, x_{t-1}).
struct CovRecursionState {
  CovMatrix sigma;
  Vector last_x;
};

CovMatrix bekk_step(const CovRecursionState& state, const BekkParams& p);
CovMatrix bmdc_step(const CovRecursionState& state, const ParamState& theta);

// Allocation-free diagonal recursion:
//   out = ctc + B x x^T B + A sigma A,  A = diag(a), B = diag(b).
// The result is exactly symmetric whenever `sigma` and `ctc` are.
void diagonal_recursion(const Matrix& sigma, const Eigen::Ref<const Vector>& x,
                        const Vector& a, const Vector& b, const Matrix& ctc,
                        Matrix& out);

ParamState diffuse_params(const ParamState& theta, const DriftHypers& h,
                          Rng& rng);

// Enforces both prod(a^2) + prod(b^2) <= 1 and the elementwise
// a_i^2 + b_i^2 <= 1. For the full variant the elementwise condition is
// replaced by spectral radius(A (x) A + B (x) B) <= 1.
bool stationarity_check(const BekkParams& p);
bool stationarity_check(const ParamState& theta);
bool diagonal_stationary(const Vector& a, const Vector& b);

inline constexpr int kInitialRejectionBudget = 100000;

// a_0, b_0 ~ U[0,1)^d by rejection on stationarity; diag(C_0) ~ U[0.05, 0.5),
// off-diagonal C_0 ~ N(0, 0.05^2).
ParamState sample_initial_params(Eigen::Index d, Rng& rng);

struct Simulation {
  ReturnSeries x;                  // T x d
  std::vector<CovMatrix> sigmas;   // Sigma_t used to draw row t of x
  std::vector<ParamState> thetas;  // BMDC only: theta_t behind sigmas[t]
};

// The recursion starts from (sigma0, 0): Sigma_0 = step(sigma0, x_{-1} = 0),
// then x_t ~ law(Sigma_t) and Sigma_{t+1} = step(Sigma_t, x_t).
Simulation simulate(const BekkParams& p, std::size_t steps,
                    const CovMatrix& sigma0, Rng& rng);

// BMDC generative process; theta0 drives Sigma_0 and every later theta_t is
// one diffusion step from theta_{t-1}.
Simulation simulate(const ParamState& theta0, const DriftHypers& h,
                    std::size_t steps, const CovMatrix& sigma0, Rng& rng,
                    Innovation law = Innovation::gaussian, double nu = 0.0);

// Empirical covariance (divisor n) of a warmup prefix, with diagonal jitter
// added when it is numerically singular. Throws TooFewObservations when the
// prefix has fewer than d + 1 rows or no variation at all.
CovMatrix initial_sigma(const ReturnSeries& prefix);

// Diagonal BEKK parameters viewed as a constant BMDC state.
ParamState to_param_state(const BekkParams& p);

}  // namespace dyncov
