#include "dyncov/models.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "dyncov/error.hpp"

namespace dyncov {

void GarchParams::validate() const {
  const bool finite =
      std::isfinite(alpha0) && std::isfinite(alpha1) && std::isfinite(beta1);
  if (!finite || !(alpha0 > 0.0) || alpha1 < 0.0 || beta1 < 0.0 ||
      !(alpha1 + beta1 < 1.0)) {
    fail(ErrorKind::InvalidParams,
         "GARCH(1,1) needs alpha0 > 0, alpha1, beta1 >= 0, alpha1 + beta1 < 1");
  }
}

double garch_step(double sigma2, double last_x, const GarchParams& p) {
  p.validate();
  if (!(sigma2 > 0.0)) fail(ErrorKind::InvalidArgument, "sigma2 must be positive");
  return p.alpha0 + p.alpha1 * last_x * last_x + p.beta1 * sigma2;
}

Eigen::Index dim_from_packed(Eigen::Index n) {
  Eigen::Index d = 0;
  while (static_cast<Eigen::Index>(packed_size(d)) < n) ++d;
  if (static_cast<Eigen::Index>(packed_size(d)) != n || d == 0) {
    fail(ErrorKind::DimensionMismatch,
         std::to_string(n) + " is not a packed triangle size");
  }
  return d;
}

Matrix unpack_upper(const Vector& c) {
  const Eigen::Index d = dim_from_packed(c.size());
  Matrix upper = Matrix::Zero(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) upper(i, j) = c[k++];
  return upper;
}

Vector pack_upper(const Matrix& upper) {
  const Eigen::Index d = upper.rows();
  Vector c(static_cast<Eigen::Index>(packed_size(d)));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) c[k++] = upper(i, j);
  return c;
}

Matrix gram_from_packed(const Vector& c) {
  const Matrix upper = unpack_upper(c);
  const Eigen::Index d = upper.rows();
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) {
      // (C^T C)_{ij} = sum_k C_{ki} C_{kj}, with C_{ki} = 0 for k > i.
      double s = 0.0;
      for (Eigen::Index k = 0; k <= j; ++k) s += upper(k, i) * upper(k, j);
      g(i, j) = s;
      g(j, i) = s;
    }
  }
  return g;
}

BekkParams BekkParams::diagonal(Vector a, Vector b, Vector c,
                                std::optional<double> nu) {
  BekkParams p;
  p.variant = BekkVariant::diagonal;
  p.a = std::move(a);
  p.b = std::move(b);
  p.c = std::move(c);
  p.nu = nu;
  p.validate();
  return p;
}

BekkParams BekkParams::full(Matrix A, Matrix B, Vector c,
                            std::optional<double> nu) {
  BekkParams p;
  p.variant = BekkVariant::full;
  p.A = std::move(A);
  p.B = std::move(B);
  p.c = std::move(c);
  p.nu = nu;
  p.validate();
  return p;
}

Eigen::Index BekkParams::dim() const {
  return variant == BekkVariant::diagonal ? a.size() : A.rows();
}

Matrix BekkParams::A_matrix() const {
  return variant == BekkVariant::diagonal ? Matrix(a.asDiagonal()) : A;
}

Matrix BekkParams::B_matrix() const {
  return variant == BekkVariant::diagonal ? Matrix(b.asDiagonal()) : B;
}

std::size_t BekkParams::parameter_count() const {
  const auto d = static_cast<std::size_t>(dim());
  const std::size_t ab = variant == BekkVariant::diagonal ? 2 * d : 2 * d * d;
  return ab + packed_size(d) + (nu ? 1 : 0);
}

void BekkParams::validate() const {
  const Eigen::Index d = dim();
  if (d < 1) fail(ErrorKind::DimensionMismatch, "BEKK dimension must be >= 1");
  if (variant == BekkVariant::diagonal) {
    if (b.size() != d) fail(ErrorKind::DimensionMismatch, "a and b differ in size");
  } else if (A.cols() != d || B.rows() != d || B.cols() != d) {
    fail(ErrorKind::DimensionMismatch, "A and B must be square and equal-sized");
  }
  if (c.size() != static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d)))) {
    fail(ErrorKind::DimensionMismatch, "c must hold d(d+1)/2 entries");
  }
  if (nu && !(*nu > 2.0)) fail(ErrorKind::InvalidDof, "nu must exceed 2");
}

void diagonal_recursion(const Matrix& sigma, const Eigen::Ref<const Vector>& x,
                        const Vector& a, const Vector& b, const Matrix& ctc,
                        Matrix& out) {
  const Eigen::Index d = a.size();
  out.resize(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double bx_j = b[j] * x[j];
    for (Eigen::Index i = j; i < d; ++i) {
      const double v = ctc(i, j) + (b[i] * x[i]) * bx_j + (a[i] * a[j]) * sigma(i, j);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
}

namespace {

void check_state(const CovRecursionState& s, Eigen::Index d) {
  if (s.sigma.rows() != d || s.sigma.cols() != d || s.last_x.size() != d) {
    fail(ErrorKind::DimensionMismatch, "recursion state does not match parameters");
  }
}

}  // namespace

CovMatrix bekk_step(const CovRecursionState& state, const BekkParams& p) {
  p.validate();
  const Eigen::Index d = p.dim();
  check_state(state, d);
  const Matrix ctc = gram_from_packed(p.c);
  Matrix out;
  if (p.variant == BekkVariant::diagonal) {
    diagonal_recursion(state.sigma, state.last_x, p.a, p.b, ctc, out);
    return out;
  }
  const Vector bx = p.B.transpose() * state.last_x;
  Matrix arch = p.A.transpose() * state.sigma * p.A;
  arch = 0.5 * (arch + arch.transpose()).eval();
  out = ctc + bx * bx.transpose() + arch;
  return out;
}

CovMatrix bmdc_step(const CovRecursionState& state, const ParamState& theta) {
  const Eigen::Index d = theta.dim();
  if (theta.b.size() != d ||
      theta.c.size() != static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d)))) {
    fail(ErrorKind::DimensionMismatch, "malformed BMDC parameter state");
  }
  check_state(state, d);
  Matrix out;
  diagonal_recursion(state.sigma, state.last_x, theta.a, theta.b,
                     gram_from_packed(theta.c), out);
  return out;
}

ParamState diffuse_params(const ParamState& theta, const DriftHypers& h,
                          Rng& rng) {
  ParamState next = theta;
  const double sa = std::abs(h.alpha);
  const double sb = std::abs(h.beta);
  const double sg = std::abs(h.gamma);
  for (Eigen::Index i = 0; i < next.a.size(); ++i) next.a[i] += sa * rng.normal();
  for (Eigen::Index i = 0; i < next.b.size(); ++i) next.b[i] += sb * rng.normal();
  for (Eigen::Index i = 0; i < next.c.size(); ++i) next.c[i] += sg * rng.normal();
  return next;
}

bool diagonal_stationary(const Vector& a, const Vector& b) {
  if (!a.allFinite() || !b.allFinite() || a.size() != b.size()) return false;
  const Eigen::ArrayXd a2 = a.array().square();
  const Eigen::ArrayXd b2 = b.array().square();
  if (((a2 + b2) > 1.0).any()) return false;
  return a2.prod() + b2.prod() <= 1.0;
}

bool stationarity_check(const BekkParams& p) {
  if (p.variant == BekkVariant::diagonal) return diagonal_stationary(p.a, p.b);
  if (!p.A.allFinite() || !p.B.allFinite()) return false;
  const double da = p.A.determinant();
  const double db = p.B.determinant();
  if (da * da + db * db > 1.0) return false;
  const Eigen::Index d = p.A.rows();
  Matrix kron(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      kron.block(i * d, j * d, d, d) = p.A(i, j) * p.A + p.B(i, j) * p.B;
  const Eigen::EigenSolver<Matrix> es(kron, false);
  return es.eigenvalues().cwiseAbs().maxCoeff() <= 1.0;
}

bool stationarity_check(const ParamState& theta) {
  return diagonal_stationary(theta.a, theta.b);
}

ParamState sample_initial_params(Eigen::Index d, Rng& rng) {
  if (d < 1) fail(ErrorKind::InvalidArgument, "dimension must be >= 1");
  ParamState theta;
  theta.a.resize(d);
  theta.b.resize(d);
  for (int attempt = 0; attempt < kInitialRejectionBudget; ++attempt) {
    for (Eigen::Index i = 0; i < d; ++i) {
      theta.a[i] = rng.uniform();
      theta.b[i] = rng.uniform();
    }
    if (!diagonal_stationary(theta.a, theta.b)) continue;
    theta.c.resize(static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d))));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = i; j < d; ++j) {
        theta.c[k++] = (i == j) ? 0.05 + 0.45 * rng.uniform() : 0.05 * rng.normal();
      }
    }
    return theta;
  }
  fail(ErrorKind::RejectionBudgetExceeded,
       "no stationary initial state after " + std::to_string(kInitialRejectionBudget) +
           " draws");
}

Simulation simulate(const BekkParams& p, std::size_t steps,
                    const CovMatrix& sigma0, Rng& rng) {
  p.validate();
  if (steps < 1) fail(ErrorKind::InvalidArgument, "need at least one step");
  const Eigen::Index d = p.dim();
  Simulation sim;
  sim.x.resize(static_cast<Eigen::Index>(steps), d);
  sim.sigmas.reserve(steps);
  CovRecursionState state{sigma0, Vector::Zero(d)};
  const Innovation law = p.innovation();
  const double nu = p.nu.value_or(0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    state.sigma = bekk_step(state, p);
    state.last_x = sample_innovation(state.sigma, law, nu, rng);
    sim.x.row(static_cast<Eigen::Index>(t)) = state.last_x.transpose();
    sim.sigmas.push_back(state.sigma);
  }
  return sim;
}

Simulation simulate(const ParamState& theta0, const DriftHypers& h,
                    std::size_t steps, const CovMatrix& sigma0, Rng& rng,
                    Innovation law, double nu) {
  if (steps < 1) fail(ErrorKind::InvalidArgument, "need at least one step");
  const Eigen::Index d = theta0.dim();
  Simulation sim;
  sim.x.resize(static_cast<Eigen::Index>(steps), d);
  sim.sigmas.reserve(steps);
  sim.thetas.reserve(steps);
  CovRecursionState state{sigma0, Vector::Zero(d)};
  ParamState theta = theta0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) theta = diffuse_params(theta, h, rng);
    state.sigma = bmdc_step(state, theta);
    state.last_x = sample_innovation(state.sigma, law, nu, rng);
    sim.x.row(static_cast<Eigen::Index>(t)) = state.last_x.transpose();
    sim.sigmas.push_back(state.sigma);
    sim.thetas.push_back(theta);
  }
  return sim;
}

CovMatrix initial_sigma(const ReturnSeries& prefix) {
  const Eigen::Index n = prefix.rows();
  const Eigen::Index d = prefix.cols();
  if (d < 1 || n < d + 1) {
    fail(ErrorKind::TooFewObservations,
         "initial covariance needs at least d + 1 = " + std::to_string(d + 1) +
             " observations, got " + std::to_string(n));
  }
  const Eigen::RowVectorXd mean = prefix.colwise().mean();
  const Matrix centered = prefix.rowwise() - mean;
  Matrix s = (centered.transpose() * centered) / static_cast<double>(n);
  s = 0.5 * (s + s.transpose()).eval();
  const double trace = s.trace();
  if (!(trace > 0.0) || !s.allFinite()) {
    fail(ErrorKind::TooFewObservations, "warmup prefix has no variation");
  }
  Eigen::LLT<Matrix> llt(s);
  double jitter = kJitterScale * trace / static_cast<double>(d);
  for (int attempt = 0; llt.info() != Eigen::Success && attempt < 8; ++attempt) {
    Matrix repaired = s;
    repaired.diagonal().array() += jitter;
    llt.compute(repaired);
    if (llt.info() == Eigen::Success) return repaired;
    jitter *= 10.0;
  }
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::NotPositiveDefinite, "could not repair warmup covariance");
  }
  return s;
}

ParamState to_param_state(const BekkParams& p) {
  if (p.variant != BekkVariant::diagonal) {
    fail(ErrorKind::InvalidParams, "only diagonal BEKK maps onto a BMDC state");
  }
  return ParamState{p.a, p.b, p.c};
}

}  // namespace dyncov
