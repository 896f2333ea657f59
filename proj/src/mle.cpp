#include "dyncov/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dyncov/error.hpp"
#include "dyncov/optimize.hpp"

namespace dyncov {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kEdge = 1e-8;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) { return std::log(p / (1.0 - p)); }
double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

Eigen::Index packed(Eigen::Index d) {
  return static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d)));
}

}  // namespace

BekkTransform::BekkTransform(BekkVariant variant, Eigen::Index dim, Innovation law)
    : variant_(variant), dim_(dim), law_(law) {
  if (dim < 1) fail(ErrorKind::InvalidArgument, "dimension must be >= 1");
  const Eigen::Index ab = variant == BekkVariant::diagonal ? 2 * dim : 2 * dim * dim;
  size_ = ab + packed(dim) + (law == Innovation::student_t ? 1 : 0);
}

BekkParams BekkTransform::to_params(const Vector& z) const {
  if (z.size() != size_) fail(ErrorKind::DimensionMismatch, "wrong parameter vector size");
  const Eigen::Index d = dim_;
  BekkParams p;
  p.variant = variant_;
  Eigen::Index k = 0;
  if (variant_ == BekkVariant::diagonal) {
    p.a.resize(d);
    p.b.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) p.a[i] = logistic(z[k++]);
    for (Eigen::Index i = 0; i < d; ++i) {
      p.b[i] = std::sqrt(1.0 - p.a[i] * p.a[i]) * logistic(z[k++]);
    }
  } else {
    p.A = Eigen::Map<const Matrix>(z.data(), d, d);
    p.B = Eigen::Map<const Matrix>(z.data() + d * d, d, d);
    k = 2 * d * d;
  }
  p.c.resize(packed(d));
  Eigen::Index m = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j, ++m, ++k) {
      p.c[m] = (i == j) ? softplus(z[k]) : z[k];
    }
  }
  if (law_ == Innovation::student_t) p.nu = 2.0 + std::exp(z[k]);
  return p;
}

Vector BekkTransform::to_unconstrained(const BekkParams& p) const {
  if (p.dim() != dim_ || p.variant != variant_) {
    fail(ErrorKind::DimensionMismatch, "parameters do not match the transform");
  }
  const Eigen::Index d = dim_;
  Vector z(size_);
  Eigen::Index k = 0;
  if (variant_ == BekkVariant::diagonal) {
    Vector a = p.a.cwiseAbs().cwiseMax(kEdge).cwiseMin(1.0 - kEdge);
    for (Eigen::Index i = 0; i < d; ++i) z[k++] = logit(a[i]);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double room = std::sqrt(1.0 - a[i] * a[i]);
      const double ratio = std::clamp(std::abs(p.b[i]) / room, kEdge, 1.0 - kEdge);
      z[k++] = logit(ratio);
    }
  } else {
    Eigen::Map<Matrix>(z.data(), d, d) = p.A;
    Eigen::Map<Matrix>(z.data() + d * d, d, d) = p.B;
    k = 2 * d * d;
  }
  // Flip rows of C with a negative diagonal; C^T C is unchanged.
  Matrix upper = unpack_upper(p.c);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (upper(i, i) < 0.0) upper.row(i) *= -1.0;
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j, ++k) {
      z[k] = (i == j) ? softplus_inv(std::max(upper(i, i), kEdge)) : upper(i, j);
    }
  }
  if (law_ == Innovation::student_t) {
    const double nu = p.nu.value_or(8.0);
    z[k] = std::log(std::max(nu - 2.0, kEdge));
  }
  return z;
}

BekkLikelihood::BekkLikelihood(const ReturnSeries& series, CovMatrix sigma0)
    : obs_(series.transpose()), sigma0_(std::move(sigma0)), kernel_(series.cols()) {
  if (sigma0_.rows() != series.cols() || sigma0_.cols() != series.cols()) {
    fail(ErrorKind::DimensionMismatch, "sigma0 does not match the series dimension");
  }
  bx_ = Vector::Zero(series.cols());
}

double BekkLikelihood::operator()(const BekkParams& p, Eigen::Index length) {
  const Eigen::Index d = obs_.rows();
  if (p.dim() != d) fail(ErrorKind::DimensionMismatch, "parameters do not match series");
  const Eigen::Index n = length > 0 ? std::min(length, obs_.cols()) : obs_.cols();
  const Innovation law = p.innovation();
  const double nu = p.nu.value_or(0.0);
  ctc_ = gram_from_packed(p.c);
  prev_ = sigma0_;
  const Vector zero = Vector::Zero(d);
  double total = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (p.variant == BekkVariant::diagonal) {
      if (t == 0) {
        diagonal_recursion(prev_, zero, p.a, p.b, ctc_, next_);
      } else {
        diagonal_recursion(prev_, obs_.col(t - 1), p.a, p.b, ctc_, next_);
      }
    } else {
      if (t == 0) {
        bx_.setZero();
      } else {
        bx_.noalias() = p.B.transpose() * obs_.col(t - 1);
      }
      next_.noalias() = p.A.transpose() * prev_ * p.A;
      next_ = 0.5 * (next_ + next_.transpose()).eval();
      next_ += ctc_;
      next_.noalias() += bx_ * bx_.transpose();
    }
    const double lp = kernel_.logpdf(obs_.col(t), next_, law, nu);
    if (!std::isfinite(lp)) return kNegInf;
    total += lp;
    std::swap(prev_, next_);
  }
  return total;
}

CovRecursionState BekkLikelihood::final_state(const BekkParams& p,
                                              Eigen::Index length) const {
  const Eigen::Index d = obs_.rows();
  const Eigen::Index n = length > 0 ? std::min(length, obs_.cols()) : obs_.cols();
  CovRecursionState state{sigma0_, Vector::Zero(d)};
  for (Eigen::Index t = 0; t < n; ++t) {
    state.sigma = bekk_step(state, p);
    state.last_x = obs_.col(t);
  }
  return state;
}

double bekk_loglik(const BekkParams& params, const ReturnSeries& series,
                   const CovMatrix& sigma0) {
  params.validate();
  if (series.rows() < 2) {
    fail(ErrorKind::TooFewObservations, "log-likelihood needs at least two rows");
  }
  BekkLikelihood lik(series, sigma0);
  return lik(params);
}

void FitConfig::validate() const {
  if (max_iters < 1) fail(ErrorKind::InvalidArgument, "max_iters must be >= 1");
  if (n_restarts < 1) fail(ErrorKind::InvalidArgument, "n_restarts must be >= 1");
  if (!(tol > 0.0)) fail(ErrorKind::InvalidArgument, "tol must be positive");
  if (!(initial_step > 0.0)) fail(ErrorKind::InvalidArgument, "initial_step must be positive");
}

namespace {

// Stationary start with C chosen so the implied unconditional covariance
// roughly matches sigma0.
BekkParams start_from(const Vector& a, const Vector& b, const CovMatrix& sigma0,
                      const FitConfig& cfg, double nu) {
  const double room = (1.0 - a.array().square() - b.array().square()).minCoeff();
  const Matrix lower = cholesky(std::max(room, 1e-4) * sigma0);
  const Vector c = pack_upper(lower.transpose());
  std::optional<double> dof;
  if (cfg.innovation == Innovation::student_t) dof = nu;
  if (cfg.variant == BekkVariant::diagonal) return BekkParams::diagonal(a, b, c, dof);
  return BekkParams::full(Matrix(a.asDiagonal()), Matrix(b.asDiagonal()), c, dof);
}

}  // namespace

FitResult fit_bekk(BekkLikelihood& likelihood, Eigen::Index length,
                   const FitConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = likelihood.sigma0().rows();
  const Eigen::Index n = length > 0 ? std::min(length, likelihood.rows()) : likelihood.rows();
  const BekkTransform transform(cfg.variant, d, cfg.innovation);
  if (10 * transform.size() > n * d) {
    fail(ErrorKind::TooFewObservations,
         "BEKK fit with " + std::to_string(transform.size()) + " parameters needs at least " +
             std::to_string((10 * transform.size() + d - 1) / d) + " observations, got " +
             std::to_string(n));
  }

  const Objective objective = [&](const Vector& z) {
    const BekkParams p = transform.to_params(z);
    if (p.variant == BekkVariant::full && !stationarity_check(p)) return kNegInf;
    return likelihood(p, n);
  };

  const CovMatrix& sigma0 = likelihood.sigma0();
  std::optional<SearchResult> best;
  bool any_start = false;
  for (int r = 0; r < cfg.n_restarts; ++r) {
    Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(r), 0x5EED);
    Vector z0;
    double f0 = kNegInf;
    if (r == 0) {
      const BekkParams start =
          cfg.initial ? *cfg.initial
                      : start_from(Vector::Constant(d, 0.9), Vector::Constant(d, 0.3),
                                   sigma0, cfg, 8.0);
      z0 = transform.to_unconstrained(start);
      f0 = objective(z0);
    }
    for (int attempt = 0; !std::isfinite(f0) && attempt < 50; ++attempt) {
      Vector a(d), b(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        a[i] = 0.5 + 0.48 * rng.uniform();
        b[i] = (0.05 + 0.9 * rng.uniform()) * std::sqrt(1.0 - a[i] * a[i]);
      }
      z0 = transform.to_unconstrained(start_from(a, b, sigma0, cfg, 4.0 + 16.0 * rng.uniform()));
      f0 = objective(z0);
    }
    if (!std::isfinite(f0)) continue;
    any_start = true;

    const SearchResult simplex =
        nelder_mead_maximize(objective, z0, {cfg.max_iters, cfg.tol, cfg.initial_step});
    SearchResult polished =
        gradient_polish(objective, simplex.x, simplex.value, cfg.polish_iters, cfg.tol);
    polished.iterations += simplex.iterations;
    polished.converged = simplex.converged || polished.converged;
    if (!best || polished.value > best->value) best = polished;
  }
  if (!any_start) fail(ErrorKind::NoFeasibleStart, "no initialization with finite likelihood");
  if (!std::isfinite(best->value)) fail(ErrorKind::NonFinite, "objective is not finite at optimum");

  FitResult out;
  out.params = transform.to_params(best->x);
  out.loglik = best->value;
  out.iterations = best->iterations;
  out.converged = best->converged;
  return out;
}

FitResult fit_bekk(const ReturnSeries& series, const FitConfig& cfg) {
  if (series.rows() < 2) fail(ErrorKind::TooFewObservations, "series too short");
  CovMatrix sigma0 = cfg.sigma0 ? *cfg.sigma0 : initial_sigma(series);
  BekkLikelihood likelihood(series, std::move(sigma0));
  return fit_bekk(likelihood, 0, cfg);
}

std::pair<CovMatrix, double> predict_one_step(const BekkParams& params,
                                              const CovRecursionState& state,
                                              const Vector& x_next) {
  CovMatrix sigma = bekk_step(state, params);
  const double lp =
      innovation_logpdf(x_next, sigma, params.innovation(), params.nu.value_or(0.0));
  return {std::move(sigma), lp};
}

}  // namespace dyncov
