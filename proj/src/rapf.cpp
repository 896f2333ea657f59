#include "dyncov/rapf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>

#include "dyncov/error.hpp"

namespace dyncov {

namespace {

constexpr int kFeasibleRedraws = 100;
constexpr double kBoundaryGap = 1e-6;
constexpr double kSingularJitter = 1e-12;

// Substream purposes.
constexpr std::uint64_t kPredict = 1;
constexpr std::uint64_t kResample = 2;
constexpr std::uint64_t kMove = 3;

Eigen::Index packed(Eigen::Index d) {
  return static_cast<Eigen::Index>(packed_size(static_cast<std::size_t>(d)));
}

// Splits [0, n) into contiguous chunks, one thread each. The first exception
// thrown by a worker is rethrown on the caller.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex mutex;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Eigen::Index static_size(const RapfConfig& cfg) {
  return cfg.innovation == Innovation::student_t ? 4 : 3;
}

Eigen::Index block_size(const RapfConfig& cfg, Eigen::Index d) {
  return static_size(cfg) + (cfg.shrink_dynamic ? 2 * d + packed(d) : 0);
}

void write_block(const Particle& p, const RapfConfig& cfg, Eigen::Ref<Vector> out) {
  out[0] = p.hypers.alpha;
  out[1] = p.hypers.beta;
  out[2] = p.hypers.gamma;
  Eigen::Index k = 3;
  if (cfg.innovation == Innovation::student_t) out[k++] = p.log_nu_minus_2;
  if (cfg.shrink_dynamic) {
    const Eigen::Index d = p.theta.dim();
    out.segment(k, d) = p.theta.a;
    out.segment(k + d, d) = p.theta.b;
    out.segment(k + 2 * d, packed(d)) = p.theta.c;
  }
}

void read_block(const Eigen::Ref<const Vector>& phi, const RapfConfig& cfg, Particle& p) {
  p.hypers.alpha = phi[0];
  p.hypers.beta = phi[1];
  p.hypers.gamma = phi[2];
  Eigen::Index k = 3;
  if (cfg.innovation == Innovation::student_t) p.log_nu_minus_2 = phi[k++];
  if (cfg.shrink_dynamic) {
    const Eigen::Index d = p.theta.dim();
    p.theta.a = phi.segment(k, d);
    p.theta.b = phi.segment(k + d, d);
    p.theta.c = phi.segment(k + 2 * d, packed(d));
  }
}

// Scales each (a_i, b_i) pair back inside the unit disc. The elementwise
// condition implies the determinant one, so this restores stationarity.
void clamp_stationary(ParamState& theta) {
  for (Eigen::Index i = 0; i < theta.a.size(); ++i) {
    const double r2 = theta.a[i] * theta.a[i] + theta.b[i] * theta.b[i];
    if (r2 > 1.0 - kBoundaryGap) {
      const double s = std::sqrt((1.0 - kBoundaryGap) / r2);
      theta.a[i] *= s;
      theta.b[i] *= s;
    }
  }
}

ParamState diffuse_feasible(const ParamState& theta, const DriftHypers& h, Rng& rng) {
  ParamState next = diffuse_params(theta, h, rng);
  for (int k = 0; k < kFeasibleRedraws && !stationarity_check(next); ++k) {
    next = diffuse_params(theta, h, rng);
  }
  if (!stationarity_check(next)) clamp_stationary(next);
  return next;
}

double nu_from(double log_nu_minus_2) { return 2.0 + std::exp(log_nu_minus_2); }

// Every particle propagated one step with fresh diffusion noise.
struct Propagated {
  std::vector<CovMatrix> sigma;
  std::vector<double> nu;
};

Propagated propagate(const ParticleCloud& cloud, std::uint64_t key, int jobs) {
  const std::size_t n = cloud.size();
  Propagated out{std::vector<CovMatrix>(n), std::vector<double>(n)};
  parallel_for(n, jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Particle& p = cloud.particles[i];
      Rng rng = Rng::substream(key, i, kPredict);
      const ParamState theta = diffuse_feasible(p.theta, p.hypers, rng);
      out.sigma[i] = bmdc_step({p.sigma, cloud.last_x}, theta);
      out.nu[i] = p.nu();
    }
  });
  return out;
}

double mixture_logpdf(const Propagated& prop, const std::vector<double>& log_w,
                      const Eigen::Ref<const Vector>& x, Innovation law,
                      DensityKernel& kernel) {
  std::vector<double> terms(prop.sigma.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    terms[i] = log_w[i] + kernel.logpdf(x, prop.sigma[i], law, prop.nu[i]);
  }
  return log_sum_exp(terms);
}

Innovation law_of(const RapfConfig& cfg) { return cfg.innovation; }

std::vector<double> log_weights(const ParticleCloud& cloud) {
  std::vector<double> lw(cloud.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = cloud.particles[i].log_weight;
  return lw;
}

CovMatrix plugin_sigma(const ParticleCloud& cloud, const PosteriorMean& pm) {
  return bmdc_step({pm.sigma, cloud.last_x}, pm.theta);
}

void require_normalized(const ParticleCloud& cloud) {
  cloud.validate();
  if (!cloud.normalized) fail(ErrorKind::InvalidArgument, "particle cloud is not normalized");
}

}  // namespace

double Particle::nu() const { return nu_from(log_nu_minus_2); }

std::vector<double> ParticleCloud::weights() const {
  std::vector<double> w(size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(particles[i].log_weight);
  return w;
}

void ParticleCloud::validate() const {
  if (particles.empty()) fail(ErrorKind::EmptyCloud, "particle cloud is empty");
  const Eigen::Index d = dim();
  for (const Particle& p : particles) {
    if (p.theta.a.size() != d || p.theta.b.size() != d || p.theta.c.size() != packed(d) ||
        p.sigma.rows() != d || p.sigma.cols() != d) {
      fail(ErrorKind::DimensionMismatch, "particle dimensions disagree with the cloud");
    }
  }
}

void RapfConfig::validate() const {
  if (n_particles < 2) fail(ErrorKind::InvalidArgument, "n_particles must be >= 2");
  if (!(shrinkage_a > 0.0 && shrinkage_a <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "shrinkage_a must lie in (0, 1]");
  }
  if (!(tau > 0.0)) fail(ErrorKind::InvalidArgument, "tau must be positive");
  if (!(sigma_nu > 0.0)) fail(ErrorKind::InvalidArgument, "sigma_nu must be positive");
  if (!std::isfinite(kappa)) fail(ErrorKind::InvalidArgument, "kappa must be finite");
  if (jobs < 1) fail(ErrorKind::InvalidArgument, "jobs must be >= 1");
}

ParticleCloud init_cloud(const RapfConfig& cfg, Eigen::Index d, const CovMatrix& sigma0,
                         Rng& rng) {
  cfg.validate();
  if (sigma0.rows() != d || sigma0.cols() != d) {
    fail(ErrorKind::DimensionMismatch, "sigma0 does not match the dimension");
  }
  cholesky(sigma0);  // throws NotPositiveDefinite

  const auto n = static_cast<std::size_t>(cfg.n_particles);
  const double sd = std::sqrt(cfg.tau);
  ParticleCloud cloud;
  cloud.last_x = Vector::Zero(d);
  cloud.particles.resize(n);
  for (Particle& p : cloud.particles) {
    p.theta = sample_initial_params(d, rng);
    p.hypers.alpha = cfg.kappa + sd * rng.normal();
    p.hypers.beta = cfg.kappa + sd * rng.normal();
    p.hypers.gamma = cfg.kappa + sd * rng.normal();
    p.hypers.kappa = cfg.kappa;
    p.hypers.tau = cfg.tau;
    if (cfg.innovation == Innovation::student_t) p.log_nu_minus_2 = cfg.sigma_nu * rng.normal();
    p.sigma = sigma0;
    p.log_weight = -std::log(static_cast<double>(n));
  }
  return cloud;
}

ShrinkageKernel::ShrinkageKernel(const Matrix& blocks, std::span<const double> weights,
                                 double a)
    : a_(a) {
  if (blocks.cols() != static_cast<Eigen::Index>(weights.size()) || blocks.cols() == 0) {
    fail(ErrorKind::DimensionMismatch, "one weight per block column is required");
  }
  if (!(a > 0.0 && a <= 1.0)) fail(ErrorKind::InvalidArgument, "shrinkage must lie in (0, 1]");
  Vector w = Eigen::Map<const Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    fail(ErrorKind::DegenerateWeights, "shrinkage weights sum to zero");
  }
  w /= total;
  MeanCov mc = weighted_mean_and_cov({blocks, w});
  mean_ = std::move(mc.mean);
  cov_ = std::move(mc.cov);
  shrunk_ = (a * blocks).colwise() + (1.0 - a) * mean_;

  const Eigen::Index k = blocks.rows();
  noise_factor_ = Matrix::Zero(k, k);
  if (a < 1.0) {
    Eigen::LLT<Matrix> llt(cov_);
    if (llt.info() != Eigen::Success || (llt.matrixLLT().diagonal().array() <= 0.0).any()) {
      llt.compute(cov_ + kSingularJitter * Matrix::Identity(k, k));
    }
    if (llt.info() == Eigen::Success) {
      noise_factor_ = llt.matrixL();
    } else {
      // Indefinite from rounding: fall back to independent coordinates.
      noise_factor_.diagonal() = cov_.diagonal().cwiseMax(kSingularJitter).cwiseSqrt();
    }
    noise_factor_ *= std::sqrt(1.0 - a * a);
  }
}

void ShrinkageKernel::propose(Eigen::Index ancestor, Rng& rng, Eigen::Ref<Vector> out) const {
  out = shrunk_.col(ancestor);
  if (a_ == 1.0) return;
  const Eigen::Index k = out.size();
  for (Eigen::Index r = 0; r < k; ++r) {
    // Lower-triangular product accumulated on the fly.
    const double z = rng.normal();
    for (Eigen::Index i = r; i < k; ++i) out[i] += noise_factor_(i, r) * z;
  }
}

std::pair<ParticleCloud, PredictionRecord> rapf_update(const ParticleCloud& cloud,
                                                       const Vector& x_t,
                                                       const RapfConfig& cfg, Rng& rng) {
  const auto started = std::chrono::steady_clock::now();
  require_normalized(cloud);
  const Eigen::Index d = cloud.dim();
  if (x_t.size() != d) fail(ErrorKind::DimensionMismatch, "observation dimension mismatch");
  const std::size_t n = cloud.size();
  const Innovation law = law_of(cfg);
  const std::uint64_t key = rng();
  const std::vector<double> log_w = log_weights(cloud);
  const std::vector<double> w = cloud.weights();

  // Prediction from the time t-1 cloud, before x_t is seen.
  PredictionRecord record;
  record.step = cloud.step;
  {
    const Propagated prop = propagate(cloud, key, cfg.jobs);
    DensityKernel kernel(d);
    record.pred_logdensity_mixture = mixture_logpdf(prop, log_w, x_t, law, kernel);
    record.predicted_cov_mean = CovMatrix::Zero(d, d);
    for (std::size_t i = 0; i < n; ++i) record.predicted_cov_mean += w[i] * prop.sigma[i];
    const PosteriorMean pm = posterior_mean(cloud);
    record.pred_logdensity_plugin = kernel.logpdf(x_t, plugin_sigma(cloud, pm), law, pm.nu);
  }

  // Shrinkage of the static block.
  const Eigen::Index k = block_size(cfg, d);
  Matrix blocks(k, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    write_block(cloud.particles[i], cfg, blocks.col(static_cast<Eigen::Index>(i)));
  }
  const ShrinkageKernel shrink(blocks, w, cfg.shrinkage_a);

  // Look-ahead on the zero-noise propagation.
  std::vector<double> aux(n);
  std::vector<double> look_lp(n);
  parallel_for(n, cfg.jobs, [&](std::size_t begin, std::size_t end) {
    DensityKernel kernel(d);
    Particle m;
    for (std::size_t i = begin; i < end; ++i) {
      const Particle& p = cloud.particles[i];
      m.theta = p.theta;
      read_block(shrink.shrunk().col(static_cast<Eigen::Index>(i)), cfg, m);
      const CovMatrix mu = bmdc_step({p.sigma, cloud.last_x}, m.theta);
      look_lp[i] = kernel.logpdf(x_t, mu, law, m.nu());
      aux[i] = log_w[i] + look_lp[i];
    }
  });
  const double aux_max = *std::max_element(aux.begin(), aux.end());
  if (!std::isfinite(aux_max)) {
    fail(ErrorKind::DegenerateWeights, "all auxiliary weights underflow at step " +
                                           std::to_string(cloud.step));
  }
  std::vector<double> aux_w(n);
  for (std::size_t i = 0; i < n; ++i) aux_w[i] = std::exp(aux[i] - aux_max);
  Rng resample_rng = Rng::substream(key, 0, kResample);
  const std::vector<std::size_t> ancestors = systematic_resample(aux_w, n, resample_rng);

  // Regularize, diffuse and reweight.
  ParticleCloud next;
  next.particles.resize(n);
  next.last_x = x_t;
  next.step = cloud.step + 1;
  std::vector<double> new_lw(n);
  parallel_for(n, cfg.jobs, [&](std::size_t begin, std::size_t end) {
    DensityKernel kernel(d);
    Vector phi(k);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t j = ancestors[i];
      const Particle& parent = cloud.particles[j];
      Rng move = Rng::substream(key, i, kMove);
      shrink.propose(static_cast<Eigen::Index>(j), move, phi);
      Particle& q = next.particles[i];
      q.theta = parent.theta;
      read_block(phi, cfg, q);
      q.theta = diffuse_feasible(q.theta, q.hypers, move);
      q.hypers.kappa = parent.hypers.kappa;
      q.hypers.tau = parent.hypers.tau;
      q.sigma = bmdc_step({parent.sigma, cloud.last_x}, q.theta);
      new_lw[i] = kernel.logpdf(x_t, q.sigma, law, q.nu()) - look_lp[j];
    }
  });
  const double total = log_sum_exp(new_lw);
  if (!std::isfinite(total)) {
    fail(ErrorKind::DegenerateWeights, "all particle weights underflow at step " +
                                           std::to_string(cloud.step));
  }
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    next.particles[i].log_weight = new_lw[i] - total;
    const double wi = std::exp(next.particles[i].log_weight);
    sum_sq += wi * wi;
  }
  next.normalized = true;
  record.ess = std::clamp(1.0 / sum_sq, 1.0, static_cast<double>(n));
  record.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(next), std::move(record)};
}

PosteriorMean posterior_mean(const ParticleCloud& cloud) {
  cloud.validate();
  const Eigen::Index d = cloud.dim();
  const std::vector<double> w = cloud.weights();
  PosteriorMean pm;
  pm.theta.a = Vector::Zero(d);
  pm.theta.b = Vector::Zero(d);
  pm.theta.c = Vector::Zero(packed(d));
  pm.sigma = CovMatrix::Zero(d, d);
  pm.hypers.kappa = cloud.particles.front().hypers.kappa;
  pm.hypers.tau = cloud.particles.front().hypers.tau;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Particle& p = cloud.particles[i];
    pm.theta.a += w[i] * p.theta.a;
    pm.theta.b += w[i] * p.theta.b;
    pm.theta.c += w[i] * p.theta.c;
    pm.sigma += w[i] * p.sigma;
    // The hypers act through their magnitude.
    pm.hypers.alpha += w[i] * std::abs(p.hypers.alpha);
    pm.hypers.beta += w[i] * std::abs(p.hypers.beta);
    pm.hypers.gamma += w[i] * std::abs(p.hypers.gamma);
    pm.nu += w[i] * p.nu();
  }
  return pm;
}

double predictive_logpdf_mixture(const ParticleCloud& cloud, const Vector& x,
                                 const RapfConfig& cfg, Rng& rng) {
  require_normalized(cloud);
  if (x.size() != cloud.dim()) fail(ErrorKind::DimensionMismatch, "point dimension mismatch");
  const Propagated prop = propagate(cloud, rng(), cfg.jobs);
  DensityKernel kernel(cloud.dim());
  return mixture_logpdf(prop, log_weights(cloud), x, law_of(cfg), kernel);
}

double predictive_logpdf_plugin(const ParticleCloud& cloud, const Vector& x,
                                const RapfConfig& cfg) {
  require_normalized(cloud);
  if (x.size() != cloud.dim()) fail(ErrorKind::DimensionMismatch, "point dimension mismatch");
  const PosteriorMean pm = posterior_mean(cloud);
  DensityKernel kernel(cloud.dim());
  return kernel.logpdf(x, plugin_sigma(cloud, pm), law_of(cfg), pm.nu);
}

std::vector<CurvePoint> predictive_density_curve(const ParticleCloud& cloud,
                                                 Eigen::Index dim_index,
                                                 const std::vector<double>& grid,
                                                 const RapfConfig& cfg, Rng& rng) {
  require_normalized(cloud);
  if (grid.empty()) fail(ErrorKind::InvalidArgument, "grid is empty");
  if (dim_index < 0 || dim_index >= cloud.dim()) {
    fail(ErrorKind::InvalidArgument, "dim_index out of range");
  }
  const Eigen::Index d = cloud.dim();
  const Propagated prop = propagate(cloud, rng(), cfg.jobs);
  const std::vector<double> log_w = log_weights(cloud);
  const PosteriorMean pm = posterior_mean(cloud);
  const CovMatrix plug = plugin_sigma(cloud, pm);
  DensityKernel kernel(d);
  std::vector<CurvePoint> out;
  out.reserve(grid.size());
  Vector x = Vector::Zero(d);
  for (double g : grid) {
    x[dim_index] = g;
    out.push_back({g, mixture_logpdf(prop, log_w, x, law_of(cfg), kernel),
                   kernel.logpdf(x, plug, law_of(cfg), pm.nu)});
  }
  return out;
}

double effective_sample_size(const ParticleCloud& cloud) {
  const std::vector<double> w = cloud.weights();
  return effective_sample_size(std::span<const double>(w));
}

Rng filter_step_stream(std::uint64_t seed, long step) {
  return Rng::substream(seed, 0xF17E5, static_cast<std::uint64_t>(step));
}

FilterRun run_filter(const ReturnSeries& series, const CovMatrix& sigma0, const RapfConfig& cfg,
                     const FilterObserver& observer) {
  Rng rng = Rng::substream(cfg.seed, 0x1417);
  return continue_filter(init_cloud(cfg, series.cols(), sigma0, rng), series, cfg, observer);
}

FilterRun continue_filter(ParticleCloud cloud, const ReturnSeries& series, const RapfConfig& cfg,
                          const FilterObserver& observer) {
  if (cloud.dim() != series.cols()) {
    fail(ErrorKind::DimensionMismatch, "series dimension does not match the cloud");
  }
  if (cloud.step < 0 || cloud.step > series.rows()) {
    fail(ErrorKind::InvalidArgument, "cloud step lies outside the series");
  }
  FilterRun run;
  run.cloud = std::move(cloud);
  run.records.reserve(static_cast<std::size_t>(series.rows() - run.cloud.step));
  for (Eigen::Index t = run.cloud.step; t < series.rows(); ++t) {
    Rng rng = filter_step_stream(cfg.seed, run.cloud.step);
    auto [next, record] = rapf_update(run.cloud, series.row(t).transpose(), cfg, rng);
    run.cloud = std::move(next);
    if (observer) observer(run.cloud, record);
    run.records.push_back(std::move(record));
  }
  return run;
}

namespace {

constexpr const char* kSnapshotMagic = "dyncov-cloud";
constexpr int kSnapshotVersion = 1;

void put(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << ' ' << buf;
}

void put_all(std::ostream& out, const Eigen::Ref<const Vector>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put(out, v[i]);
}

double take(std::istream& in) {
  std::string token;
  if (!(in >> token)) fail(ErrorKind::ParseError, "snapshot ended early");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size()) fail(ErrorKind::ParseError, "bad number in snapshot: " + token);
  return v;
}

void take_all(std::istream& in, Eigen::Ref<Vector> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = take(in);
}

}  // namespace

void save_cloud(std::ostream& out, const ParticleCloud& cloud) {
  cloud.validate();
  const Eigen::Index d = cloud.dim();
  out << kSnapshotMagic << ' ' << kSnapshotVersion << " dim " << d << " particles "
      << cloud.size() << " step " << cloud.step << " normalized " << (cloud.normalized ? 1 : 0)
      << '\n';
  out << "last_x";
  put_all(out, cloud.last_x);
  out << '\n';
  // log_weight alpha beta gamma log_nu_minus_2 kappa tau a b c sigma(upper)
  for (const Particle& p : cloud.particles) {
    out << "p";
    put(out, p.log_weight);
    put(out, p.hypers.alpha);
    put(out, p.hypers.beta);
    put(out, p.hypers.gamma);
    put(out, p.log_nu_minus_2);
    put(out, p.hypers.kappa);
    put(out, p.hypers.tau);
    put_all(out, p.theta.a);
    put_all(out, p.theta.b);
    put_all(out, p.theta.c);
    put_all(out, pack_upper(p.sigma));
    out << '\n';
  }
  if (!out) fail(ErrorKind::InvalidArgument, "failed to write snapshot");
}

ParticleCloud load_cloud(std::istream& in) {
  std::string magic, dim_kw, particles_kw, step_kw, norm_kw;
  int version = 0;
  long d = 0, step = 0;
  std::size_t n = 0;
  int normalized = 0;
  if (!(in >> magic >> version >> dim_kw >> d >> particles_kw >> n >> step_kw >> step >> norm_kw >>
        normalized) ||
      magic != kSnapshotMagic || dim_kw != "dim" || particles_kw != "particles" ||
      step_kw != "step" || norm_kw != "normalized") {
    fail(ErrorKind::ParseError, "not a particle cloud snapshot");
  }
  if (version != kSnapshotVersion) {
    fail(ErrorKind::ParseError, "unsupported snapshot version " + std::to_string(version));
  }
  if (d < 1 || n < 1) fail(ErrorKind::ParseError, "snapshot has no particles");
  std::string tag;
  ParticleCloud cloud;
  cloud.step = step;
  cloud.normalized = normalized != 0;
  cloud.last_x.resize(d);
  if (!(in >> tag) || tag != "last_x") fail(ErrorKind::ParseError, "missing last_x line");
  take_all(in, cloud.last_x);
  cloud.particles.resize(n);
  Vector upper(packed(d));
  for (Particle& p : cloud.particles) {
    if (!(in >> tag) || tag != "p") fail(ErrorKind::ParseError, "missing particle line");
    p.log_weight = take(in);
    p.hypers.alpha = take(in);
    p.hypers.beta = take(in);
    p.hypers.gamma = take(in);
    p.log_nu_minus_2 = take(in);
    p.hypers.kappa = take(in);
    p.hypers.tau = take(in);
    p.theta.a.resize(d);
    p.theta.b.resize(d);
    p.theta.c.resize(packed(d));
    take_all(in, p.theta.a);
    take_all(in, p.theta.b);
    take_all(in, p.theta.c);
    take_all(in, upper);
    const Matrix u = unpack_upper(upper);
    p.sigma = u;
    p.sigma.triangularView<Eigen::StrictlyLower>() = u.transpose();
  }
  return cloud;
}

}  // namespace dyncov
