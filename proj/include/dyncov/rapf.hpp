#pragma once

// Regularized auxiliary particle filter for the BMDC model: joint online
// inference of the diffusing BEKK parameters theta_t, the drift hypers and
// (Student-t variant) the degrees of freedom.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "dyncov/models.hpp"
#include "dyncov/mvstat.hpp"
#include "dyncov/random.hpp"

namespace dyncov {

struct Particle {
  ParamState theta;
  DriftHypers hypers;         // alpha, beta, gamma; used through |.|
  double log_nu_minus_2 = 0;  // Student-t only
  CovMatrix sigma;            // this particle's Sigma_{t-1}
  double log_weight = 0;

  double nu() const;
};

struct ParticleCloud {
  std::vector<Particle> particles;
  Vector last_x;
  long step = 0;
  bool normalized = true;

  std::size_t size() const { return particles.size(); }
  Eigen::Index dim() const { return last_x.size(); }
  std::vector<double> weights() const;
  // Throws EmptyCloud / DimensionMismatch / InvalidArgument on broken
  // invariants.
  void validate() const;
};

struct RapfConfig {
  int n_particles = 4000;
  double shrinkage_a = 0.95;
  double kappa = 0.0;
  double tau = 0.005 * 0.005;  // prior variance of the drift hypers
  double sigma_nu = 1.0;       // prior std of log(nu - 2)
  Innovation innovation = Innovation::gaussian;
  std::uint64_t seed = 0;
  // Also shrink and jitter the dynamic parameters (a, b, c).
  bool shrink_dynamic = false;
  int jobs = 1;

  void validate() const;
};

struct PredictionRecord {
  long step = 0;
  double pred_logdensity_mixture = 0.0;
  double pred_logdensity_plugin = 0.0;
  CovMatrix predicted_cov_mean;
  double ess = 0.0;
  double elapsed_seconds = 0.0;
};

ParticleCloud init_cloud(const RapfConfig& cfg, Eigen::Index d, const CovMatrix& sigma0,
                         Rng& rng);

// Liu-West style kernel on a weighted set of static blocks (one column per
// particle): m_i = a phi_i + (1 - a) phi_bar and proposals
// N(m_j, (1 - a^2) V), which keep the cloud's mean and covariance.
class ShrinkageKernel {
 public:
  ShrinkageKernel(const Matrix& blocks, std::span<const double> weights, double a);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const Matrix& shrunk() const { return shrunk_; }  // columns m_i

  // Fresh proposal around m_ancestor. Exact copy of m_ancestor when a = 1.
  void propose(Eigen::Index ancestor, Rng& rng, Eigen::Ref<Vector> out) const;

 private:
  double a_;
  Vector mean_;
  Matrix cov_;
  Matrix shrunk_;
  Matrix noise_factor_;  // lower Cholesky factor of (1 - a^2) V
};

// One filter step assimilating x_t. Per-particle randomness comes from
// substreams keyed by a value drawn from `rng`, so the result does not depend
// on cfg.jobs.
std::pair<ParticleCloud, PredictionRecord> rapf_update(const ParticleCloud& cloud,
                                                       const Vector& x_t,
                                                       const RapfConfig& cfg, Rng& rng);

struct PosteriorMean {
  ParamState theta;
  DriftHypers hypers;
  CovMatrix sigma;
  double nu = 0.0;  // Student-t only
};

PosteriorMean posterior_mean(const ParticleCloud& cloud);

double predictive_logpdf_mixture(const ParticleCloud& cloud, const Vector& x,
                                 const RapfConfig& cfg, Rng& rng);
double predictive_logpdf_plugin(const ParticleCloud& cloud, const Vector& x,
                                const RapfConfig& cfg);

struct CurvePoint {
  double point = 0.0;
  double mixture_logpdf = 0.0;
  double plugin_logpdf = 0.0;
};

// Both predictive densities along coordinate `dim_index` with the other
// coordinates at 0. One propagated cloud is shared by the whole grid.
std::vector<CurvePoint> predictive_density_curve(const ParticleCloud& cloud,
                                                 Eigen::Index dim_index,
                                                 const std::vector<double>& grid,
                                                 const RapfConfig& cfg, Rng& rng);

double effective_sample_size(const ParticleCloud& cloud);

using FilterObserver = std::function<void(const ParticleCloud&, const PredictionRecord&)>;

struct FilterRun {
  std::vector<PredictionRecord> records;
  ParticleCloud cloud;
};

// Random stream for the update that moves a cloud from `step` to step + 1.
// Keyed by (seed, step) only, so a run resumed from a snapshot continues
// exactly as the uninterrupted run would.
Rng filter_step_stream(std::uint64_t seed, long step);

// Runs the filter over every row of `series` starting from a fresh cloud.
// The observer sees the posterior cloud after each step.
FilterRun run_filter(const ReturnSeries& series, const CovMatrix& sigma0, const RapfConfig& cfg,
                     const FilterObserver& observer = {});

// Continues `cloud` over series rows cloud.step, cloud.step + 1, ...
FilterRun continue_filter(ParticleCloud cloud, const ReturnSeries& series, const RapfConfig& cfg,
                          const FilterObserver& observer = {});

// Text snapshot: a header line, the last observation, then one particle per
// line. Values are written with 17 significant digits, so a save/load
// round trip is exact.
void save_cloud(std::ostream& out, const ParticleCloud& cloud);
ParticleCloud load_cloud(std::istream& in);

}  // namespace dyncov
