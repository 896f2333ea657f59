#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/LU>

#include "dyncov/error.hpp"
#include "dyncov/mvstat.hpp"

using namespace dyncov;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Matrix random_spd(Eigen::Index d, Rng& rng) {
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  return g * g.transpose() + 0.5 * Matrix::Identity(d, d);
}

// Laplace expansion; independent of any factorization.
double brute_det(const Matrix& m) {
  const Eigen::Index n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Matrix minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r) {
      Eigen::Index cc = 0;
      for (Eigen::Index c = 0; c < n; ++c) {
        if (c == j) continue;
        minor(r - 1, cc++) = m(r, c);
      }
    }
    det += ((j % 2 == 0) ? 1.0 : -1.0) * m(0, j) * brute_det(minor);
  }
  return det;
}

bool throws_kind(ErrorKind kind, auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

}  // namespace

TEST_CASE("cholesky examples") {
  CHECK(cholesky(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3), 0.0));
  const Matrix l = cholesky(m2(4, 2, 2, 3));
  CHECK(std::abs(l(0, 0) - 2.0) < 1e-15);
  CHECK(l(0, 1) == 0.0);
  CHECK(std::abs(l(1, 0) - 1.0) < 1e-15);
  CHECK(std::abs(l(1, 1) - std::sqrt(2.0)) < 1e-15);
  CHECK(throws_kind(ErrorKind::NotPositiveDefinite, [] { cholesky(m2(1, 2, 2, 1)); }));
  Matrix nan = Matrix::Identity(2, 2);
  nan(1, 1) = std::nan("");
  CHECK(throws_kind(ErrorKind::NotPositiveDefinite, [&] { cholesky(nan); }));
}

TEST_CASE("cholesky reconstructs random SPD matrices") {
  Rng rng(11);
  for (Eigen::Index d = 1; d <= 10; ++d) {
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix s = random_spd(d, rng);
      const Matrix l = cholesky(s);
      CHECK((l * l.transpose() - s).norm() / s.norm() < 1e-10);
      CHECK(l.isLowerTriangular());
    }
  }
}

TEST_CASE("cholesky jitter absorbs roundoff-level singularity") {
  // Rank-one PSD matrix: fails plain LLT, succeeds after one jitter.
  Vector v(3);
  v << 1.0, 2.0, 3.0;
  const Matrix s = v * v.transpose();
  CHECK_NOTHROW(cholesky(s));
}

TEST_CASE("log_det_spd") {
  CHECK(log_det_spd(Matrix::Identity(5, 5)) == doctest::Approx(0.0));
  Matrix d23 = Matrix::Zero(2, 2);
  d23.diagonal() << 2.0, 3.0;
  CHECK(std::abs(log_det_spd(d23) - std::log(6.0)) < 1e-14);
  // ad - bc = 12 - 4 = 8
  CHECK(std::abs(log_det_spd(m2(4, 2, 2, 3)) - std::log(8.0)) < 1e-14);
  Rng rng(3);
  for (Eigen::Index d = 1; d <= 4; ++d) {
    for (int rep = 0; rep < 10; ++rep) {
      const Matrix s = random_spd(d, rng);
      CHECK(std::abs(log_det_spd(s) - std::log(brute_det(s))) < 1e-10);
    }
  }
}

TEST_CASE("mvn_logpdf examples") {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  CHECK(std::abs(mvn_logpdf(Vector::Zero(2), Matrix::Identity(2, 2)) + log2pi) < 1e-14);
  CHECK(std::abs(mvn_logpdf(Vector::Ones(1), Matrix::Identity(1, 1)) - (-1.4189385332046727)) <
        1e-12);

  // Explicit 2x2 inverse: S^{-1} = [[3, -2], [-2, 4]] / 8.
  const Matrix s = m2(4, 2, 2, 3);
  const Vector x = Vector::Ones(2);
  const double quad = (3.0 * 1 * 1 - 2.0 * 1 * 1 - 2.0 * 1 * 1 + 4.0 * 1 * 1) / 8.0;
  const double expected = -log2pi - 0.5 * std::log(8.0) - 0.5 * quad;
  CHECK(std::abs(mvn_logpdf(x, s) - expected) < 1e-13);

  CHECK(throws_kind(ErrorKind::DimensionMismatch,
                    [] { mvn_logpdf(Vector::Zero(3), Matrix::Identity(2, 2)); }));
  CHECK(throws_kind(ErrorKind::NotPositiveDefinite,
                    [] { mvn_logpdf(Vector::Zero(2), m2(1, 2, 2, 1)); }));
}

TEST_CASE("mvn_logpdf integrates to one (d = 1)") {
  for (double var : {0.3, 0.7, 1.0, 2.5}) {
    const Matrix s = Matrix::Constant(1, 1, var);
    const int n = 16000;
    const double h = 16.0 / n;
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      integral += w * std::exp(mvn_logpdf(Vector::Constant(1, -8.0 + i * h), s));
    }
    CHECK(std::abs(integral * h - 1.0) < 1e-6);
  }
}

TEST_CASE("mvt_logpdf examples") {
  // Closed form univariate t at zero: Gamma(2) / (Gamma(1.5) sqrt(3 pi)).
  const double expected =
      std::log(std::tgamma(2.0) / (std::tgamma(1.5) * std::sqrt(3.0 * std::numbers::pi)));
  CHECK(std::abs(mvt_logpdf(Vector::Zero(1), 3.0, Matrix::Identity(1, 1)) - expected) < 1e-13);
  CHECK(std::abs(expected - (-1.0009)) < 1e-3);

  CHECK(std::abs(mvt_logpdf(Vector::Constant(1, 2.0), 1e6, Matrix::Identity(1, 1)) -
                 mvn_logpdf(Vector::Constant(1, 2.0), Matrix::Identity(1, 1))) < 1e-3);

  // Direct evaluation of the density with an explicit inverse; d = 2, |S| = 1.
  const double nu = 5.0;
  const Vector x = Vector::Ones(2);
  const double quad = x.dot(Matrix::Identity(2, 2).inverse() * x);
  const double direct =
      std::log(std::tgamma((nu + 2) / 2) * std::pow(1 + quad / nu, -(nu + 2) / 2) /
               (std::tgamma(nu / 2) * (nu * std::numbers::pi)));
  CHECK(std::abs(mvt_logpdf(x, nu, Matrix::Identity(2, 2)) - direct) < 1e-13);

  CHECK(throws_kind(ErrorKind::InvalidDof,
                    [] { mvt_logpdf(Vector::Zero(1), 2.0, Matrix::Identity(1, 1)); }));
}

TEST_CASE("mvt approaches mvn as nu grows") {
  Rng rng(5);
  for (Eigen::Index d = 1; d <= 3; ++d) {
    const Matrix s = random_spd(d, rng) / static_cast<double>(d);
    for (double g = -5.0; g <= 5.0; g += 0.5) {
      const Vector x = Vector::Constant(d, g / std::sqrt(static_cast<double>(d)));
      CHECK(std::abs(mvt_logpdf(x, 1e6, s) - mvn_logpdf(x, s)) < 1e-3);
    }
  }
}

TEST_CASE("scale_from_cov") {
  CHECK(scale_from_cov(4.0, 2.0 * Matrix::Identity(2, 2)).isApprox(Matrix::Identity(2, 2)));
  CHECK(std::abs(scale_from_cov(3.0, Matrix::Constant(1, 1, 3.0))(0, 0) - 1.0) < 1e-15);
  CHECK(std::abs(scale_from_cov(1e12, Matrix::Constant(1, 1, 3.0))(0, 0) - 3.0) < 1e-10);
  CHECK(throws_kind(ErrorKind::InvalidDof,
                    [] { scale_from_cov(1.5, Matrix::Identity(1, 1)); }));
}

TEST_CASE("innovation_logpdf uses the covariance-matched scale") {
  const Matrix sigma = m2(2.0, 0.3, 0.3, 1.0);
  Vector x(2);
  x << 0.4, -1.1;
  CHECK(std::abs(innovation_logpdf(x, sigma, Innovation::student_t, 6.0) -
                 mvt_logpdf(x, 6.0, scale_from_cov(6.0, sigma))) < 1e-13);
  CHECK(innovation_logpdf(x, sigma, Innovation::gaussian, 0.0) == mvn_logpdf(x, sigma));
  DensityKernel kernel(2);
  CHECK(std::abs(kernel.logpdf(x, sigma, Innovation::student_t, 6.0) -
                 innovation_logpdf(x, sigma, Innovation::student_t, 6.0)) < 1e-14);
  CHECK(kernel.logpdf(x, m2(1, 2, 2, 1), Innovation::gaussian, 0.0) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("sample_mvn") {
  Rng rng(1);
  Vector mean(2);
  mean << 0.25, -3.0;
  CHECK(sample_mvn(mean, Matrix::Zero(2, 2), rng) == mean);
  Matrix partial = Matrix::Zero(2, 2);
  partial(0, 0) = 1.0;
  CHECK(sample_mvn(mean, partial, rng)[1] == mean[1]);

  Rng a(77), b(77);
  CHECK(sample_mvn(mean, Matrix::Identity(2, 2), a) ==
        sample_mvn(mean, Matrix::Identity(2, 2), b));

  const int n = 100000;
  Matrix acc = Matrix::Zero(2, 2);
  Rng r(2024);
  for (int i = 0; i < n; ++i) {
    const Vector z = sample_mvn(Vector::Zero(2), Matrix::Identity(2, 2), r);
    acc += z * z.transpose();
  }
  acc /= n;
  CHECK((acc - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.05);

  CHECK(throws_kind(ErrorKind::NotPositiveDefinite,
                    [&] { sample_mvn(Vector::Zero(2), m2(1, 2, 2, 1), r); }));
}

TEST_CASE("Student-t draws have covariance sigma") {
  const Matrix sigma = m2(2.0, 0.6, 0.6, 1.0);
  Rng rng(8);
  const int n = 100000;
  Matrix acc = Matrix::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vector z = sample_mvt(8.0, sigma, rng);
    acc += z * z.transpose();
  }
  acc /= n;
  CHECK((acc - sigma).norm() / sigma.norm() < 0.05);
}

TEST_CASE("weighted_mean_and_cov") {
  WeightedPoints one{Matrix::Constant(2, 1, 3.5), Vector::Ones(1)};
  MeanCov mc = weighted_mean_and_cov(one);
  CHECK(mc.mean == Vector::Constant(2, 3.5));
  CHECK(mc.cov.isZero(0.0));

  WeightedPoints two{Matrix(1, 2), Vector::Constant(2, 0.5)};
  two.points << -1.0, 1.0;
  mc = weighted_mean_and_cov(two);
  CHECK(mc.mean[0] == 0.0);
  CHECK(mc.cov(0, 0) == 1.0);

  // Uniform weights against the plain sample mean / population covariance.
  Rng rng(9);
  const int n = 100;
  WeightedPoints pts{Matrix(3, n), Vector::Constant(n, 1.0 / n)};
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < 3; ++i) pts.points(i, j) = rng.normal() + i;
  mc = weighted_mean_and_cov(pts);
  Vector mean = Vector::Zero(3);
  for (int j = 0; j < n; ++j) mean += pts.points.col(j);
  mean /= n;
  Matrix cov = Matrix::Zero(3, 3);
  for (int j = 0; j < n; ++j) {
    const Vector dlt = pts.points.col(j) - mean;
    cov += dlt * dlt.transpose();
  }
  cov /= n;
  CHECK((mc.mean - mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((mc.cov - cov).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(throws_kind(ErrorKind::EmptyCloud,
                    [] { weighted_mean_and_cov(WeightedPoints{Matrix(2, 0), Vector(0)}); }));
}

TEST_CASE("systematic_resample examples") {
  Rng rng(4);
  const std::vector<double> point{1.0, 0.0, 0.0};
  for (std::size_t idx : systematic_resample(point, rng)) CHECK(idx == 0);

  const std::vector<double> uniform(4, 0.25);
  for (int rep = 0; rep < 50; ++rep) {
    auto idx = systematic_resample(uniform, rng);
    std::sort(idx.begin(), idx.end());
    CHECK(idx == std::vector<std::size_t>{0, 1, 2, 3});
  }

  const std::vector<double> skew{0.75, 0.25};
  for (int rep = 0; rep < 50; ++rep) {
    const auto idx = systematic_resample(skew, 4, rng);
    CHECK(idx.size() == 4);
    CHECK(std::count(idx.begin(), idx.end(), 0u) == 3);
    CHECK(std::count(idx.begin(), idx.end(), 1u) == 1);
  }

  CHECK(throws_kind(ErrorKind::DegenerateWeights, [&] {
    const std::vector<double> zeros(3, 0.0);
    systematic_resample(zeros, rng);
  }));
  CHECK(throws_kind(ErrorKind::DegenerateWeights, [&] {
    const std::vector<double> bad{0.5, std::nan("")};
    systematic_resample(bad, rng);
  }));
}

TEST_CASE("systematic_resample counts stay within one of n w") {
  Rng rng(12);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rep % 37;
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& v : w) total += (v = rng.uniform() * rng.uniform());
    for (auto& v : w) v /= total;
    std::vector<int> counts(n, 0);
    for (std::size_t idx : systematic_resample(w, rng)) ++counts[idx];
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(counts[i] - static_cast<double>(n) * w[i]) < 1.0 + 1e-9);
    }
  }
}

TEST_CASE("systematic_resample preserves weighted means in expectation") {
  Rng rng(13);
  const std::size_t n = 50;
  std::vector<double> w(n), f(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(rng.normal());
    f[i] = rng.normal() * 3.0 + 1.0;
    total += w[i];
  }
  double target = 0.0;
  for (std::size_t i = 0; i < n; ++i) target += (w[i] /= total) * f[i];

  const int reps = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    double avg = 0.0;
    for (std::size_t idx : systematic_resample(w, rng)) avg += f[idx];
    avg /= static_cast<double>(n);
    sum += avg;
    sum_sq += avg * avg;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum_sq / reps - mean * mean) / reps);
  CHECK(std::abs(mean - target) <= 3.0 * se + 1e-12);
}

TEST_CASE("effective_sample_size and log_sum_exp") {
  const std::vector<double> uniform(10, 0.1);
  CHECK(effective_sample_size(uniform) == doctest::Approx(10.0));
  std::vector<double> point(10, 0.0);
  point[3] = 1.0;
  CHECK(effective_sample_size(point) == 1.0);
  std::vector<double> pair(10, 0.0);
  pair[1] = pair[7] = 0.5;
  CHECK(effective_sample_size(pair) == 2.0);

  const std::vector<double> logs{std::log(0.2), std::log(0.3), std::log(0.5)};
  CHECK(std::abs(log_sum_exp(logs)) < 1e-15);
  const std::vector<double> all_neg_inf(3, -std::numeric_limits<double>::infinity());
  CHECK(log_sum_exp(all_neg_inf) == -std::numeric_limits<double>::infinity());
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(std::abs(log_sum_exp(big) - (1000.0 + std::log(2.0))) < 1e-12);
}
