#include <doctest.h>

#include <cmath>
#include <vector>

#include "dyncov/error.hpp"
#include "dyncov/mle.hpp"
#include "dyncov/optimize.hpp"

using namespace dyncov;

namespace {

Matrix iid_series(Eigen::Index t, Eigen::Index d, Rng& rng) {
  Matrix x(t, d);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

BekkParams example_params(std::optional<double> nu = std::nullopt) {
  Vector c(3);
  c << 0.3, 0.05, 0.25;
  return BekkParams::diagonal(Vector::Constant(2, 0.92), Vector::Constant(2, 0.3), c, nu);
}

}  // namespace

TEST_CASE("transform round trip") {
  Rng rng(1);
  for (auto variant : {BekkVariant::diagonal, BekkVariant::full}) {
    for (auto law : {Innovation::gaussian, Innovation::student_t}) {
      for (Eigen::Index d = 1; d <= 3; ++d) {
        const BekkTransform tr(variant, d, law);
        for (int rep = 0; rep < 200; ++rep) {
          Vector z(tr.size());
          for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
          const Vector back = tr.to_unconstrained(tr.to_params(z));
          CHECK((back - z).cwiseAbs().maxCoeff() < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("transformed diagonal parameters are always stationary") {
  Rng rng(2);
  const BekkTransform tr(BekkVariant::diagonal, 3, Innovation::student_t);
  for (int rep = 0; rep < 1000; ++rep) {
    Vector z(tr.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = 4.0 * rng.normal();
    const BekkParams p = tr.to_params(z);
    CHECK(stationarity_check(p));
    CHECK(*p.nu > 2.0);
  }
}

TEST_CASE("bekk_loglik reduces to an i.i.d. Gaussian sum when a = b = 0") {
  Rng rng(3);
  const Matrix x = iid_series(50, 2, rng);
  Vector c(3);
  c << 1.2, 0.3, 0.8;
  const auto p = BekkParams::diagonal(Vector::Zero(2), Vector::Zero(2), c);
  const Matrix sigma = gram_from_packed(c);
  double expected = 0.0;
  for (Eigen::Index t = 0; t < x.rows(); ++t) expected += mvn_logpdf(x.row(t).transpose(), sigma);
  CHECK(bekk_loglik(p, x, Matrix::Identity(2, 2)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("Student-t likelihood approaches the Gaussian one for large nu") {
  Rng rng(4);
  const Matrix x = iid_series(200, 2, rng);
  const double g = bekk_loglik(example_params(), x, Matrix::Identity(2, 2));
  const double t = bekk_loglik(example_params(1e6), x, Matrix::Identity(2, 2));
  CHECK(std::abs(g - t) < 1e-2);
}

TEST_CASE("d = 1 likelihood matches the hand-unrolled recursion") {
  const double a = 0.8, b = 0.4, c = 0.5, s0 = 2.0;
  Matrix x(3, 1);
  x << 0.3, -1.1, 0.7;
  const auto p = BekkParams::diagonal(Vector::Constant(1, a), Vector::Constant(1, b),
                                      Vector::Constant(1, c));
  auto lp = [](double v, double var) {
    return -0.5 * (std::log(2.0 * std::numbers::pi * var) + v * v / var);
  };
  const double v0 = c * c + a * a * s0;
  const double v1 = c * c + b * b * x(0, 0) * x(0, 0) + a * a * v0;
  const double v2 = c * c + b * b * x(1, 0) * x(1, 0) + a * a * v1;
  const double expected = lp(x(0, 0), v0) + lp(x(1, 0), v1) + lp(x(2, 0), v2);
  CHECK(bekk_loglik(p, x, Matrix::Constant(1, 1, s0)) ==
        doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(bekk_loglik(p, x.topRows(1), Matrix::Constant(1, 1, s0)), Error);
}

TEST_CASE("one-step predictions telescope to the likelihood") {
  Rng rng(5);
  const Matrix x = iid_series(100, 2, rng);
  for (auto p : {example_params(), example_params(6.0)}) {
    const Matrix sigma0 = 0.5 * Matrix::Identity(2, 2);
    CovRecursionState st{sigma0, Vector::Zero(2)};
    double total = 0.0;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      auto [sigma, lp] = predict_one_step(p, st, x.row(t).transpose());
      total += lp;
      st = {sigma, x.row(t).transpose()};
    }
    CHECK(total == doctest::Approx(bekk_loglik(p, x, sigma0)).epsilon(1e-12));
    BekkLikelihood lik(x, sigma0);
    const CovRecursionState fin = lik.final_state(p);
    CHECK((fin.sigma - st.sigma).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Student-t predictive density is taller at zero") {
  const CovRecursionState st{Matrix::Identity(2, 2), Vector::Zero(2)};
  const Vector zero = Vector::Zero(2);
  const double g = predict_one_step(example_params(), st, zero).second;
  const double t = predict_one_step(example_params(5.0), st, zero).second;
  CHECK(t > g);
}

TEST_CASE("full likelihood agrees with the diagonal one for diagonal matrices") {
  Rng rng(6);
  const Matrix x = iid_series(100, 2, rng);
  const BekkParams d = example_params();
  const BekkParams f = BekkParams::full(Matrix(d.a.asDiagonal()), Matrix(d.b.asDiagonal()), d.c);
  CHECK(bekk_loglik(d, x, Matrix::Identity(2, 2)) ==
        doctest::Approx(bekk_loglik(f, x, Matrix::Identity(2, 2))).epsilon(1e-12));
}

TEST_CASE("Nelder-Mead best value is monotone and finds a quadratic optimum") {
  const Objective f = [](const Vector& z) {
    return -((z[0] - 1.0) * (z[0] - 1.0) + 3.0 * (z[1] + 2.0) * (z[1] + 2.0));
  };
  std::vector<double> trace;
  const SearchResult r = nelder_mead_maximize(f, Vector::Zero(2), {2000, 1e-12, 0.5}, &trace);
  REQUIRE(!trace.empty());
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1]);
  CHECK(r.converged);
  CHECK(std::abs(r.x[0] - 1.0) < 1e-4);
  CHECK(std::abs(r.x[1] + 2.0) < 1e-4);

  std::vector<double> polish_trace;
  const SearchResult p = gradient_polish(f, Vector::Zero(2), f(Vector::Zero(2)), 100, 1e-14,
                                         &polish_trace);
  for (std::size_t i = 1; i < polish_trace.size(); ++i)
    CHECK(polish_trace[i] >= polish_trace[i - 1]);
  CHECK(std::abs(p.x[0] - 1.0) < 1e-5);
}

TEST_CASE("fit_bekk is deterministic for a fixed seed") {
  Rng rng(7);
  const Simulation sim = simulate(example_params(), 400, Matrix::Identity(2, 2), rng);
  FitConfig cfg;
  cfg.n_restarts = 2;
  cfg.max_iters = 300;
  cfg.seed = 11;
  const FitResult a = fit_bekk(sim.x, cfg);
  const FitResult b = fit_bekk(sim.x, cfg);
  CHECK(a.loglik == b.loglik);
  CHECK(a.params.a == b.params.a);
  CHECK(a.params.c == b.params.c);
  CHECK(std::isfinite(a.loglik));
  CHECK(stationarity_check(a.params));
}

TEST_CASE("fit on i.i.d. noise finds little dynamics") {
  Rng rng(8);
  const Matrix x = iid_series(1000, 1, rng);
  FitConfig cfg;
  cfg.n_restarts = 3;
  cfg.seed = 3;
  const FitResult r = fit_bekk(x, cfg);
  // With a^2 near one the recursion can mimic a constant variance, so the
  // null check is on the ARCH loading.
  CHECK(r.params.b[0] * r.params.b[0] < 0.2);
  const double var = gram_from_packed(r.params.c)(0, 0) /
                     (1.0 - r.params.a[0] * r.params.a[0] - r.params.b[0] * r.params.b[0]);
  CHECK(std::abs(var - 1.0) < 0.2);
}

TEST_CASE("refitting from the optimum does not move away") {
  Rng rng(9);
  const Simulation sim = simulate(example_params(), 600, Matrix::Identity(2, 2), rng);
  FitConfig cfg;
  cfg.n_restarts = 2;
  cfg.seed = 5;
  const FitResult first = fit_bekk(sim.x, cfg);
  cfg.initial = first.params;
  cfg.n_restarts = 1;
  const FitResult second = fit_bekk(sim.x, cfg);
  CHECK(second.loglik >= first.loglik - 1e-6);
  CHECK(std::abs(second.loglik - first.loglik) < 1e-3);
}

TEST_CASE("fit_bekk input errors") {
  Rng rng(10);
  FitConfig cfg;
  CHECK_THROWS_AS(fit_bekk(iid_series(10, 2, rng), cfg), Error);
  cfg.n_restarts = 0;
  CHECK_THROWS_AS(fit_bekk(iid_series(500, 1, rng), cfg), Error);
}
