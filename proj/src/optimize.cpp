#include "dyncov/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dyncov {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Vector& x) {
  const double v = f(x);
  return std::isnan(v) ? kNegInf : v;
}

}  // namespace

SearchResult nelder_mead_maximize(const Objective& f, const Vector& x0,
                                  const SearchOptions& opts,
                                  std::vector<double>* best_trace) {
  const Eigen::Index n = x0.size();
  std::vector<Vector> simplex(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> values(static_cast<std::size_t>(n + 1));
  values[0] = safe_eval(f, x0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector& v = simplex[static_cast<std::size_t>(i + 1)];
    v[i] += opts.initial_step;
    double fv = safe_eval(f, v);
    if (!std::isfinite(fv)) {
      // Try the opposite direction before giving up on this vertex.
      v[i] = x0[i] - opts.initial_step;
      fv = safe_eval(f, v);
    }
    values[static_cast<std::size_t>(i + 1)] = fv;
  }

  std::vector<std::size_t> order(simplex.size());
  SearchResult result;
  Vector centroid(n);
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    // Descending: order[0] is the best vertex.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return values[l] > values[r]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    const double fb = values[best];
    const double fw = values[worst];
    if (std::isfinite(fb) && std::isfinite(fw) &&
        fb - fw <= opts.tol * (std::abs(fb) + opts.tol)) {
      result.converged = true;
      break;
    }

    centroid.setZero();
    for (std::size_t k = 0; k + 1 < order.size(); ++k) centroid += simplex[order[k]];
    centroid /= static_cast<double>(n);

    const Vector& xw = simplex[worst];
    const Vector reflected = centroid + (centroid - xw);
    const double fr = safe_eval(f, reflected);

    if (fr > fb) {
      const Vector expanded = centroid + 2.0 * (centroid - xw);
      const double fe = safe_eval(f, expanded);
      if (fe > fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
    } else if (fr > values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = fr;
    } else {
      const bool outside = fr > fw;
      const Vector contracted = outside ? Vector(centroid + 0.5 * (reflected - centroid))
                                        : Vector(centroid + 0.5 * (xw - centroid));
      const double fc = safe_eval(f, contracted);
      if (outside ? fc >= fr : fc > fw) {
        simplex[worst] = contracted;
        values[worst] = fc;
      } else {
        const Vector xb = simplex[best];
        for (std::size_t k = 0; k < simplex.size(); ++k) {
          if (k == best) continue;
          simplex[k] = xb + 0.5 * (simplex[k] - xb);
          values[k] = safe_eval(f, simplex[k]);
        }
      }
    }
    if (best_trace) {
      best_trace->push_back(*std::max_element(values.begin(), values.end()));
    }
  }

  const auto best_it = std::max_element(values.begin(), values.end());
  const auto best = static_cast<std::size_t>(best_it - values.begin());
  result.x = simplex[best];
  result.value = values[best];
  result.iterations = iter;
  return result;
}

SearchResult gradient_polish(const Objective& f, const Vector& x0, double f0,
                             int max_iters, double tol,
                             std::vector<double>* best_trace) {
  const Eigen::Index n = x0.size();
  SearchResult result{x0, f0, 0, false};
  if (!std::isfinite(f0) || n == 0 || max_iters <= 0) return result;

  auto gradient = [&](const Vector& x, Vector& g) {
    g.resize(n);
    Vector probe = x;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
      probe[i] = x[i] + h;
      const double up = safe_eval(f, probe);
      probe[i] = x[i] - h;
      const double down = safe_eval(f, probe);
      probe[i] = x[i];
      if (!std::isfinite(up) || !std::isfinite(down)) return false;
      g[i] = (up - down) / (2.0 * h);
    }
    return g.allFinite();
  };

  Vector x = x0;
  double fx = f0;
  Vector g;
  if (!gradient(x, g)) return result;
  // Inverse Hessian approximation of -f.
  Matrix h_inv = Matrix::Identity(n, n);

  for (int iter = 0; iter < max_iters; ++iter) {
    result.iterations = iter + 1;
    Vector dir = h_inv * g;
    if (dir.dot(g) <= 0.0) {
      h_inv.setIdentity();
      dir = g;
    }
    double step = 1.0;
    Vector x_new;
    double f_new = kNegInf;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      x_new = x + step * dir;
      f_new = safe_eval(f, x_new);
      if (std::isfinite(f_new) && f_new >= fx + 1e-4 * step * dir.dot(g)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(f_new > fx)) {
      result.converged = true;
      break;
    }
    const double gain = f_new - fx;
    Vector g_new;
    const bool have_grad = gradient(x_new, g_new);
    const Vector s = x_new - x;
    x = x_new;
    fx = f_new;
    if (best_trace) best_trace->push_back(fx);
    if (gain <= tol * (std::abs(fx) + tol) || !have_grad) {
      result.converged = true;
      break;
    }
    // BFGS update for minimizing -f: y = grad(-f)_new - grad(-f)_old.
    const Vector y = g - g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const Matrix eye = Matrix::Identity(n, n);
      const Matrix left = eye - (s * y.transpose()) / sy;
      h_inv = left * h_inv * left.transpose() + (s * s.transpose()) / sy;
    }
    g = g_new;
  }
  result.x = x;
  result.value = fx;
  return result;
}

}  // namespace dyncov
