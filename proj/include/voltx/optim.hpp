#pragma once

// BFGS minimizer with a backtracking Armijo line search.

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace voltx {

struct OptimOptions {
  double ftol_rel = 1e-10;  // relative change in f between iterations
  double xtol = 1e-8;       // step size relative to (1 + |x|)
  double gtol = 1e-8;       // infinity norm of the gradient
  int max_evals = 10000;
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Minimizes f. `fg(x, g)` returns f(x) and writes the gradient into g;
/// non-finite values are treated as +inf and rejected by the line search.
template <class FG>
OptimResult minimize_bfgs(FG&& fg, Eigen::VectorXd x0, const OptimOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  OptimResult res;
  res.x = std::move(x0);
  res.grad = Eigen::VectorXd::Zero(n);

  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    ++res.evaluations;
    double f = fg(x, g);
    if (!std::isfinite(f) || !g.allFinite()) return std::numeric_limits<double>::infinity();
    return f;
  };

  res.f = eval(res.x, res.grad);
  if (!std::isfinite(res.f)) {
    res.message = "objective not finite at the starting point";
    return res;
  }
  if (n == 0) {
    res.converged = true;
    res.message = "no free parameters";
    return res;
  }

  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  bool restarted = false;
  Eigen::VectorXd g_new(n), x_new(n);

  while (res.evaluations < opt.max_evals) {
    if (res.grad.lpNorm<Eigen::Infinity>() <= opt.gtol) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }
    Eigen::VectorXd dir = -Hinv * res.grad;
    double slope = res.grad.dot(dir);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      dir = -res.grad;
      slope = res.grad.dot(dir);
    }

    // Backtracking line search on the Armijo condition.
    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60 && res.evaluations < opt.max_evals; ++ls) {
      x_new = res.x + step * dir;
      f_new = eval(x_new, g_new);
      if (f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= (std::isfinite(f_new) ? 0.5 : 0.1);
    }
    if (!accepted) {
      if (!restarted) {
        restarted = true;
        Hinv.setIdentity();
        scaled = false;
        continue;
      }
      res.converged = res.grad.lpNorm<Eigen::Infinity>() <= 1e-5;
      res.message = res.converged ? "line search stalled at a stationary point"
                                  : "line search failed";
      return res;
    }
    restarted = false;
    ++res.iterations;

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.grad;
    const double f_old = res.f;
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        Hinv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = Hinv * y;
      Hinv += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) -
              rho * (Hy * s.transpose() + s * Hy.transpose());
    }

    const double fchange = std::fabs(f_old - res.f);
    const double xscale = 1.0 + res.x.lpNorm<Eigen::Infinity>();
    if (fchange <= opt.ftol_rel * std::max(std::fabs(res.f), 1e-300) &&
        s.lpNorm<Eigen::Infinity>() <= opt.xtol * xscale) {
      res.converged = true;
      res.message = "function and parameter tolerances reached";
      return res;
    }
  }
  res.message = "evaluation limit reached";
  return res;
}

}  // namespace voltx
