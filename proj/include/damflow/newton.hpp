#pragma once

// Damped Newton iteration on R^n with step halving on residual growth.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace damflow {

/// Iterative solve that failed to reach its tolerance.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NewtonOptions {
  double tol = 1e-12;       // stop when ||F||_2 <= tol
  int max_iter = 50;
  int max_halvings = 30;
  double max_step = std::numeric_limits<double>::infinity();  // cap on ||dx||_inf
};

struct NewtonResult {
  Eigen::VectorXd x;
  double residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Central-difference Jacobian.
template <class F>
Eigen::MatrixXd fd_jacobian(F&& f, const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    const double step = h * std::max(1.0, std::abs(x[k]));
    xp[k] += step;
    xm[k] -= step;
    jac.col(k) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return jac;
}

/// Newton with backtracking. `eval` returns the residual and fills the
/// Jacobian; `admissible` rejects trial points outside the chart (it may be
/// left empty). Residual evaluations that throw are treated as rejected.
template <class Eval>
NewtonResult damped_newton(Eval&& eval, Eigen::VectorXd x, const NewtonOptions& opt,
                           const std::function<bool(const Eigen::VectorXd&)>& admissible = {}) {
  NewtonResult res;
  Eigen::MatrixXd jac;
  Eigen::VectorXd r = eval(x, &jac);
  double norm = r.norm();
  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it;
    if (norm <= opt.tol) {
      res.x = x;
      res.residual_norm = norm;
      res.converged = true;
      return res;
    }
    Eigen::VectorXd dx = jac.colPivHouseholderQr().solve(-r);
    if (!dx.allFinite()) break;
    const double big = dx.cwiseAbs().maxCoeff();
    if (big > opt.max_step) dx *= opt.max_step / big;
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = x + t * dx;
      if (admissible && !admissible(trial)) continue;
      Eigen::MatrixXd jac_trial;
      Eigen::VectorXd r_trial;
      try {
        r_trial = eval(trial, &jac_trial);
      } catch (const std::exception&) {
        continue;
      }
      const double n_trial = r_trial.norm();
      if (std::isfinite(n_trial) && n_trial < norm) {
        x = trial;
        r = r_trial;
        jac = jac_trial;
        norm = n_trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  res.x = x;
  res.residual_norm = norm;
  res.iterations = std::max(res.iterations, 0);
  res.converged = norm <= opt.tol;
  return res;
}

}  // namespace damflow
