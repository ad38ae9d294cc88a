#include "dtrack/gn_cg.hpp"

#include <cmath>
#include <string>

#include "dtrack/kernels.hpp"

namespace dtrack::gn {
namespace {

double dot(std::span<const double> x, std::span<const double> y) {
  return kernels::active().dot(x.data(), y.data(), x.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  kernels::active().axpy(a, x.data(), y.data(), x.size());
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void GnConfig::validate() const {
  if (!(cg_residual_tolerance > 0.0)) {
    throw ContractViolation("GnConfig: cg_residual_tolerance must be > 0");
  }
}

CgResult cg_solve(const LinearOperator& apply, std::span<const double> rhs,
                  std::size_t max_iters, double tol) {
  const std::size_t n = rhs.size();
  CgResult out;
  out.x.assign(n, 0.0);
  if (!all_finite(rhs)) throw SolverDivergence("cg_solve: non-finite right-hand side", 0);

  const double rhs_norm = std::sqrt(dot(rhs, rhs));
  if (rhs_norm == 0.0) return out;

  Vec r(rhs.begin(), rhs.end());
  Vec p = r;
  Vec Ap(n);
  double rs = rhs_norm * rhs_norm;
  out.residual_norm = rhs_norm;

  for (std::size_t k = 0; k < max_iters; ++k) {
    apply(p, Ap);
    const double curvature = dot(p, Ap);
    if (!std::isfinite(curvature)) {
      throw SolverDivergence("cg_solve: non-finite operator output", k);
    }
    if (curvature <= 0.0) break;  // direction in the null space of A
    const double alpha = rs / curvature;
    axpy(alpha, p, out.x);
    axpy(-alpha, Ap, r);
    const double rs_next = dot(r, r);
    if (!std::isfinite(rs_next)) throw SolverDivergence("cg_solve: non-finite residual", k);
    out.iterations = k + 1;
    out.residual_norm = std::sqrt(rs_next);
    if (out.residual_norm <= tol * rhs_norm) break;
    const double beta = rs_next / rs;
    rs = rs_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  return out;
}

Vec gn_normal_apply(const ResidualProblem& problem, std::span<const double> w,
                    std::span<const double> p) {
  if (w.size() != problem.parameter_dim() || p.size() != problem.parameter_dim()) {
    throw ContractViolation("gn_normal_apply: dimension mismatch (parameter dim " +
                            std::to_string(problem.parameter_dim()) + ")");
  }
  Vec q1(problem.residual_dim());
  problem.jvp(w, p, q1);
  Vec q2(problem.parameter_dim());
  problem.vjp(w, q1, q2);
  return q2;
}

double loss(const ResidualProblem& problem, std::span<const double> w) {
  Vec r(problem.residual_dim());
  problem.residual(w, r);
  return dot(r, r);
}

Vec loss_gradient(const ResidualProblem& problem, std::span<const double> w) {
  Vec r(problem.residual_dim());
  problem.residual(w, r);
  Vec g(problem.parameter_dim());
  problem.vjp(w, r, g);
  for (double& x : g) x *= 2.0;
  return g;
}

SolveResult solve_nlls(const ResidualProblem& problem, std::span<const double> w0,
                       const GnConfig& config) {
  config.validate();
  const std::size_t n = problem.parameter_dim();
  if (w0.size() != n) throw ContractViolation("solve_nlls: w0 has wrong dimension");
  if (!all_finite(w0)) throw ContractViolation("solve_nlls: w0 not finite");

  SolveResult out;
  out.w.assign(w0.begin(), w0.end());
  Vec r(problem.residual_dim());
  Vec g(n);

  problem.residual(out.w, r);
  double current = dot(r, r);
  out.report.losses.push_back(current);
  if (!std::isfinite(current)) {
    throw NllsDivergence("solve_nlls: non-finite initial loss", 0, out.report);
  }

  for (std::size_t round = 0; round < config.outer_iterations; ++round) {
    problem.vjp(out.w, r, g);
    for (double& x : g) x = -x;

    const Vec& w_lin = out.w;
    const LinearOperator normal = [&](std::span<const double> p, std::span<double> q) {
      Vec q1(problem.residual_dim());
      problem.jvp(w_lin, p, q1);
      problem.vjp(w_lin, q1, q);
    };

    CgResult step;
    try {
      step = cg_solve(normal, g, config.cg_iterations, config.cg_residual_tolerance);
    } catch (const SolverDivergence& e) {
      throw NllsDivergence(e.what(), round + 1, out.report);
    }
    out.report.cg_iterations_total += step.iterations;

    Vec w_next = out.w;
    axpy(1.0, step.x, w_next);
    problem.residual(w_next, r);
    const double next = dot(r, r);
    if (!std::isfinite(next)) {
      throw NllsDivergence("solve_nlls: non-finite loss", round + 1, out.report);
    }
    if (!config.always_accept && next > current) {
      problem.residual(out.w, r);
      break;
    }
    out.w = std::move(w_next);
    current = next;
    out.report.losses.push_back(current);
  }

  problem.vjp(out.w, r, g);
  out.report.final_gradient_norm = 2.0 * std::sqrt(dot(g, g));
  return out;
}

SolveResult gradient_descent(const ResidualProblem& problem, std::span<const double> w0,
                             std::size_t iterations, double learning_rate) {
  if (!(learning_rate > 0.0)) {
    throw ContractViolation("gradient_descent: learning rate must be > 0");
  }
  const std::size_t n = problem.parameter_dim();
  if (w0.size() != n) throw ContractViolation("gradient_descent: w0 has wrong dimension");

  SolveResult out;
  out.w.assign(w0.begin(), w0.end());
  Vec r(problem.residual_dim());
  Vec g(n);
  problem.residual(out.w, r);
  out.report.losses.push_back(dot(r, r));

  for (std::size_t k = 0; k < iterations; ++k) {
    problem.vjp(out.w, r, g);
    axpy(-2.0 * learning_rate, g, out.w);
    problem.residual(out.w, r);
    const double l = dot(r, r);
    if (!std::isfinite(l)) {
      throw NllsDivergence("gradient_descent: non-finite loss", k + 1, out.report);
    }
    out.report.losses.push_back(l);
    ++out.report.cg_iterations_total;
  }
  problem.vjp(out.w, r, g);
  out.report.final_gradient_norm = 2.0 * std::sqrt(dot(g, g));
  return out;
}

}  // namespace dtrack::gn
