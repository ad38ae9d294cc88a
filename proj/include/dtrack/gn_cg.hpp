#pragma once

// Matrix-free Gauss-Newton with a conjugate-gradient inner solve.
//
// For a loss L(w) = |r(w)|^2 each outer round minimizes the linearized model
//   dw^T J^T J dw + 2 dw^T J^T r + r^T r
// by CG on J^T J dw = -J^T r, starting from dw = 0, and then applies w += dw.
// Every CG iteration costs one Jacobian-vector product and one
// vector-Jacobian product.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dtrack/errors.hpp"

namespace dtrack::gn {

using Vec = std::vector<double>;

/// Residual function with forward and reverse linearizations.
///
/// Implementations may cache the linearization point internally; a single
/// instance is used by one solve at a time.
class ResidualProblem {
 public:
  virtual ~ResidualProblem() = default;

  virtual std::size_t parameter_dim() const = 0;
  virtual std::size_t residual_dim() const = 0;

  virtual void residual(std::span<const double> w, std::span<double> r) const = 0;
  /// out = (dr/dw) p
  virtual void jvp(std::span<const double> w, std::span<const double> p,
                   std::span<double> out) const = 0;
  /// out = (dr/dw)^T u
  virtual void vjp(std::span<const double> w, std::span<const double> u,
                   std::span<double> out) const = 0;
};

struct GnConfig {
  std::size_t outer_iterations = 6;
  std::size_t cg_iterations = 10;
  double cg_residual_tolerance = 1e-8;
  // When false, a round whose loss exceeds the previous one is rolled back and
  // the solve stops.
  bool always_accept = true;

  void validate() const;
};

struct SolveReport {
  std::vector<double> losses;  // L(w) before round 1, then after every round
  std::size_t cg_iterations_total = 0;
  double final_gradient_norm = 0.0;  // |2 J^T r| at the returned w
};

struct SolveResult {
  Vec w;
  SolveReport report;
};

class NllsDivergence : public SolverDivergence {
 public:
  NllsDivergence(const std::string& what, std::size_t iteration, SolveReport report)
      : SolverDivergence(what, iteration), report_(std::move(report)) {}
  const SolveReport& report() const noexcept { return report_; }

 private:
  SolveReport report_;
};

using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

struct CgResult {
  Vec x;
  std::size_t iterations = 0;
  double residual_norm = 0.0;
};

/// Conjugate gradient on A x = rhs from x = 0 for a symmetric PSD operator.
/// Stops after max_iters, when |r| <= tol * |rhs|, or when the search
/// direction has zero curvature. Throws SolverDivergence on non-finite values.
CgResult cg_solve(const LinearOperator& apply, std::span<const double> rhs,
                  std::size_t max_iters, double tol);

/// (dr/dw)^T (dr/dw) p via one jvp followed by one vjp.
Vec gn_normal_apply(const ResidualProblem& problem, std::span<const double> w,
                    std::span<const double> p);

/// Squared norm of the residual at w.
double loss(const ResidualProblem& problem, std::span<const double> w);

/// Gradient of |r(w)|^2, i.e. 2 J^T r.
Vec loss_gradient(const ResidualProblem& problem, std::span<const double> w);

SolveResult solve_nlls(const ResidualProblem& problem, std::span<const double> w0,
                       const GnConfig& config);

/// Plain fixed-step gradient descent on |r(w)|^2. Used as the optimizer
/// baseline in ablations; the report's cg_iterations_total counts steps.
SolveResult gradient_descent(const ResidualProblem& problem, std::span<const double> w0,
                             std::size_t iterations, double learning_rate);

}  // namespace dtrack::gn
