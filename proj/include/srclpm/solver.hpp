#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "srclpm/errors.hpp"

namespace srclpm {

/// Settings for the l1-regularized least-squares solve. Exactly one of
/// lambda / epsilon drives the solve: when epsilon is set the solver runs a
/// decreasing-lambda continuation until the residual bound is met.
struct SolverConfig {
  double lambda = 0.1;            // regularization weight, Lagrangian form
  std::optional<double> epsilon;  // residual bound, constraint form
  int max_iters = 2000;
  double tol = 1e-8;      // relative objective-change threshold
  double kkt_tol = 1e-6;  // stationarity certificate tolerance
};

/// Solution of min 0.5*||y - D*beta||^2 + lambda*||beta||_1 with diagnostics.
struct SparseCode {
  Eigen::VectorXd beta;
  int iterations = 0;
  double objective = 0.0;
  bool converged = false;
};

/// Componentwise sign(v_i) * max(|v_i| - t, 0), the proximal operator of
/// t*||.||_1. Requires t >= 0.
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double t);

/// Merit function 0.5*||y - D*beta||^2 + lambda*||beta||_1, evaluated
/// directly from the residual.
double objective(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& beta, double lambda);

/// Solves the l1 problem by accelerated proximal gradient with adaptive
/// restart. Dictionary columns must be unit-norm within 1e-6. The returned
/// beta satisfies the subgradient stationarity condition within kkt_tol
/// whenever `converged` is set; hitting max_iters first is reported via
/// converged=false, not an error.
SparseCode solve_l1(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                    const SolverConfig& config);

/// Same contract as solve_l1 for each column of Y. The columns share one
/// Gram matrix and step size, so solving them together is much cheaper than
/// separate calls; results agree with per-column solves up to rounding.
std::vector<SparseCode> solve_l1_batch(const Eigen::MatrixXd& D,
                                       const Eigen::MatrixXd& Y,
                                       const SolverConfig& config);

/// Max-norm stationarity residual of beta: how far d_j'(y - D*beta) strays
/// from the l1 subdifferential at each coordinate. Zero at the exact optimum.
double kkt_residual(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& beta, double lambda);

namespace detail {

/// Throws ParameterError on out-of-range solver settings.
void validate_solver_config(const SolverConfig& config);

/// Largest eigenvalue of the PSD matrix G by power iteration (20 iterations,
/// relative tolerance 1e-6), floored by max(diag) which is a valid lower
/// bound.
double spectral_bound(const Eigen::MatrixXd& G);

/// Gram-space batch FISTA: minimizes 0.5*||y_i - D*b||^2 + lambda*||b||_1 for
/// every column i given G = D'D, C = D'Y and y_sq[i] = ||y_i||^2. Does not
/// inspect D, so callers with sub-unit-norm columns (dictionary learning) can
/// use it; `lipschitz` is the step-size bound, usually spectral_bound(G).
/// Warm starts from `init` when provided (k x ncols). When `objective_trace`
/// is given it receives, per column, the accepted objective value after every
/// iteration; the sequence is non-increasing by construction.
std::vector<SparseCode> fista_gram(
    const Eigen::MatrixXd& G, const Eigen::MatrixXd& C,
    const Eigen::VectorXd& y_sq, double lipschitz, double lambda,
    int max_iters, double tol, double kkt_tol,
    const Eigen::MatrixXd* init = nullptr,
    std::vector<std::vector<double>>* objective_trace = nullptr);

}  // namespace detail

}  // namespace srclpm
