#include "srclpm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "srclpm/rng.hpp"

namespace srclpm {

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double t) {
  if (t < 0.0) {
    throw ParameterError("soft_threshold: threshold must be >= 0");
  }
  return v.unaryExpr([t](double x) {
    const double shrunk = std::abs(x) - t;
    return shrunk > 0.0 ? (x > 0.0 ? shrunk : -shrunk) : 0.0;
  });
}

double objective(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& beta, double lambda) {
  if (D.rows() != y.size() || D.cols() != beta.size()) {
    throw ShapeError("objective: dictionary " + std::to_string(D.rows()) + "x" +
                     std::to_string(D.cols()) + " incompatible with y(" +
                     std::to_string(y.size()) + "), beta(" +
                     std::to_string(beta.size()) + ")");
  }
  if (lambda < 0.0) {
    throw ParameterError("objective: lambda must be >= 0");
  }
  const double resid = (y - D * beta).squaredNorm();
  return 0.5 * resid + lambda * beta.lpNorm<1>();
}

double kkt_residual(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& beta, double lambda) {
  if (D.rows() != y.size() || D.cols() != beta.size()) {
    throw ShapeError("kkt_residual: dimension mismatch");
  }
  const Eigen::VectorXd g = D.transpose() * (y - D * beta);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double r = beta[j] == 0.0
                         ? std::max(std::abs(g[j]) - lambda, 0.0)
                         : std::abs(g[j] - lambda * (beta[j] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, r);
  }
  return worst;
}

namespace detail {

double spectral_bound(const Eigen::MatrixXd& G) {
  const Eigen::Index k = G.rows();
  if (k == 0) return 0.0;
  SplitMix64 rng(0x9E3779B97F4A7C15ULL);
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v[i] = 0.5 + rng.next_double();
  v /= v.norm();

  double est = 0.0;
  double prev = -1.0;
  for (int it = 0; it < 20; ++it) {
    const Eigen::VectorXd w = G * v;
    const double wn = w.norm();
    if (wn < 1e-300) {
      est = 0.0;
      break;
    }
    est = v.dot(w);
    v = w / wn;
    if (std::abs(est - prev) <= 1e-6 * std::max(std::abs(est), 1e-30)) break;
    prev = est;
  }
  return std::max({est, G.diagonal().maxCoeff(), 1e-12});
}

namespace {

// Gram-space merit value 0.5*||y - D*b||^2 + lambda*||b||_1 given gb = G*b.
template <class VA, class VB, class VC>
inline double gram_objective(const Eigen::MatrixBase<VA>& b,
                             const Eigen::MatrixBase<VB>& gb,
                             const Eigen::MatrixBase<VC>& c, double y_sq,
                             double lambda) {
  const double quad = y_sq - 2.0 * c.dot(b) + b.dot(gb);
  return 0.5 * std::max(quad, 0.0) + lambda * b.template lpNorm<1>();
}

// Stationarity residual from the Gram form: g = c - G*b = D'(y - D*b).
template <class VA, class VB, class VC>
inline double gram_kkt(const Eigen::MatrixBase<VA>& b,
                       const Eigen::MatrixBase<VB>& gb,
                       const Eigen::MatrixBase<VC>& c, double lambda) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double g = c[j] - gb[j];
    const double r = b[j] == 0.0
                         ? std::max(std::abs(g) - lambda, 0.0)
                         : std::abs(g - lambda * (b[j] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, r);
  }
  return worst;
}

}  // namespace

std::vector<SparseCode> fista_gram(
    const Eigen::MatrixXd& G, const Eigen::MatrixXd& C,
    const Eigen::VectorXd& y_sq, double lipschitz, double lambda,
    int max_iters, double tol, double kkt_tol, const Eigen::MatrixXd* init,
    std::vector<std::vector<double>>* objective_trace) {
  const Eigen::Index k = G.rows();
  const Eigen::Index n = C.cols();
  if (G.cols() != k || C.rows() != k || y_sq.size() != n) {
    throw ShapeError("fista_gram: inconsistent G/C/y_sq dimensions");
  }
  if (max_iters < 1) {
    throw ParameterError("fista_gram: max_iters must be >= 1");
  }
  if (n == 0) return {};

  // Per-column solver state. The extrapolated point's product G*z is formed
  // from stored G*beta products, so each iteration needs a single G-multiply
  // per column (plus one more for columns that trigger a restart).
  Eigen::MatrixXd beta = init ? *init : Eigen::MatrixXd::Zero(k, n);
  Eigen::MatrixXd beta_prev = beta;
  Eigen::MatrixXd g_beta(k, n);
  if (init) {
    g_beta.noalias() = G * beta;
  } else {
    g_beta.setZero();
  }
  Eigen::MatrixXd g_beta_prev = g_beta;

  Eigen::VectorXd t_momentum = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd step_bound = Eigen::VectorXd::Constant(n, lipschitz);
  Eigen::VectorXd obj(n);
  std::vector<int> iters(n, 0);
  std::vector<char> tol_met(n, 0);
  std::vector<bool> frozen(n, false);
  std::vector<bool> conv(n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    obj[i] = gram_objective(beta.col(i), g_beta.col(i), C.col(i), y_sq[i], lambda);
  }

  std::vector<Eigen::Index> active(n);
  for (Eigen::Index i = 0; i < n; ++i) active[i] = i;
  if (objective_trace) objective_trace->assign(n, {});

  // Stop a column when the objective change passed `tol` and the certificate
  // is comfortably inside kkt_tol (half, so the reported certificate holds
  // with margin).
  const double kkt_target = 0.5 * kkt_tol;

  Eigen::MatrixXd cand(k, n), g_cand(k, n);

  for (int iter = 1; iter <= max_iters && !active.empty(); ++iter) {
    // Accelerated candidates for all active columns.
    for (std::size_t a = 0; a < active.size(); ++a) {
      const Eigen::Index i = active[a];
      const double t_old = t_momentum[i];
      const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_old * t_old));
      const double omega = (t_old - 1.0) / t_new;
      t_momentum[i] = t_new;
      const double s = 1.0 / step_bound[i];
      const double thresh = s * lambda;
      for (Eigen::Index j = 0; j < k; ++j) {
        const double zj = beta(j, i) + omega * (beta(j, i) - beta_prev(j, i));
        const double gzj =
            g_beta(j, i) + omega * (g_beta(j, i) - g_beta_prev(j, i));
        const double w = zj - s * (gzj - C(j, i));
        const double sh = std::abs(w) - thresh;
        cand(j, a) = sh > 0.0 ? (w > 0.0 ? sh : -sh) : 0.0;
      }
    }
    g_cand.leftCols(active.size()).noalias() = G * cand.leftCols(active.size());

    std::vector<Eigen::Index> restart;
    std::vector<std::size_t> restart_slot;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const Eigen::Index i = active[a];
      const double cand_obj =
          gram_objective(cand.col(a), g_cand.col(a), C.col(i), y_sq[i], lambda);
      if (cand_obj <= obj[i]) {
        beta_prev.col(i) = beta.col(i);
        g_beta_prev.col(i) = g_beta.col(i);
        beta.col(i) = cand.col(a);
        g_beta.col(i) = g_cand.col(a);
        tol_met[i] = std::abs(obj[i] - cand_obj) <= tol * (1.0 + std::abs(cand_obj));
        obj[i] = cand_obj;
      } else {
        restart_slot.push_back(a);
        restart.push_back(i);
      }
    }

    // Monotone guard: a plain proximal step from the current iterate cannot
    // increase the objective unless the step bound is too low, in which case
    // grow it and retry next sweep.
    if (!restart.empty()) {
      for (std::size_t a = 0; a < restart.size(); ++a) {
        const Eigen::Index i = restart[a];
        const double s = 1.0 / step_bound[i];
        const double thresh = s * lambda;
        for (Eigen::Index j = 0; j < k; ++j) {
          const double w = beta(j, i) - s * (g_beta(j, i) - C(j, i));
          const double sh = std::abs(w) - thresh;
          cand(j, restart_slot[a]) = sh > 0.0 ? (w > 0.0 ? sh : -sh) : 0.0;
        }
      }
      for (std::size_t a = 0; a < restart.size(); ++a) {
        g_cand.col(restart_slot[a]).noalias() = G * cand.col(restart_slot[a]);
      }
      for (std::size_t a = 0; a < restart.size(); ++a) {
        const Eigen::Index i = restart[a];
        const std::size_t slot = restart_slot[a];
        t_momentum[i] = 1.0;
        const double cand_obj = gram_objective(cand.col(slot), g_cand.col(slot),
                                               C.col(i), y_sq[i], lambda);
        if (cand_obj <= obj[i]) {
          beta_prev.col(i) = beta.col(i);
          g_beta_prev.col(i) = g_beta.col(i);
          beta.col(i) = cand.col(slot);
          g_beta.col(i) = g_cand.col(slot);
          tol_met[i] = std::abs(obj[i] - cand_obj) <= tol * (1.0 + std::abs(cand_obj));
          obj[i] = cand_obj;
        } else {
          step_bound[i] *= 1.5;
          tol_met[i] = 1;  // objective unchanged this sweep
        }
      }
    }

    std::vector<Eigen::Index> still_active;
    for (const Eigen::Index i : active) {
      ++iters[i];
      if (objective_trace) (*objective_trace)[i].push_back(obj[i]);
      if (tol_met[i] &&
          gram_kkt(beta.col(i), g_beta.col(i), C.col(i), lambda) <= kkt_target) {
        frozen[i] = true;
        conv[i] = true;
      } else if (iter == max_iters) {
        frozen[i] = true;
      } else {
        still_active.push_back(i);
      }
    }
    active.swap(still_active);
  }

  std::vector<SparseCode> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i].beta = beta.col(i);
    out[i].iterations = iters[i];
    out[i].objective = obj[i];
    out[i].converged = conv[i];
  }
  return out;
}

void validate_solver_config(const SolverConfig& cfg) {
  if (cfg.max_iters < 1) {
    throw ParameterError("solver: max_iters must be >= 1");
  }
  if (cfg.tol < 0.0) {
    throw ParameterError("solver: tol must be >= 0");
  }
  if (cfg.lambda < 0.0) {
    throw ParameterError("solver: lambda must be >= 0");
  }
  if (cfg.kkt_tol < 0.0) {
    throw ParameterError("solver: kkt_tol must be >= 0");
  }
  if (cfg.epsilon && *cfg.epsilon < 0.0) {
    throw ParameterError("solver: epsilon must be >= 0");
  }
}

}  // namespace detail

namespace {

void check_unit_columns(const Eigen::MatrixXd& D) {
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    const double norm = D.col(j).norm();
    if (std::abs(norm - 1.0) > 1e-6) {
      throw ContractError("solver: dictionary column " + std::to_string(j) +
                          " has norm " + std::to_string(norm) +
                          ", expected 1 within 1e-6");
    }
  }
}

// Decreasing-lambda continuation for the constraint form ||y - D*beta|| <= eps.
// Writes the lambda of the last stage to lambda_used.
SparseCode solve_epsilon(const Eigen::MatrixXd& G, const Eigen::MatrixXd& c,
                         double y_sq, const SolverConfig& cfg, double lipschitz,
                         double& lambda_used) {
  const double eps = *cfg.epsilon;
  const double lam_max = c.lpNorm<Eigen::Infinity>();
  SparseCode code;
  code.beta = Eigen::VectorXd::Zero(G.rows());
  code.objective = 0.5 * y_sq;
  code.converged = std::sqrt(y_sq) <= eps;
  lambda_used = lam_max;
  if (code.converged || lam_max == 0.0) {
    // Either beta = 0 already meets the bound (and has minimal l1 norm), or
    // y is orthogonal to every column and no beta improves the residual.
    return code;
  }

  const double floor = std::max(1e-8 * lam_max, 1e-300);
  double lam = 0.5 * lam_max;
  Eigen::MatrixXd warm = Eigen::MatrixXd::Zero(G.rows(), 1);
  int total_iters = 0;
  while (true) {
    auto stage = detail::fista_gram(G, c, Eigen::VectorXd::Constant(1, y_sq),
                                    lipschitz, lam, cfg.max_iters, cfg.tol,
                                    cfg.kkt_tol, &warm);
    total_iters += stage[0].iterations;
    warm.col(0) = stage[0].beta;
    code = std::move(stage[0]);
    lambda_used = lam;
    const double quad =
        y_sq - 2.0 * c.col(0).dot(code.beta) + code.beta.dot(G * code.beta);
    const double resid = std::sqrt(std::max(quad, 0.0));
    if (resid <= eps) break;
    if (lam <= floor) {
      code.converged = false;
      break;
    }
    lam = std::max(0.5 * lam, floor);
  }
  code.iterations = total_iters;
  return code;
}

}  // namespace

SparseCode solve_l1(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                    const SolverConfig& config) {
  detail::validate_solver_config(config);
  if (D.rows() != y.size()) {
    throw ShapeError("solve_l1: dictionary rows " + std::to_string(D.rows()) +
                     " != y length " + std::to_string(y.size()));
  }
  check_unit_columns(D);

  Eigen::MatrixXd G(D.cols(), D.cols());
  G.noalias() = D.transpose() * D;
  Eigen::MatrixXd c(D.cols(), 1);
  c.noalias() = D.transpose() * y;
  const double y_sq = y.squaredNorm();
  const double lipschitz = detail::spectral_bound(G);

  SparseCode code;
  if (config.epsilon) {
    double lambda_used = 0.0;
    code = solve_epsilon(G, c, y_sq, config, lipschitz, lambda_used);
    code.objective = objective(D, y, code.beta, lambda_used);
  } else {
    code = std::move(detail::fista_gram(G, c, Eigen::VectorXd::Constant(1, y_sq),
                                        lipschitz, config.lambda,
                                        config.max_iters, config.tol,
                                        config.kkt_tol)[0]);
    code.objective = objective(D, y, code.beta, config.lambda);
  }
  return code;
}

std::vector<SparseCode> solve_l1_batch(const Eigen::MatrixXd& D,
                                       const Eigen::MatrixXd& Y,
                                       const SolverConfig& config) {
  detail::validate_solver_config(config);
  if (config.epsilon) {
    throw ParameterError("solve_l1_batch: epsilon mode is single-signal only");
  }
  if (D.rows() != Y.rows()) {
    throw ShapeError("solve_l1_batch: dictionary rows " +
                     std::to_string(D.rows()) + " != signal rows " +
                     std::to_string(Y.rows()));
  }
  check_unit_columns(D);

  Eigen::MatrixXd G(D.cols(), D.cols());
  G.noalias() = D.transpose() * D;
  Eigen::MatrixXd C(D.cols(), Y.cols());
  C.noalias() = D.transpose() * Y;
  const Eigen::VectorXd y_sq = Y.colwise().squaredNorm();
  const double lipschitz = detail::spectral_bound(G);

  auto codes = detail::fista_gram(G, C, y_sq, lipschitz, config.lambda,
                                  config.max_iters, config.tol, config.kkt_tol);
  for (Eigen::Index i = 0; i < Y.cols(); ++i) {
    codes[i].objective = objective(D, Y.col(i), codes[i].beta, config.lambda);
  }
  return codes;
}

}  // namespace srclpm
