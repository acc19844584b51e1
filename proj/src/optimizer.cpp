#include "sfpl/optimizer.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "sfpl/errors.hpp"

namespace sfpl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double group_value_or_inf(std::span<const PartialRanking> rankings, const Eigen::VectorXd& beta,
                          const CovariateMatrix& x) {
  try {
    return group_derivatives(rankings, beta, x, DerivativeOrder::Value).value;
  } catch (const NumericalError&) {
    return kInf;
  }
}

double objective_or_inf(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x,
                        const PenaltyConfig& cfg) {
  try {
    return smoothed_objective(b, data, x, cfg);
  } catch (const NumericalError&) {
    return kInf;
  }
}

Eigen::VectorXd solve_newton_block(Eigen::MatrixXd h, const Eigen::VectorXd& g, const NewtonControls& c) {
  const Eigen::Index p = h.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > c.max_condition) {
    double ridge = c.ridge_scale * h.trace() / static_cast<double>(p);
    if (!(ridge > 0.0)) ridge = c.ridge_scale;
    h.diagonal().array() += ridge;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  Eigen::VectorXd d = ldlt.solve(g);
  if (ldlt.info() != Eigen::Success || !d.allFinite()) throw NumericalError("Newton block solve failed");
  return d;
}

}  // namespace

GroupFit fit_group_mle(std::span<const PartialRanking> rankings, const CovariateMatrix& x,
                       const NewtonControls& controls, const Eigen::VectorXd* start) {
  GroupFit out;
  out.beta = start ? *start : Eigen::VectorXd::Zero(x.cols());
  out.converged = false;
  for (int it = 0; it <= controls.max_iter; ++it) {
    const GroupDerivatives gd = group_derivatives(rankings, out.beta, x, DerivativeOrder::Hessian);
    if (gd.gradient.cwiseAbs().maxCoeff() < controls.gradient_tol) {
      out.converged = true;
      break;
    }
    if (it == controls.max_iter) break;
    const Eigen::VectorXd d = solve_newton_block(gd.hessian, gd.gradient, controls);
    double alpha = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= controls.max_halvings; ++halving) {
      const Eigen::VectorXd cand = out.beta - alpha * d;
      if (group_value_or_inf(rankings, cand, x) < gd.value) {
        out.beta = cand;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) break;
  }
  return out;
}

InitialEstimate initial_estimate(const RankingDataset& data, const CovariateMatrix& x, const NewtonControls& controls) {
  const auto K = static_cast<Eigen::Index>(data.num_groups());
  InitialEstimate out{CoefficientSet(K, x.cols()), true, 0, {}};
  check_shapes(out.coefficients, data, x);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& group = data.group(static_cast<std::size_t>(k));
    GroupFit gf = fit_group_mle(group.rankings, x, controls);
    out.coefficients.set_row(k, gf.beta);
    out.iterations = std::max(out.iterations, gf.iterations);
    if (!gf.converged) {
      out.converged = false;
      out.warnings.push_back("unpenalized MLE for group '" + group.label + "' did not converge after " +
                             std::to_string(gf.iterations) +
                             " Newton iterations (possible separation); using the best iterate");
    }
  }
  return out;
}

StepResult mm_step(const CoefficientSet& current, const RankingDataset& data, const CovariateMatrix& x,
                   const PenaltyConfig& cfg, std::optional<double> current_objective) {
  cfg.validate(current.groups());
  const Eigen::Index K = current.groups();
  const Eigen::Index p = current.vars();
  const Eigen::Index n = K * p;

  LikelihoodDerivatives ld = likelihood_derivatives(current, data, x);
  const double f_current = current_objective ? *current_objective
                                             : ld.value + smoothed_penalty_value(current, cfg);

  Eigen::MatrixXd penalty_curv = Eigen::MatrixXd::Zero(n, n);
  if (cfg.lambda_s != 0.0) penalty_curv.diagonal() += cfg.lambda_s * vs_diagonal(current, cfg);
  if (cfg.lambda_f != 0.0 && K > 1) penalty_curv += cfg.lambda_f * build_vf(current, cfg);

  const Eigen::VectorXd b = current.vectorized();
  const Eigen::VectorXd rhs = ld.gradient + penalty_curv * b;
  Eigen::MatrixXd curv = ld.hessian + penalty_curv;

  Eigen::LLT<Eigen::MatrixXd> llt(curv);
  if (llt.info() != Eigen::Success) {
    double ridge = 1e-8 * curv.trace() / static_cast<double>(n);
    if (!(ridge > 0.0)) ridge = 1e-8;
    bool ok = false;
    for (int attempt = 0; attempt < 4 && !ok; ++attempt, ridge *= 10.0) {
      Eigen::MatrixXd reg = curv;
      reg.diagonal().array() += ridge;
      llt.compute(reg);
      ok = llt.info() == Eigen::Success;
    }
    if (!ok) throw NumericalError("MM curvature matrix is not positive definite after ridge escalation");
  }
  const Eigen::VectorXd d = llt.solve(rhs);
  if (!d.allFinite()) throw NumericalError("MM Newton direction is not finite");

  if (d.cwiseAbs().maxCoeff() == 0.0) return {current, 0.0, f_current};

  double alpha = 1.0;
  for (int halving = 0; halving <= 50; ++halving) {
    CoefficientSet cand = CoefficientSet::from_vectorized(b - alpha * d, K, p);
    const double f = objective_or_inf(cand, data, x, cfg);
    if (f <= f_current - 1e-12) return {std::move(cand), alpha, f};
    alpha *= 0.5;
  }
  return {current, 0.0, f_current};
}

FitResult fit(const RankingDataset& data, const CovariateMatrix& x, const PenaltyConfig& cfg,
              const FitControls& controls, const CoefficientSet* start) {
  FitResult out;
  out.config = cfg;
  cfg.validate(static_cast<Eigen::Index>(data.num_groups()));
  if (!(controls.xi > 0.0)) throw ValidationError("xi must be > 0");
  if (controls.max_iter < 0) throw ValidationError("max_iter must be >= 0");

  CoefficientSet b;
  if (start) {
    check_shapes(*start, data, x);
    b = *start;
  } else {
    InitialEstimate init = initial_estimate(data, x);
    out.initial_converged = init.converged;
    out.warnings = std::move(init.warnings);
    b = std::move(init.coefficients);
  }

  double f = smoothed_objective(b, data, x, cfg);
  out.objective_trace.push_back(f);
  if (f == 0.0) {
    out.converged = true;
  } else {
    for (int h = 0; h < controls.max_iter; ++h) {
      StepResult step = mm_step(b, data, x, cfg, f);
      out.objective_trace.push_back(step.objective);
      out.final_step_size = step.step_size;
      ++out.iterations;
      const double change = std::abs((step.objective - f) / f);
      b = std::move(step.next);
      f = step.objective;
      if (change <= controls.xi) {
        out.converged = true;
        break;
      }
    }
  }
  if (!out.converged) {
    out.warnings.push_back("MM iteration did not converge within " + std::to_string(controls.max_iter) +
                           " iterations");
  }
  out.loglik = neg_log_likelihood(b, data, x);
  out.objective = out.loglik + penalty_value(b, cfg);
  out.coefficients = std::move(b);
  return out;
}

}  // namespace sfpl
