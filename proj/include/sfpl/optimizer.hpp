#pragma once

// MM-Newton fitting of the penalized Plackett-Luce objective.

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "sfpl/penalty.hpp"

namespace sfpl {

struct NewtonControls {
  double gradient_tol = 1e-6;
  int max_iter = 100;
  int max_halvings = 50;
  // Blocks whose eigenvalue ratio exceeds this get a ridge of
  // ridge_scale * trace / p for the solve.
  double max_condition = 1e12;
  double ridge_scale = 1e-6;
};

struct InitialEstimate {
  CoefficientSet coefficients;
  bool converged = true;
  int iterations = 0;  // max over groups
  std::vector<std::string> warnings;
};

// Unpenalized MLE per group: damped Newton from beta = 0.
InitialEstimate initial_estimate(const RankingDataset& data, const CovariateMatrix& x, const NewtonControls& controls = {});

// Single-group damped Newton on the negative log likelihood; used by
// initial_estimate and exposed for the pooled comparator.
struct GroupFit {
  Eigen::VectorXd beta;
  bool converged = true;
  int iterations = 0;
};
GroupFit fit_group_mle(std::span<const PartialRanking> rankings, const CovariateMatrix& x,
                       const NewtonControls& controls = {}, const Eigen::VectorXd* start = nullptr);

struct StepResult {
  CoefficientSet next;
  double step_size = 0.0;
  // Smoothed objective at `next`.
  double objective = 0.0;
};

// One MM iteration: solve [H + ls Vs + lf Vf] d = [g + (ls Vs + lf Vf) b] and
// backtrack from step 1 by halving until the smoothed objective drops by
// more than 1e-12 (at most 50 halvings; otherwise the iterate is returned
// unchanged with step size 0). Throws NumericalError when the curvature
// matrix cannot be factored even after ridge escalation.
StepResult mm_step(const CoefficientSet& current, const RankingDataset& data, const CovariateMatrix& x,
                   const PenaltyConfig& cfg, std::optional<double> current_objective = std::nullopt);

struct FitControls {
  double xi = 1e-8;
  int max_iter = 500;
};

struct FitResult {
  CoefficientSet coefficients;
  // Smoothed penalized objective per iterate, starting with the initial one.
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  double final_step_size = 0.0;
  PenaltyConfig config;
  double loglik = 0.0;     // unpenalized negative log likelihood at the estimate
  double objective = 0.0;  // exact (non-smoothed) penalized objective at the estimate
  bool initial_converged = true;
  std::vector<std::string> warnings;
};

// Iterates mm_step until |F_{h+1} - F_h| / |F_h| <= xi or max_iter. Starts
// from `start` when given, otherwise from initial_estimate().
FitResult fit(const RankingDataset& data, const CovariateMatrix& x, const PenaltyConfig& cfg,
              const FitControls& controls = {}, const CoefficientSet* start = nullptr);

}  // namespace sfpl
