#pragma once

// Sparsity + fusion penalty, its epsilon-smoothed majorizer, and the
// curvature matrices used by the MM Newton step.

#include <Eigen/Core>

#include "sfpl/likelihood.hpp"

namespace sfpl {

struct PenaltyConfig {
  double lambda_s = 0.0;
  double lambda_f = 0.0;
  // K x K symmetric nonnegative pair weights; empty means all ones. The
  // diagonal is ignored.
  Eigen::MatrixXd tau;
  double epsilon = 1e-5;

  // Throws ValidationError on negative/non-finite lambdas, epsilon <= 0, or
  // an asymmetric/negative/mis-sized tau.
  void validate(Eigen::Index groups) const;
  double weight(Eigen::Index k, Eigen::Index k2) const {
    return tau.size() == 0 ? 1.0 : tau(k, k2);
  }
};

// lambda_s sum_k |beta_k|_1 + lambda_f sum_{k<k'} tau_kk' |beta_k - beta_k'|_1
double penalty_value(const CoefficientSet& b, const PenaltyConfig& cfg);

// The penalty with every |t| replaced by |t| - eps log(1 + |t|/eps). This is
// the function the surrogate touches and majorizes, and the objective whose
// descent the MM iteration guarantees.
double smoothed_penalty_value(const CoefficientSet& b, const PenaltyConfig& cfg);

// S(B | B_h): quadratic surrogate built at the current iterate B_h.
double surrogate_value(const CoefficientSet& b, const CoefficientSet& current, const PenaltyConfig& cfg);

// Diagonal of V_s: 1 / (|b_qk| + eps), group-major.
Eigen::VectorXd vs_diagonal(const CoefficientSet& current, const PenaltyConfig& cfg);
Eigen::MatrixXd build_vs(const CoefficientSet& current, const PenaltyConfig& cfg);

// Symmetric weighted-Laplacian V_f: for each variable q, entry (qk, qk') is
// -tau_kk' / (|b_qk - b_qk'| + eps) and the diagonal holds the negated row sum.
Eigen::MatrixXd build_vf(const CoefficientSet& current, const PenaltyConfig& cfg);

// l(B) + P(B)
double penalized_objective(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x,
                           const PenaltyConfig& cfg);
// l(B) + smoothed P(B)
double smoothed_objective(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x,
                          const PenaltyConfig& cfg);
// Q(B | B_h) = l(B) + S(B | B_h)
double surrogate_objective(const CoefficientSet& b, const CoefficientSet& current, const RankingDataset& data,
                           const CovariateMatrix& x, const PenaltyConfig& cfg);

}  // namespace sfpl
