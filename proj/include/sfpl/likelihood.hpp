#pragma once

// Plackett-Luce ranking probabilities with object covariates, the
// multi-group negative log likelihood, and its analytic derivatives.
//
// Worth of object j in group k is exp(x_j . beta_k). At stage j of a ranking
// the remaining set is exactly the not-yet-placed objects of that ranking;
// unranked catalog objects never compete.

#include <Eigen/Core>
#include <span>

#include "sfpl/data_model.hpp"

namespace sfpl {

// K x p coefficient matrix; row k is the coefficient vector of group k.
// Vectorized form is group-major: index k * p + q.
class CoefficientSet {
 public:
  CoefficientSet() = default;
  CoefficientSet(Eigen::Index groups, Eigen::Index vars);
  explicit CoefficientSet(Eigen::MatrixXd values);

  Eigen::Index groups() const { return values_.rows(); }
  Eigen::Index vars() const { return values_.cols(); }
  const Eigen::MatrixXd& matrix() const { return values_; }
  double operator()(Eigen::Index k, Eigen::Index q) const { return values_(k, q); }
  double& operator()(Eigen::Index k, Eigen::Index q) { return values_(k, q); }
  Eigen::VectorXd row(Eigen::Index k) const { return values_.row(k).transpose(); }
  void set_row(Eigen::Index k, const Eigen::VectorXd& beta) { values_.row(k) = beta.transpose(); }

  Eigen::VectorXd vectorized() const;
  static CoefficientSet from_vectorized(const Eigen::VectorXd& v, Eigen::Index groups, Eigen::Index vars);

  friend bool operator==(const CoefficientSet& a, const CoefficientSet& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_;
  }

 private:
  Eigen::MatrixXd values_;
};

// log sum_i exp(v_i), shifted by max(v) before exponentiation.
double log_sum_exp(std::span<const double> v);

// log P(ordering | beta) via stage-wise stabilized sums.
double log_ranking_probability(std::span<const ObjectIndex> ordering, const Eigen::VectorXd& beta,
                               const CovariateMatrix& x);
double ranking_probability(std::span<const ObjectIndex> ordering, const Eigen::VectorXd& beta,
                           const CovariateMatrix& x);

enum class DerivativeOrder { Value, Gradient, Hessian };

struct GroupDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;  // p
  Eigen::MatrixXd hessian;   // p x p
};

// Negative log likelihood of one group's rankings at beta, with optional
// gradient and Hessian. Derivatives are accumulated in object space (an
// M-vector and an M x M matrix) and projected through X with the dense
// kernels; rankers are processed in index order.
GroupDerivatives group_derivatives(std::span<const PartialRanking> rankings, const Eigen::VectorXd& beta,
                                   const CovariateMatrix& x, DerivativeOrder order);

// Throws ValidationError when B, data and X disagree on K, M or p.
void check_shapes(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x);

double neg_log_likelihood(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x);
// K x p
Eigen::MatrixXd gradient(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x);
// Kp x Kp block diagonal
Eigen::MatrixXd hessian(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x);

struct LikelihoodDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;  // Kp, group-major
  Eigen::MatrixXd hessian;   // Kp x Kp
};

LikelihoodDerivatives likelihood_derivatives(const CoefficientSet& b, const RankingDataset& data,
                                             const CovariateMatrix& x);

}  // namespace sfpl
