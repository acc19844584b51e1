#include "sfpl/penalty.hpp"

#include <cmath>

#include "sfpl/errors.hpp"

namespace sfpl {
namespace {

void check_pair(const CoefficientSet& a, const CoefficientSet& b) {
  if (a.groups() != b.groups() || a.vars() != b.vars()) {
    throw ValidationError("coefficient sets have different shapes");
  }
}

inline double smoothed_abs(double t, double eps) {
  const double a = std::abs(t);
  return a - eps * std::log1p(a / eps);
}

// Majorizer of smoothed_abs(t) touching at t = t0.
inline double surrogate_term(double t, double t0, double eps) {
  const double a0 = std::abs(t0);
  return smoothed_abs(t0, eps) + (t * t - t0 * t0) / (2.0 * (a0 + eps));
}

template <class Term>
double penalty_sum(const CoefficientSet& b, const PenaltyConfig& cfg, Term term) {
  cfg.validate(b.groups());
  const Eigen::Index K = b.groups();
  const Eigen::Index p = b.vars();
  double sparse = 0.0;
  double fused = 0.0;
  if (cfg.lambda_s != 0.0) {
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index q = 0; q < p; ++q) sparse += term(k, k, q, /*diff=*/false);
    }
  }
  if (cfg.lambda_f != 0.0) {
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index k2 = k + 1; k2 < K; ++k2) {
        const double w = cfg.weight(k, k2);
        if (w == 0.0) continue;
        double acc = 0.0;
        for (Eigen::Index q = 0; q < p; ++q) acc += term(k, k2, q, /*diff=*/true);
        fused += w * acc;
      }
    }
  }
  return cfg.lambda_s * sparse + cfg.lambda_f * fused;
}

}  // namespace

void PenaltyConfig::validate(Eigen::Index groups) const {
  if (!std::isfinite(lambda_s) || lambda_s < 0.0) throw ValidationError("lambda_s must be finite and >= 0");
  if (!std::isfinite(lambda_f) || lambda_f < 0.0) throw ValidationError("lambda_f must be finite and >= 0");
  if (!std::isfinite(epsilon) || epsilon <= 0.0) throw ValidationError("epsilon must be finite and > 0");
  if (tau.size() == 0) return;
  if (tau.rows() != groups || tau.cols() != groups) {
    throw ValidationError("tau must be " + std::to_string(groups) + " x " + std::to_string(groups));
  }
  for (Eigen::Index a = 0; a < groups; ++a) {
    for (Eigen::Index b = 0; b < groups; ++b) {
      if (!std::isfinite(tau(a, b)) || tau(a, b) < 0.0) throw ValidationError("tau entries must be finite and >= 0");
      if (a != b && tau(a, b) != tau(b, a)) throw ValidationError("tau must be symmetric");
    }
  }
}

double penalty_value(const CoefficientSet& b, const PenaltyConfig& cfg) {
  const auto& m = b.matrix();
  return penalty_sum(b, cfg, [&](Eigen::Index k, Eigen::Index k2, Eigen::Index q, bool diff) {
    return diff ? std::abs(m(k, q) - m(k2, q)) : std::abs(m(k, q));
  });
}

double smoothed_penalty_value(const CoefficientSet& b, const PenaltyConfig& cfg) {
  const auto& m = b.matrix();
  const double eps = cfg.epsilon;
  return penalty_sum(b, cfg, [&](Eigen::Index k, Eigen::Index k2, Eigen::Index q, bool diff) {
    return smoothed_abs(diff ? m(k, q) - m(k2, q) : m(k, q), eps);
  });
}

double surrogate_value(const CoefficientSet& b, const CoefficientSet& current, const PenaltyConfig& cfg) {
  check_pair(b, current);
  const auto& m = b.matrix();
  const auto& h = current.matrix();
  const double eps = cfg.epsilon;
  return penalty_sum(b, cfg, [&](Eigen::Index k, Eigen::Index k2, Eigen::Index q, bool diff) {
    return diff ? surrogate_term(m(k, q) - m(k2, q), h(k, q) - h(k2, q), eps)
                : surrogate_term(m(k, q), h(k, q), eps);
  });
}

Eigen::VectorXd vs_diagonal(const CoefficientSet& current, const PenaltyConfig& cfg) {
  const Eigen::VectorXd v = current.vectorized();
  return (1.0 / (v.array().abs() + cfg.epsilon)).matrix();
}

Eigen::MatrixXd build_vs(const CoefficientSet& current, const PenaltyConfig& cfg) {
  return vs_diagonal(current, cfg).asDiagonal();
}

Eigen::MatrixXd build_vf(const CoefficientSet& current, const PenaltyConfig& cfg) {
  cfg.validate(current.groups());
  const Eigen::Index K = current.groups();
  const Eigen::Index p = current.vars();
  Eigen::MatrixXd vf = Eigen::MatrixXd::Zero(K * p, K * p);
  const auto& h = current.matrix();
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index k2 = k + 1; k2 < K; ++k2) {
      const double w = cfg.weight(k, k2);
      if (w == 0.0) continue;
      for (Eigen::Index q = 0; q < p; ++q) {
        const double c = w / (std::abs(h(k, q) - h(k2, q)) + cfg.epsilon);
        const Eigen::Index i = k * p + q;
        const Eigen::Index j = k2 * p + q;
        vf(i, i) += c;
        vf(j, j) += c;
        vf(i, j) -= c;
        vf(j, i) -= c;
      }
    }
  }
  return vf;
}

double penalized_objective(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x,
                           const PenaltyConfig& cfg) {
  return neg_log_likelihood(b, data, x) + penalty_value(b, cfg);
}

double smoothed_objective(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x,
                          const PenaltyConfig& cfg) {
  return neg_log_likelihood(b, data, x) + smoothed_penalty_value(b, cfg);
}

double surrogate_objective(const CoefficientSet& b, const CoefficientSet& current, const RankingDataset& data,
                           const CovariateMatrix& x, const PenaltyConfig& cfg) {
  return neg_log_likelihood(b, data, x) + surrogate_value(b, current, cfg);
}

}  // namespace sfpl
