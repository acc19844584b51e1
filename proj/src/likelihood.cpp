#include "sfpl/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sfpl/errors.hpp"
#include "sfpl/kernels.hpp"

namespace sfpl {
namespace {

inline double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log1p(std::exp(lo - hi));
}

// Object scores s = X beta for the whole catalog.
void compute_scores(const CovariateMatrix& x, const Eigen::VectorXd& beta, Eigen::VectorXd& scores) {
  scores.resize(x.rows());
  kernels::gemv(x.values().data(), static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols()),
                beta.data(), scores.data());
}

// Per-ranking stage quantities. lse[j] = log sum_{l >= j} exp(s_l) is built
// from the tail, so every exponent is relative to a running maximum.
struct StageWork {
  std::vector<double> s;
  std::vector<double> lse;

  double load(std::span<const ObjectIndex> ord, const Eigen::VectorXd& scores) {
    const std::size_t m = ord.size();
    s.resize(m);
    lse.resize(m);
    for (std::size_t j = 0; j < m; ++j) s[j] = scores(ord[j]);
    lse[m - 1] = s[m - 1];
    for (std::size_t j = m - 1; j-- > 0;) lse[j] = log_add_exp(s[j], lse[j + 1]);
    double nll = 0.0;
    for (std::size_t j = 0; j < m; ++j) nll += lse[j] - s[j];
    return nll;
  }
};

}  // namespace

CoefficientSet::CoefficientSet(Eigen::Index groups, Eigen::Index vars)
    : values_(Eigen::MatrixXd::Zero(groups, vars)) {}

CoefficientSet::CoefficientSet(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (!values_.allFinite()) throw ValidationError("coefficient matrix contains non-finite values");
}

Eigen::VectorXd CoefficientSet::vectorized() const {
  Eigen::VectorXd v(values_.size());
  const Eigen::Index p = vars();
  for (Eigen::Index k = 0; k < groups(); ++k) {
    for (Eigen::Index q = 0; q < p; ++q) v(k * p + q) = values_(k, q);
  }
  return v;
}

CoefficientSet CoefficientSet::from_vectorized(const Eigen::VectorXd& v, Eigen::Index groups, Eigen::Index vars) {
  if (v.size() != groups * vars) throw ValidationError("vectorized coefficient length mismatch");
  Eigen::MatrixXd m(groups, vars);
  for (Eigen::Index k = 0; k < groups; ++k) {
    for (Eigen::Index q = 0; q < vars; ++q) m(k, q) = v(k * vars + q);
  }
  return CoefficientSet(std::move(m));
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double e : v) acc += std::exp(e - mx);
  return mx + std::log(acc);
}

double log_ranking_probability(std::span<const ObjectIndex> ordering, const Eigen::VectorXd& beta,
                               const CovariateMatrix& x) {
  if (ordering.empty()) throw ValidationError("empty ranking");
  if (beta.size() != x.cols()) throw ValidationError("coefficient length does not match covariate columns");
  std::vector<double> scores(ordering.size());
  for (std::size_t j = 0; j < ordering.size(); ++j) {
    const ObjectIndex o = ordering[j];
    if (o < 0 || o >= x.rows()) throw ValidationError("ranking references an object outside X");
    scores[j] = x.values().row(o).dot(beta);
  }
  double logp = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    logp += scores[j] - log_sum_exp(std::span<const double>(scores).subspan(j));
  }
  if (!std::isfinite(logp)) throw NumericalError("non-finite ranking log probability");
  return logp;
}

double ranking_probability(std::span<const ObjectIndex> ordering, const Eigen::VectorXd& beta,
                           const CovariateMatrix& x) {
  return std::exp(log_ranking_probability(ordering, beta, x));
}

GroupDerivatives group_derivatives(std::span<const PartialRanking> rankings, const Eigen::VectorXd& beta,
                                   const CovariateMatrix& x, DerivativeOrder order) {
  const Eigen::Index m_all = x.rows();
  const Eigen::Index p = x.cols();
  GroupDerivatives out;
  Eigen::VectorXd scores;
  compute_scores(x, beta, scores);

  const bool want_grad = order != DerivativeOrder::Value;
  const bool want_hess = order == DerivativeOrder::Hessian;
  Eigen::VectorXd gobj;
  Eigen::MatrixXd aobj;
  if (want_grad) gobj = Eigen::VectorXd::Zero(m_all);
  if (want_hess) aobj = Eigen::MatrixXd::Zero(m_all, m_all);

  StageWork w;
  std::vector<double> first;   // log sum_{j<=l} exp(-lse_j)
  std::vector<double> second;  // log sum_{j<=l} exp(-2 lse_j)
  for (const PartialRanking& r : rankings) {
    const auto ord = r.ordering();
    const std::size_t m = ord.size();
    out.value += w.load(ord, scores);
    if (!want_grad) continue;

    first.resize(m);
    second.resize(m);
    first[0] = -w.lse[0];
    second[0] = -2.0 * w.lse[0];
    for (std::size_t l = 1; l < m; ++l) {
      first[l] = log_add_exp(first[l - 1], -w.lse[l]);
      second[l] = log_add_exp(second[l - 1], -2.0 * w.lse[l]);
    }
    for (std::size_t l = 0; l < m; ++l) {
      // sum over stages j <= l of the choice probability of object l
      const double pl = std::exp(w.s[l] + first[l]);
      gobj(ord[l]) += pl - 1.0;
      if (want_hess) {
        aobj(ord[l], ord[l]) += pl - std::exp(2.0 * w.s[l] + second[l]);
        for (std::size_t l2 = l + 1; l2 < m; ++l2) {
          const double c = std::exp(w.s[l] + w.s[l2] + second[l]);
          aobj(ord[l], ord[l2]) -= c;
          aobj(ord[l2], ord[l]) -= c;
        }
      }
    }
  }
  if (!std::isfinite(out.value)) throw NumericalError("non-finite negative log likelihood");

  const auto rows = static_cast<std::size_t>(m_all);
  const auto cols = static_cast<std::size_t>(p);
  if (want_grad) {
    out.gradient.resize(p);
    kernels::gemv_t(x.values().data(), rows, cols, gobj.data(), out.gradient.data());
  }
  if (want_hess) {
    out.hessian.resize(p, p);
    std::vector<double> scratch(rows);
    kernels::sandwich(x.values().data(), rows, cols, aobj.data(), out.hessian.data(), scratch.data());
  }
  return out;
}

void check_shapes(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x) {
  if (b.groups() != static_cast<Eigen::Index>(data.num_groups())) {
    throw ValidationError("coefficient rows (" + std::to_string(b.groups()) + ") do not match group count (" +
                          std::to_string(data.num_groups()) + ")");
  }
  if (b.vars() != x.cols()) {
    throw ValidationError("coefficient columns (" + std::to_string(b.vars()) + ") do not match covariate count (" +
                          std::to_string(x.cols()) + ")");
  }
  if (x.rows() != static_cast<Eigen::Index>(data.catalog_size())) {
    throw ValidationError("covariate rows (" + std::to_string(x.rows()) + ") do not match catalog size (" +
                          std::to_string(data.catalog_size()) + ")");
  }
}

double neg_log_likelihood(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x) {
  check_shapes(b, data, x);
  double total = 0.0;
  for (std::size_t k = 0; k < data.num_groups(); ++k) {
    total += group_derivatives(data.group(k).rankings, b.row(static_cast<Eigen::Index>(k)), x,
                               DerivativeOrder::Value)
                 .value;
  }
  return total;
}

Eigen::MatrixXd gradient(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x) {
  check_shapes(b, data, x);
  Eigen::MatrixXd g(b.groups(), b.vars());
  for (std::size_t k = 0; k < data.num_groups(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    g.row(kk) = group_derivatives(data.group(k).rankings, b.row(kk), x, DerivativeOrder::Gradient)
                    .gradient.transpose();
  }
  return g;
}

Eigen::MatrixXd hessian(const CoefficientSet& b, const RankingDataset& data, const CovariateMatrix& x) {
  return likelihood_derivatives(b, data, x).hessian;
}

LikelihoodDerivatives likelihood_derivatives(const CoefficientSet& b, const RankingDataset& data,
                                             const CovariateMatrix& x) {
  check_shapes(b, data, x);
  const Eigen::Index p = b.vars();
  const Eigen::Index kp = b.groups() * p;
  LikelihoodDerivatives out;
  out.gradient.resize(kp);
  out.hessian = Eigen::MatrixXd::Zero(kp, kp);
  for (std::size_t k = 0; k < data.num_groups(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    GroupDerivatives gd = group_derivatives(data.group(k).rankings, b.row(kk), x, DerivativeOrder::Hessian);
    out.value += gd.value;
    out.gradient.segment(kk * p, p) = gd.gradient;
    out.hessian.block(kk * p, kk * p, p, p) = gd.hessian;
  }
  return out;
}

}  // namespace sfpl
