#include "sfpl/selection.hpp"

#include <cmath>

#include "sfpl/errors.hpp"
#include "sfpl/parallel.hpp"

namespace sfpl {
namespace {

constexpr int kMaxDoublingExponent = 60;

double max_pairwise_difference(const CoefficientSet& b) {
  double out = 0.0;
  for (Eigen::Index k = 0; k < b.groups(); ++k) {
    for (Eigen::Index k2 = k + 1; k2 < b.groups(); ++k2) {
      out = std::max(out, (b.matrix().row(k) - b.matrix().row(k2)).cwiseAbs().maxCoeff());
    }
  }
  return out;
}

template <class Done>
double find_max_lambda(const RankingDataset& data, const CovariateMatrix& x, const CoefficientSet& mle,
                       const GridOptions& options, bool sparsity_axis, Done done) {
  CoefficientSet warm = mle;
  double lambda = 1.0;
  for (int e = 0; e <= kMaxDoublingExponent; ++e, lambda *= 2.0) {
    PenaltyConfig cfg;
    cfg.epsilon = options.epsilon;
    cfg.tau = options.tau;
    (sparsity_axis ? cfg.lambda_s : cfg.lambda_f) = lambda;
    FitResult f = fit(data, x, cfg, options.controls, &warm);
    if (done(f.coefficients)) return lambda;
    warm = std::move(f.coefficients);
  }
  throw NumericalError(std::string("no ") + (sparsity_axis ? "lambda_s" : "lambda_f") +
                       " up to 2^60 achieves the grid endpoint; the data look pathological");
}

}  // namespace

void PenaltyGrid::validate() const {
  for (const auto* axis : {&lambda_s_values, &lambda_f_values}) {
    if (axis->empty() || (*axis)[0] != 0.0) throw ValidationError("penalty grid axes must start at 0");
    for (std::size_t i = 1; i < axis->size(); ++i) {
      if (!std::isfinite((*axis)[i]) || !((*axis)[i] > (*axis)[i - 1])) {
        throw ValidationError("penalty grid axes must be strictly increasing and finite");
      }
    }
  }
}

std::vector<double> grid_axis(double max_value, int n, double min_ratio) {
  std::vector<double> axis{0.0};
  if (!(max_value > 0.0) || n <= 1) return axis;
  const int interior = n - 1;
  if (interior == 1) {
    axis.push_back(max_value);
    return axis;
  }
  const double lo = std::log(max_value / min_ratio);
  const double hi = std::log(max_value);
  for (int i = 0; i < interior; ++i) {
    axis.push_back(i == interior - 1 ? max_value : std::exp(lo + (hi - lo) * i / (interior - 1)));
  }
  return axis;
}

PenaltyGrid build_grid(const RankingDataset& data, const CovariateMatrix& x, const GridOptions& options,
                       const CoefficientSet* mle) {
  if (options.n_s < 1 || options.n_f < 1) throw ValidationError("grid sizes must be >= 1");
  CoefficientSet start;
  if (mle) {
    start = *mle;
  } else {
    start = initial_estimate(data, x).coefficients;
  }
  PenaltyGrid grid;
  grid.construction = "doubling from 1 to the endpoint property; 0 followed by log-spaced points on [max/" +
                      std::to_string(static_cast<long long>(options.min_ratio)) + ", max]";
  grid.lambda_s_max = find_max_lambda(data, x, start, options, true, [&](const CoefficientSet& b) {
    return b.matrix().cwiseAbs().maxCoeff() < options.zero_threshold;
  });
  if (data.num_groups() > 1) {
    grid.lambda_f_max = find_max_lambda(data, x, start, options, false, [&](const CoefficientSet& b) {
      return max_pairwise_difference(b) < options.fusion_threshold;
    });
  }
  grid.lambda_s_values = grid_axis(grid.lambda_s_max, options.n_s, options.min_ratio);
  grid.lambda_f_values = grid_axis(grid.lambda_f_max, options.n_f, options.min_ratio);
  return grid;
}

int effective_df(const CoefficientSet& b, double zero_threshold) {
  return static_cast<int>((b.matrix().array().abs() >= zero_threshold).count());
}

double aic(double loglik, int df) { return 2.0 * df + 2.0 * loglik; }

double bic(double loglik, int df, std::size_t total_rankers) {
  return std::log(static_cast<double>(total_rankers)) * df + 2.0 * loglik;
}

double aic(const FitResult& fit, double zero_threshold) {
  return aic(fit.loglik, effective_df(fit.coefficients, zero_threshold));
}

double bic(const FitResult& fit, const RankingDataset& data, double zero_threshold) {
  return bic(fit.loglik, effective_df(fit.coefficients, zero_threshold), data.total_rankers());
}

Criterion parse_criterion(const std::string& name) {
  if (name == "aic") return Criterion::Aic;
  if (name == "bic") return Criterion::Bic;
  throw ValidationError("criterion must be 'aic' or 'bic', got '" + name + "'");
}

std::string criterion_name(Criterion c) { return c == Criterion::Aic ? "aic" : "bic"; }

SelectionResult select(const RankingDataset& data, const CovariateMatrix& x, const PenaltyGrid& grid,
                       const SelectOptions& options, const CoefficientSet* mle) {
  grid.validate();
  SelectionResult out;
  out.grid = grid;
  out.criterion = options.criterion;
  out.zero_threshold = options.zero_threshold;

  CoefficientSet start = mle ? *mle : initial_estimate(data, x).coefficients;
  const std::size_t ns = grid.lambda_s_values.size();
  const std::size_t nf = grid.lambda_f_values.size();
  out.scores.resize(ns * nf);
  out.fits.resize(ns * nf);

  parallel_for(nf, options.threads, [&](std::size_t jf) {
    const CoefficientSet* warm = &start;
    for (std::size_t is = 0; is < ns; ++is) {
      const std::size_t idx = jf * ns + is;
      CellScore& score = out.scores[idx];
      score.cell = {grid.lambda_s_values[is], grid.lambda_f_values[jf], is, jf};
      PenaltyConfig cfg;
      cfg.lambda_s = score.cell.lambda_s;
      cfg.lambda_f = score.cell.lambda_f;
      cfg.epsilon = options.epsilon;
      cfg.tau = options.tau;
      try {
        FitResult f = fit(data, x, cfg, options.controls, warm);
        score.ok = true;
        score.df = effective_df(f.coefficients, options.zero_threshold);
        score.loglik = f.loglik;
        score.aic = aic(f.loglik, score.df);
        score.bic = bic(f.loglik, score.df, data.total_rankers());
        out.fits[idx] = std::move(f);
        warm = &out.fits[idx]->coefficients;
      } catch (const std::exception& e) {
        score.ok = false;
        score.error = e.what();
        warm = &start;
      }
    }
  });

  bool found = false;
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    const CellScore& s = out.scores[i];
    if (!s.ok) continue;
    if (!found) {
      out.chosen = i;
      found = true;
      continue;
    }
    const CellScore& best = out.scores[out.chosen];
    const double a = options.criterion == Criterion::Aic ? s.aic : s.bic;
    const double b = options.criterion == Criterion::Aic ? best.aic : best.bic;
    const bool larger = s.cell.lambda_s > best.cell.lambda_s ||
                        (s.cell.lambda_s == best.cell.lambda_s && s.cell.lambda_f > best.cell.lambda_f);
    if (a < b || (a == b && larger)) out.chosen = i;
  }
  if (!found) throw NumericalError("every grid cell failed to fit");
  if (!options.keep_fits) {
    for (std::size_t i = 0; i < out.fits.size(); ++i) {
      if (i != out.chosen) out.fits[i].reset();
    }
  }
  return out;
}

}  // namespace sfpl
