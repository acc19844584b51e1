#pragma once

// Penalty grids, information criteria with nonzero-count degrees of freedom,
// and grid search.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sfpl/optimizer.hpp"

namespace sfpl {

// Both axes strictly increasing, nonnegative, starting at exactly 0.
struct PenaltyGrid {
  std::vector<double> lambda_s_values;
  std::vector<double> lambda_f_values;
  // How the endpoints were obtained (reported in output metadata).
  double lambda_s_max = 0.0;
  double lambda_f_max = 0.0;
  std::string construction = "explicit";

  void validate() const;
};

struct GridOptions {
  int n_s = 10;
  int n_f = 10;
  double zero_threshold = 1e-4;
  double fusion_threshold = 1e-4;
  // Interior points are log-spaced on [max / min_ratio, max].
  double min_ratio = 1000.0;
  double epsilon = 1e-5;
  Eigen::MatrixXd tau;
  FitControls controls;
};

// lambda_s^max: double from 1 (lambda_f = 0) until every |beta| < zero_threshold;
// lambda_f^max: double from 1 (lambda_s = 0) until every pairwise difference
// < fusion_threshold (0 when K = 1). Each axis is 0 followed by n - 1
// log-spaced points ending at the maximum. Throws NumericalError past 2^60.
// `mle` is the unpenalized starting point; computed when null.
PenaltyGrid build_grid(const RankingDataset& data, const CovariateMatrix& x, const GridOptions& options = {},
                       const CoefficientSet* mle = nullptr);

// Axis helper: {0} when max == 0, else 0 then n - 1 log-spaced points.
std::vector<double> grid_axis(double max_value, int n, double min_ratio);

int effective_df(const CoefficientSet& b, double zero_threshold = 1e-4);
double aic(double loglik, int df);
double bic(double loglik, int df, std::size_t total_rankers);
double aic(const FitResult& fit, double zero_threshold = 1e-4);
double bic(const FitResult& fit, const RankingDataset& data, double zero_threshold = 1e-4);

enum class Criterion { Aic, Bic };
Criterion parse_criterion(const std::string& name);
std::string criterion_name(Criterion c);

struct GridCell {
  double lambda_s = 0.0;
  double lambda_f = 0.0;
  std::size_t is = 0;
  std::size_t jf = 0;
};

struct CellScore {
  GridCell cell;
  bool ok = false;
  std::string error;
  int df = 0;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
};

struct SelectionResult {
  PenaltyGrid grid;
  Criterion criterion = Criterion::Bic;
  double zero_threshold = 1e-4;
  // Row-major over (lambda_f index, lambda_s index); fits[i] matches scores[i].
  std::vector<CellScore> scores;
  std::vector<std::optional<FitResult>> fits;
  std::size_t chosen = 0;

  const FitResult& chosen_fit() const { return *fits[chosen]; }
  const CellScore& chosen_score() const { return scores[chosen]; }
};

struct SelectOptions {
  Criterion criterion = Criterion::Bic;
  double zero_threshold = 1e-4;
  double epsilon = 1e-5;
  Eigen::MatrixXd tau;
  FitControls controls;
  int threads = 1;
  bool keep_fits = true;
};

// Fits every cell; within a lambda_f row the lambda_s axis is swept upward
// with warm starts, rows may run concurrently. The argmin of the criterion
// wins, ties going to the larger (lambda_s, lambda_f). Failed cells are
// recorded and skipped; throws NumericalError if all fail.
SelectionResult select(const RankingDataset& data, const CovariateMatrix& x, const PenaltyGrid& grid,
                       const SelectOptions& options, const CoefficientSet* mle = nullptr);

}  // namespace sfpl
