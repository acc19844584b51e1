#pragma once

// Data-generating process, comparator fits, recovery metrics and the
// replicated study harness. Also hosts the exhaustive ranking-distribution
// enumeration used as a test oracle.

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfpl/prediction.hpp"
#include "sfpl/selection.hpp"

namespace sfpl {

using Rng = std::mt19937_64;

struct SimulationConfig {
  int K = 4;
  int M = 20;
  int m = 3;
  int p = 5;
  int n_k = 100;
  double eta = 0.25;    // fraction of zeroed baseline coefficients
  double delta = 0.25;  // fraction of coefficients resampled per non-baseline group
  int n_new = 0;        // held-out objects for prediction
  std::uint64_t replicate_seed = 0;

  // Throws ValidationError (m > M, fractions outside [0,1], ...).
  void validate() const;
  // Stream key covering everything that shapes the training data (n_new is
  // excluded: held-out objects are drawn last).
  std::uint64_t data_key() const;
};

// Independent stream per (seed, scenario key, replicate).
Rng make_stream(std::uint64_t seed, std::uint64_t scenario_key, std::uint64_t replicate);

// floor(fraction * p), robust to representation error in the fraction.
int fraction_count(double fraction, int p);

// beta_1 ~ U(-1,1)^p with floor(eta p) random entries zeroed; beta_k (k>1)
// copies beta_1 and redraws floor(delta p) random entries from U(-1,1).
CoefficientSet generate_coefficients(const SimulationConfig& cfg, Rng& rng);

// Sequential Plackett-Luce draw over `subset`: each stage picks among the
// remaining objects with probability proportional to exp(x beta).
PartialRanking sample_partial_ranking(const Eigen::VectorXd& beta, const CovariateMatrix& x,
                                      std::span<const ObjectIndex> subset, Rng& rng);

struct SimulatedData {
  ObjectCatalog catalog;
  RankingDataset data;
  CovariateMatrix x;
  CoefficientSet truth;
  RankTable true_ranks;        // catalog objects only
  Eigen::MatrixXd new_objects; // n_new x p
};

// X ~ N(0, I) (M x p); every ranker ranks a uniform m-subset; held-out
// covariates are drawn after all rankings.
SimulatedData generate_dataset(const SimulationConfig& cfg, Rng& rng);

double rmse(const CoefficientSet& truth, const CoefficientSet& estimate);

enum class F1Variant { Standard, Literal };
struct ConfusionCounts {
  int tp = 0, fp = 0, fn = 0, tn = 0;
};
ConfusionCounts confusion(const CoefficientSet& truth, const CoefficientSet& estimate, double zero_threshold);
// Standard: 2tp / (2tp + fp + fn). Literal: 2tp / (2tp + fp + tn). 1 when the
// denominator is 0.
double f1(const CoefficientSet& truth, const CoefficientSet& estimate, double zero_threshold,
          F1Variant variant = F1Variant::Standard);

// Mean over groups (rows) of the fraction of columns whose ranks agree. When
// `columns` is non-empty only those columns are scored.
double rcr(const Eigen::MatrixXi& true_ranks, const Eigen::MatrixXi& estimated_ranks,
           std::span<const Eigen::Index> columns = {});

// Ranks (K x n) of exp(x_all beta_k), ties to the lower index.
Eigen::MatrixXi ranks_from_coefficients(const CoefficientSet& b, const Eigen::MatrixXd& x_all);

// Every ordering of `subset` (m <= 6) with its probability, evaluated term by
// term from the product of worth ratios. Throws ValidationError for m > 6.
std::map<std::vector<ObjectIndex>, double> enumerate_ranking_distribution(const Eigen::VectorXd& beta,
                                                                          const CovariateMatrix& x,
                                                                          std::span<const ObjectIndex> subset);

enum class Method { Sfpl, Pl, Ppl };
std::string method_name(Method m);

struct MetricsReport {
  Method method = Method::Sfpl;
  double rmse = 0.0;
  std::optional<double> f1;
  double rcr = 0.0;
  std::optional<double> rcr_pred;
  double seconds = 0.0;
  // SFPL only: the selected cell and its degrees of freedom.
  double lambda_s = 0.0;
  double lambda_f = 0.0;
  int df = 0;
};

struct Scenario {
  std::string name;
  SimulationConfig config;
};

// Named presets: families "table1", "table2", "appA-K2", "appA-K6",
// "appA-M10-m5", "appA-M10-m10", or single cells such as "table1-n100-p5",
// "table1-n50-p10-d0.5-e0.25", "table2-n100-p5-e0.8". Comma-separated lists
// are concatenated. Throws ValidationError on unknown names.
std::vector<Scenario> scenario_presets(const std::string& names);

struct StudyOptions {
  int replicates = 50;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<Method> methods{Method::Sfpl, Method::Pl, Method::Ppl};
  Criterion criterion = Criterion::Bic;
  int grid_n_s = 10;
  int grid_n_f = 10;
  double zero_threshold = 1e-4;
  double fusion_threshold = 1e-4;
  double epsilon = 1e-5;
  FitControls controls;
  F1Variant f1_variant = F1Variant::Standard;
};

struct ReplicateOutcome {
  std::size_t scenario = 0;
  int replicate = 0;
  bool ok = false;
  std::string error;
  std::vector<MetricsReport> metrics;  // one per requested method
};

// One simulated replicate: data generation, all requested methods, metrics.
ReplicateOutcome run_replicate(const Scenario& scenario, std::size_t scenario_index, int replicate,
                               const StudyOptions& options);

struct SummaryStat {
  double mean = 0.0;
  double se = 0.0;
  int count = 0;
};

struct StudyRow {
  std::size_t scenario = 0;
  Method method = Method::Sfpl;
  int replicates_ok = 0;
  int replicates_failed = 0;
  SummaryStat rmse, f1, rcr, rcr_pred, seconds;
};

struct StudyResult {
  std::vector<Scenario> scenarios;
  std::vector<ReplicateOutcome> replicates;  // scenario-major, replicate order
  std::vector<StudyRow> rows;                // scenario-major, method order
};

// Replicates run concurrently over `threads` workers; aggregation is in
// (scenario, replicate) order so output does not depend on the worker count.
StudyResult run_study(const std::vector<Scenario>& scenarios, const StudyOptions& options);

SummaryStat summarize(std::span<const double> values);

// One row per scenario x method. seconds_mean is written as NA unless
// `include_timing` (wall-clock would break byte-identical reruns).
void write_study_table(std::ostream& out, const StudyResult& result, bool include_timing);
// Per-replicate metrics (for boxplots of RCR and the like).
void write_replicate_table(std::ostream& out, const StudyResult& result, bool include_timing);

}  // namespace sfpl
