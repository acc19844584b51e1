#pragma once

// Worths and aggregated rankings for catalog objects and for unseen objects
// described only by covariates.

#include <Eigen/Core>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sfpl/likelihood.hpp"

namespace sfpl {

struct RankTable {
  std::vector<std::string> groups;
  std::vector<std::string> objects;
  std::vector<bool> predicted_only;
  Eigen::MatrixXd worths;  // K x M'
  Eigen::MatrixXi ranks;   // K x M', each row a permutation of 1..M'
};

// K x M' matrix exp(x_j . beta_k). Throws ValidationError on a column-count
// mismatch and NumericalError if a worth overflows.
Eigen::MatrixXd object_worths(const CoefficientSet& b, const Eigen::MatrixXd& x_all);

// 1-based ranks by descending value, ties to the lower index.
std::vector<int> descending_ranks(std::span<const double> values);

RankTable aggregate_ranking(const Eigen::MatrixXd& worths, std::vector<std::string> objects,
                            std::vector<std::string> groups, std::vector<bool> predicted_only = {});

struct NewObjects {
  std::vector<std::string> labels;
  Eigen::MatrixXd raw;  // n_new x p, on the original covariate scale
};

// Standardizes new rows with the training statistics, appends them after
// the catalog and ranks everything per group.
RankTable predict_new(const CoefficientSet& b, const CovariateMatrix& train, const ObjectCatalog& catalog,
                      const NewObjects& added, std::vector<std::string> groups);

// Columns object,group,worth,rank,predicted_only; rows by group, then rank.
void write_rank_table(std::ostream& out, const RankTable& table);

}  // namespace sfpl
