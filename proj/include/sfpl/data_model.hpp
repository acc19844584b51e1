#pragma once

// Ranking and covariate data structures, file ingestion, and the
// identifiability precondition.

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sfpl {

using ObjectIndex = std::int32_t;

// Ordered set of M >= 2 distinct object labels.
class ObjectCatalog {
 public:
  ObjectCatalog() = default;
  explicit ObjectCatalog(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(ObjectIndex i) const { return labels_[static_cast<std::size_t>(i)]; }
  // -1 when the label is unknown.
  ObjectIndex find(const std::string& label) const;
  bool contains(const std::string& label) const { return find(label) >= 0; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, ObjectIndex> index_;
};

// Strict ordering of m >= 1 distinct objects, most preferred first.
class PartialRanking {
 public:
  PartialRanking() = default;
  // Throws ValidationError on an empty list, duplicates, or indices outside
  // [0, catalog_size).
  PartialRanking(std::vector<ObjectIndex> ordering, std::size_t catalog_size);

  std::span<const ObjectIndex> ordering() const { return ordering_; }
  std::size_t size() const { return ordering_.size(); }
  ObjectIndex operator[](std::size_t j) const { return ordering_[j]; }

  friend bool operator==(const PartialRanking&, const PartialRanking&) = default;

 private:
  std::vector<ObjectIndex> ordering_;
};

struct RankingGroup {
  std::string label;
  std::vector<std::string> ranker_ids;
  std::vector<PartialRanking> rankings;
};

// K >= 1 named groups of rankings over a shared catalog of `catalog_size`
// objects; every group holds at least one ranking.
class RankingDataset {
 public:
  RankingDataset() = default;
  RankingDataset(std::vector<RankingGroup> groups, std::size_t catalog_size);

  std::size_t num_groups() const { return groups_.size(); }
  std::size_t catalog_size() const { return catalog_size_; }
  const RankingGroup& group(std::size_t k) const { return groups_[k]; }
  const std::vector<RankingGroup>& groups() const { return groups_; }
  std::vector<std::string> group_labels() const;
  std::size_t total_rankers() const;

 private:
  std::vector<RankingGroup> groups_;
  std::size_t catalog_size_ = 0;
};

// M x p object-variable matrix. When standardized, column_means/column_sds
// hold the statistics of the raw data the values were derived from.
class CovariateMatrix {
 public:
  CovariateMatrix() = default;
  // Throws ValidationError on p < 1, name count mismatch, or non-finite values.
  CovariateMatrix(Eigen::MatrixXd values, std::vector<std::string> variable_names);

  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const std::vector<std::string>& variable_names() const { return names_; }
  bool standardized() const { return standardized_; }
  const Eigen::VectorXd& column_means() const { return means_; }
  const Eigen::VectorXd& column_sds() const { return sds_; }

  // Maps a raw covariate row onto this matrix's scale (identity when not
  // standardized). Throws ValidationError on a length mismatch.
  Eigen::VectorXd transform_row(const Eigen::VectorXd& raw) const;

  friend CovariateMatrix standardize_covariates(const CovariateMatrix& x);
  friend CovariateMatrix make_standardized(Eigen::MatrixXd values, std::vector<std::string> names,
                                           Eigen::VectorXd means, Eigen::VectorXd sds);

 private:
  Eigen::MatrixXd values_;
  std::vector<std::string> names_;
  bool standardized_ = false;
  Eigen::VectorXd means_;
  Eigen::VectorXd sds_;
};

// Column-wise z-scoring with the sample (n-1) standard deviation. Applying it
// to an already standardized matrix leaves the values unchanged (to rounding)
// and composes the stored statistics. Throws ValidationError naming the first
// constant column.
CovariateMatrix standardize_covariates(const CovariateMatrix& x);

// Rebuilds a standardized matrix from stored statistics (model files).
CovariateMatrix make_standardized(Eigen::MatrixXd values, std::vector<std::string> names,
                                  Eigen::VectorXd means, Eigen::VectorXd sds);

struct CovariateTable {
  ObjectCatalog catalog;
  CovariateMatrix covariates;
};

// Header `object,<var1>,...,<varp>`; one row per object. Catalog order is the
// row order.
CovariateTable read_covariates(std::istream& in, const std::string& source);
CovariateTable load_covariates(const std::string& path);

// Long format: header `group,ranker,position,object` (any column order), one
// row per (ranker, position). Groups and rankers keep first-appearance order.
RankingDataset read_rankings(std::istream& in, const std::string& source,
                             const ObjectCatalog& catalog);
RankingDataset load_rankings(const std::string& path, const ObjectCatalog& catalog);
void write_rankings(std::ostream& out, const RankingDataset& data, const ObjectCatalog& catalog);

struct IdentifiabilityReport {
  Eigen::Index rank = 0;
  Eigen::Index columns = 0;
  bool pass = false;
  Eigen::VectorXd singular_values;
};

// Numerical rank: singular values > tol * largest singular value.
IdentifiabilityReport check_identifiability(const CovariateMatrix& x, double tol = 1e-10);

struct GroupCoverage {
  std::string group;
  std::size_t ranked_objects = 0;
  std::vector<ObjectIndex> missing;
};

// Per group, which catalog objects never appear in any ranking.
std::vector<GroupCoverage> catalog_coverage(const RankingDataset& data);

// One warning line per group that leaves catalog objects unranked.
std::vector<std::string> coverage_warnings(const RankingDataset& data, const ObjectCatalog& catalog);

// Concatenates all groups into a single group (the pooled comparator).
RankingDataset pool_groups(const RankingDataset& data, const std::string& label = "pooled");

}  // namespace sfpl
