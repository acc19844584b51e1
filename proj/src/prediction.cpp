#include "sfpl/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "sfpl/csv.hpp"
#include "sfpl/errors.hpp"

namespace sfpl {

Eigen::MatrixXd object_worths(const CoefficientSet& b, const Eigen::MatrixXd& x_all) {
  if (x_all.cols() != b.vars()) {
    throw ValidationError("covariate rows have " + std::to_string(x_all.cols()) + " entries, expected " +
                          std::to_string(b.vars()));
  }
  Eigen::MatrixXd w = (b.matrix() * x_all.transpose()).array().exp().matrix();
  if (!w.allFinite()) throw NumericalError("object worth overflow");
  return w;
}

std::vector<int> descending_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<int> ranks(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r + 1);
  return ranks;
}

RankTable aggregate_ranking(const Eigen::MatrixXd& worths, std::vector<std::string> objects,
                            std::vector<std::string> groups, std::vector<bool> predicted_only) {
  if (static_cast<Eigen::Index>(objects.size()) != worths.cols() ||
      static_cast<Eigen::Index>(groups.size()) != worths.rows()) {
    throw ValidationError("rank table labels do not match the worth matrix");
  }
  if (predicted_only.empty()) predicted_only.assign(objects.size(), false);
  if (predicted_only.size() != objects.size()) throw ValidationError("predicted_only flag count mismatch");
  if ((worths.array() <= 0.0).any() || !worths.allFinite()) throw ValidationError("worths must be positive and finite");

  RankTable t;
  t.groups = std::move(groups);
  t.objects = std::move(objects);
  t.predicted_only = std::move(predicted_only);
  t.worths = worths;
  t.ranks.resize(worths.rows(), worths.cols());
  std::vector<double> row(static_cast<std::size_t>(worths.cols()));
  for (Eigen::Index k = 0; k < worths.rows(); ++k) {
    for (Eigen::Index j = 0; j < worths.cols(); ++j) row[static_cast<std::size_t>(j)] = worths(k, j);
    const auto ranks = descending_ranks(row);
    for (Eigen::Index j = 0; j < worths.cols(); ++j) t.ranks(k, j) = ranks[static_cast<std::size_t>(j)];
  }
  return t;
}

RankTable predict_new(const CoefficientSet& b, const CovariateMatrix& train, const ObjectCatalog& catalog,
                      const NewObjects& added, std::vector<std::string> groups) {
  if (static_cast<Eigen::Index>(catalog.size()) != train.rows()) {
    throw ValidationError("catalog size does not match the training covariates");
  }
  if (static_cast<Eigen::Index>(added.labels.size()) != added.raw.rows()) {
    throw ValidationError("new object label count does not match covariate rows");
  }
  if (added.raw.rows() > 0 && added.raw.cols() != train.cols()) {
    throw ValidationError("new objects have " + std::to_string(added.raw.cols()) + " covariates, expected " +
                          std::to_string(train.cols()));
  }
  std::unordered_set<std::string> seen;
  for (const auto& l : added.labels) {
    if (catalog.contains(l)) throw ValidationError("new object '" + l + "' duplicates a catalog label");
    if (!seen.insert(l).second) throw ValidationError("duplicate new object label '" + l + "'");
  }
  const Eigen::Index m = train.rows();
  const Eigen::Index n_new = added.raw.rows();
  Eigen::MatrixXd all(m + n_new, train.cols());
  all.topRows(m) = train.values();
  for (Eigen::Index i = 0; i < n_new; ++i) {
    all.row(m + i) = train.transform_row(added.raw.row(i).transpose()).transpose();
  }
  std::vector<std::string> labels = catalog.labels();
  labels.insert(labels.end(), added.labels.begin(), added.labels.end());
  std::vector<bool> flags(static_cast<std::size_t>(m), false);
  flags.resize(static_cast<std::size_t>(m + n_new), true);
  return aggregate_ranking(object_worths(b, all), std::move(labels), std::move(groups), std::move(flags));
}

void write_rank_table(std::ostream& out, const RankTable& t) {
  out << "object,group,worth,rank,predicted_only\n";
  for (Eigen::Index k = 0; k < t.worths.rows(); ++k) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(t.worths.cols()));
    for (Eigen::Index j = 0; j < t.worths.cols(); ++j) order[static_cast<std::size_t>(t.ranks(k, j) - 1)] = j;
    for (Eigen::Index j : order) {
      out << t.objects[static_cast<std::size_t>(j)] << ',' << t.groups[static_cast<std::size_t>(k)] << ','
          << csv::format_double(t.worths(k, j)) << ',' << t.ranks(k, j) << ','
          << (t.predicted_only[static_cast<std::size_t>(j)] ? "true" : "false") << '\n';
    }
  }
}

}  // namespace sfpl
