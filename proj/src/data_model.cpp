#include "sfpl/data_model.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "sfpl/csv.hpp"
#include "sfpl/errors.hpp"

namespace sfpl {

ObjectCatalog::ObjectCatalog(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) throw ValidationError("object catalog needs at least 2 objects");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].empty()) throw ValidationError("empty object label at catalog row " + std::to_string(i + 1));
    auto [it, inserted] = index_.emplace(labels_[i], static_cast<ObjectIndex>(i));
    if (!inserted) throw ValidationError("duplicate object label '" + labels_[i] + "'");
  }
}

ObjectIndex ObjectCatalog::find(const std::string& label) const {
  auto it = index_.find(label);
  return it == index_.end() ? -1 : it->second;
}

PartialRanking::PartialRanking(std::vector<ObjectIndex> ordering, std::size_t catalog_size)
    : ordering_(std::move(ordering)) {
  if (ordering_.empty()) throw ValidationError("ranking must contain at least one object");
  if (ordering_.size() > catalog_size) throw ValidationError("ranking longer than the catalog");
  std::vector<bool> seen(catalog_size, false);
  for (ObjectIndex o : ordering_) {
    if (o < 0 || static_cast<std::size_t>(o) >= catalog_size) {
      throw ValidationError("object index " + std::to_string(o) + " outside the catalog");
    }
    if (seen[static_cast<std::size_t>(o)]) {
      throw ValidationError("object index " + std::to_string(o) + " ranked twice");
    }
    seen[static_cast<std::size_t>(o)] = true;
  }
}

RankingDataset::RankingDataset(std::vector<RankingGroup> groups, std::size_t catalog_size)
    : groups_(std::move(groups)), catalog_size_(catalog_size) {
  if (groups_.empty()) throw ValidationError("dataset needs at least one group");
  for (auto& g : groups_) {
    if (g.rankings.empty()) throw ValidationError("group '" + g.label + "' has no rankings");
    if (g.ranker_ids.empty()) {
      for (std::size_t i = 0; i < g.rankings.size(); ++i) g.ranker_ids.push_back(std::to_string(i + 1));
    }
    if (g.ranker_ids.size() != g.rankings.size()) {
      throw ValidationError("group '" + g.label + "': ranker id count mismatch");
    }
    for (const auto& r : g.rankings) {
      for (ObjectIndex o : r.ordering()) {
        if (static_cast<std::size_t>(o) >= catalog_size_) {
          throw ValidationError("group '" + g.label + "': object index outside the catalog");
        }
      }
    }
  }
  for (std::size_t a = 0; a < groups_.size(); ++a) {
    for (std::size_t b = a + 1; b < groups_.size(); ++b) {
      if (groups_[a].label == groups_[b].label) {
        throw ValidationError("duplicate group label '" + groups_[a].label + "'");
      }
    }
  }
}

std::vector<std::string> RankingDataset::group_labels() const {
  std::vector<std::string> out;
  out.reserve(groups_.size());
  for (const auto& g : groups_) out.push_back(g.label);
  return out;
}

std::size_t RankingDataset::total_rankers() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.rankings.size();
  return n;
}

CovariateMatrix::CovariateMatrix(Eigen::MatrixXd values, std::vector<std::string> variable_names)
    : values_(std::move(values)), names_(std::move(variable_names)) {
  if (values_.cols() < 1) throw ValidationError("covariate matrix needs at least one variable");
  if (static_cast<Eigen::Index>(names_.size()) != values_.cols()) {
    throw ValidationError("covariate matrix: variable name count does not match column count");
  }
  if (!values_.allFinite()) throw ValidationError("covariate matrix contains non-finite values");
}

Eigen::VectorXd CovariateMatrix::transform_row(const Eigen::VectorXd& raw) const {
  if (raw.size() != cols()) {
    throw ValidationError("covariate vector has " + std::to_string(raw.size()) +
                          " entries, expected " + std::to_string(cols()));
  }
  if (!standardized_) return raw;
  return ((raw - means_).array() / sds_.array()).matrix();
}

CovariateMatrix standardize_covariates(const CovariateMatrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < 2) throw ValidationError("standardization needs at least 2 rows");
  Eigen::VectorXd mean(p), sd(p);
  for (Eigen::Index q = 0; q < p; ++q) {
    const auto col = x.values().col(q);
    mean(q) = col.mean();
    sd(q) = std::sqrt((col.array() - mean(q)).square().sum() / static_cast<double>(n - 1));
    const double scale = std::max(col.cwiseAbs().maxCoeff(), 1.0);
    if (!(sd(q) > 1e-12 * scale)) {
      throw ValidationError("covariate column '" + x.variable_names()[static_cast<std::size_t>(q)] +
                            "' is constant and cannot be standardized");
    }
  }
  Eigen::MatrixXd z = (x.values().rowwise() - mean.transpose()).array().rowwise() /
                      sd.transpose().array();
  Eigen::VectorXd means = mean;
  Eigen::VectorXd sds = sd;
  if (x.standardized()) {
    // raw = m0 + s0 * v and v = m1 + s1 * z, so raw = (m0 + s0 m1) + s0 s1 z.
    means = x.column_means() + (x.column_sds().array() * mean.array()).matrix();
    sds = (x.column_sds().array() * sd.array()).matrix();
  }
  return make_standardized(std::move(z), x.variable_names(), std::move(means), std::move(sds));
}

CovariateMatrix make_standardized(Eigen::MatrixXd values, std::vector<std::string> names,
                                  Eigen::VectorXd means, Eigen::VectorXd sds) {
  CovariateMatrix out(std::move(values), std::move(names));
  if (means.size() != out.cols() || sds.size() != out.cols()) {
    throw ValidationError("standardization statistics do not match the variable count");
  }
  if ((sds.array() <= 0.0).any() || !sds.allFinite() || !means.allFinite()) {
    throw ValidationError("invalid standardization statistics");
  }
  out.standardized_ = true;
  out.means_ = std::move(means);
  out.sds_ = std::move(sds);
  return out;
}

CovariateTable read_covariates(std::istream& in, const std::string& source) {
  const csv::Table t = csv::read(in, source);
  if (t.header.size() < 2 || t.header[0] != "object") {
    throw ValidationError(source + ": covariate header must be 'object,<var1>,...'");
  }
  std::vector<std::string> names(t.header.begin() + 1, t.header.end());
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = a + 1; b < names.size(); ++b) {
      if (names[a] == names[b]) throw ValidationError(source + ": duplicate variable '" + names[a] + "'");
    }
  }
  std::vector<std::string> labels;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    labels.push_back(t.rows[r][0]);
    for (std::size_t c = 0; c < names.size(); ++c) {
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = csv::parse_double(
          t.rows[r][c + 1], source + ":" + std::to_string(t.lines[r]) + " column '" + names[c] + "'");
    }
  }
  ObjectCatalog catalog(std::move(labels));
  return {std::move(catalog), CovariateMatrix(std::move(values), std::move(names))};
}

CovariateTable load_covariates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_covariates(in, path);
}

RankingDataset read_rankings(std::istream& in, const std::string& source, const ObjectCatalog& catalog) {
  const csv::Table t = csv::read(in, source);
  const int cg = t.column("group");
  const int cr = t.column("ranker");
  const int cp = t.column("position");
  const int co = t.column("object");
  if (cg < 0 || cr < 0 || cp < 0 || co < 0) {
    throw ValidationError(source + ": header must contain group,ranker,position,object");
  }
  if (t.rows.empty()) throw ValidationError(source + ": no ranking rows");

  struct RankerRows {
    std::string id;
    std::map<long long, std::pair<ObjectIndex, std::size_t>> by_position;
  };
  struct GroupRows {
    std::string label;
    std::vector<RankerRows> rankers;
    std::unordered_map<std::string, std::size_t> ranker_index;
  };
  std::vector<GroupRows> groups;
  std::unordered_map<std::string, std::size_t> group_index;

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + ":" + std::to_string(t.lines[r]);
    const std::string& g = row[static_cast<std::size_t>(cg)];
    const std::string& rk = row[static_cast<std::size_t>(cr)];
    const std::string& obj = row[static_cast<std::size_t>(co)];
    if (g.empty() || rk.empty()) throw ValidationError(where + ": empty group or ranker");
    const long long pos = csv::parse_integer(row[static_cast<std::size_t>(cp)], where + " position");
    if (pos < 1) throw ValidationError(where + ": position must be >= 1");
    const ObjectIndex oi = catalog.find(obj);
    if (oi < 0) throw ValidationError(where + ": unknown object '" + obj + "'");

    auto [git, gnew] = group_index.emplace(g, groups.size());
    if (gnew) groups.push_back(GroupRows{g, {}, {}});
    GroupRows& gr = groups[git->second];
    auto [rit, rnew] = gr.ranker_index.emplace(rk, gr.rankers.size());
    if (rnew) gr.rankers.push_back(RankerRows{rk, {}});
    RankerRows& rr = gr.rankers[rit->second];
    auto [pit, pnew] = rr.by_position.emplace(pos, std::make_pair(oi, t.lines[r]));
    if (!pnew) {
      throw ValidationError(where + ": duplicate position " + std::to_string(pos) + " for group '" + g +
                            "', ranker '" + rk + "'");
    }
  }

  std::vector<RankingGroup> out;
  for (auto& gr : groups) {
    RankingGroup g;
    g.label = gr.label;
    for (auto& rr : gr.rankers) {
      std::vector<ObjectIndex> ordering;
      long long expected = 1;
      std::vector<bool> seen(catalog.size(), false);
      for (const auto& [pos, entry] : rr.by_position) {
        if (pos != expected) {
          throw ValidationError(source + ": group '" + gr.label + "', ranker '" + rr.id + "': gap in positions (missing " +
                                std::to_string(expected) + ")");
        }
        const auto oi = static_cast<std::size_t>(entry.first);
        if (seen[oi]) {
          throw ValidationError(source + ":" + std::to_string(entry.second) + ": object '" + catalog.labels()[oi] +
                                "' ranked twice by group '" + gr.label + "', ranker '" + rr.id + "'");
        }
        seen[oi] = true;
        ordering.push_back(entry.first);
        ++expected;
      }
      g.ranker_ids.push_back(rr.id);
      g.rankings.emplace_back(std::move(ordering), catalog.size());
    }
    out.push_back(std::move(g));
  }
  return RankingDataset(std::move(out), catalog.size());
}

RankingDataset load_rankings(const std::string& path, const ObjectCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_rankings(in, path, catalog);
}

void write_rankings(std::ostream& out, const RankingDataset& data, const ObjectCatalog& catalog) {
  out << "group,ranker,position,object\n";
  for (const auto& g : data.groups()) {
    for (std::size_t i = 0; i < g.rankings.size(); ++i) {
      const auto ord = g.rankings[i].ordering();
      for (std::size_t j = 0; j < ord.size(); ++j) {
        out << g.label << ',' << g.ranker_ids[i] << ',' << (j + 1) << ',' << catalog.label(ord[j]) << '\n';
      }
    }
  }
}

IdentifiabilityReport check_identifiability(const CovariateMatrix& x, double tol) {
  IdentifiabilityReport rep;
  rep.columns = x.cols();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x.values());
  rep.singular_values = svd.singularValues();
  const double smax = rep.singular_values.size() > 0 ? rep.singular_values(0) : 0.0;
  rep.rank = 0;
  if (smax > 0.0) {
    for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i) {
      if (rep.singular_values(i) > tol * smax) ++rep.rank;
    }
  }
  rep.pass = rep.rank == rep.columns;
  return rep;
}

std::vector<GroupCoverage> catalog_coverage(const RankingDataset& data) {
  std::vector<GroupCoverage> out;
  for (const auto& g : data.groups()) {
    std::vector<bool> seen(data.catalog_size(), false);
    for (const auto& r : g.rankings) {
      for (ObjectIndex o : r.ordering()) seen[static_cast<std::size_t>(o)] = true;
    }
    GroupCoverage c;
    c.group = g.label;
    for (std::size_t j = 0; j < seen.size(); ++j) {
      if (seen[j]) ++c.ranked_objects;
      else c.missing.push_back(static_cast<ObjectIndex>(j));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::string> coverage_warnings(const RankingDataset& data, const ObjectCatalog& catalog) {
  std::vector<std::string> out;
  for (const auto& c : catalog_coverage(data)) {
    if (c.missing.empty()) continue;
    std::string msg = "group '" + c.group + "' never ranks " + std::to_string(c.missing.size()) +
                      " of " + std::to_string(data.catalog_size()) + " objects (";
    for (std::size_t i = 0; i < c.missing.size() && i < 5; ++i) {
      if (i) msg += ", ";
      msg += catalog.label(c.missing[i]);
    }
    if (c.missing.size() > 5) msg += ", ...";
    msg += "); their worths are predicted from covariates only";
    out.push_back(std::move(msg));
  }
  return out;
}

RankingDataset pool_groups(const RankingDataset& data, const std::string& label) {
  RankingGroup pooled;
  pooled.label = label;
  for (const auto& g : data.groups()) {
    for (std::size_t i = 0; i < g.rankings.size(); ++i) {
      pooled.ranker_ids.push_back(g.label + "/" + g.ranker_ids[i]);
      pooled.rankings.push_back(g.rankings[i]);
    }
  }
  return RankingDataset({std::move(pooled)}, data.catalog_size());
}

}  // namespace sfpl
