#include "sfpl/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sfpl/errors.hpp"
#include "sfpl/parallel.hpp"

namespace sfpl {
namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// First `count` entries of a uniformly shuffled 0..n-1.
std::vector<int> random_subset(int n, int count, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

void SimulationConfig::validate() const {
  if (K < 1) throw ValidationError("K must be >= 1");
  if (M < 2) throw ValidationError("M must be >= 2");
  if (m < 1 || m > M) throw ValidationError("m must satisfy 1 <= m <= M");
  if (p < 1) throw ValidationError("p must be >= 1");
  if (n_k < 1) throw ValidationError("n_k must be >= 1");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("eta must lie in [0, 1]");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ValidationError("delta must lie in [0, 1]");
  if (n_new < 0) throw ValidationError("n_new must be >= 0");
}

std::uint64_t SimulationConfig::data_key() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "K=%d;M=%d;m=%d;p=%d;n=%d;eta=%.17g;delta=%.17g;seed=%llu", K, M, m, p, n_k, eta,
                delta, static_cast<unsigned long long>(replicate_seed));
  return fnv1a(buf);
}

Rng make_stream(std::uint64_t seed, std::uint64_t scenario_key, std::uint64_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(scenario_key), static_cast<std::uint32_t>(scenario_key >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
  return Rng(seq);
}

int fraction_count(double fraction, int p) {
  return static_cast<int>(std::floor(fraction * p + 1e-9));
}

CoefficientSet generate_coefficients(const SimulationConfig& cfg, Rng& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  CoefficientSet b(cfg.K, cfg.p);
  for (int q = 0; q < cfg.p; ++q) b(0, q) = unif(rng);
  for (int q : random_subset(cfg.p, fraction_count(cfg.eta, cfg.p), rng)) b(0, q) = 0.0;
  const int n_changed = fraction_count(cfg.delta, cfg.p);
  for (int k = 1; k < cfg.K; ++k) {
    b.set_row(k, b.row(0));
    for (int q : random_subset(cfg.p, n_changed, rng)) b(k, q) = unif(rng);
  }
  return b;
}

PartialRanking sample_partial_ranking(const Eigen::VectorXd& beta, const CovariateMatrix& x,
                                      std::span<const ObjectIndex> subset, Rng& rng) {
  std::vector<ObjectIndex> remaining(subset.begin(), subset.end());
  std::vector<double> scores(remaining.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) scores[i] = x.values().row(remaining[i]).dot(beta);
  std::vector<ObjectIndex> ordering;
  ordering.reserve(remaining.size());
  std::vector<double> w;
  while (remaining.size() > 1) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    w.resize(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += (w[i] = std::exp(scores[i] - mx));
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = 0;
    double acc = w[0];
    while (pick + 1 < w.size() && u >= acc) acc += w[++pick];
    ordering.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    scores.erase(scores.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  ordering.push_back(remaining.front());
  return PartialRanking(std::move(ordering), static_cast<std::size_t>(x.rows()));
}

SimulatedData generate_dataset(const SimulationConfig& cfg, Rng& rng) {
  cfg.validate();
  CoefficientSet truth = generate_coefficients(cfg, rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd xv(cfg.M, cfg.p);
  for (int j = 0; j < cfg.M; ++j) {
    for (int q = 0; q < cfg.p; ++q) xv(j, q) = normal(rng);
  }
  std::vector<std::string> names, labels;
  for (int q = 0; q < cfg.p; ++q) names.push_back("x" + std::to_string(q + 1));
  for (int j = 0; j < cfg.M; ++j) labels.push_back("o" + std::to_string(j + 1));
  CovariateMatrix x(std::move(xv), std::move(names));

  std::vector<RankingGroup> groups;
  for (int k = 0; k < cfg.K; ++k) {
    RankingGroup g;
    g.label = "g" + std::to_string(k + 1);
    const Eigen::VectorXd beta = truth.row(k);
    for (int i = 0; i < cfg.n_k; ++i) {
      const std::vector<int> pick = random_subset(cfg.M, cfg.m, rng);
      const std::vector<ObjectIndex> subset(pick.begin(), pick.end());
      g.rankings.push_back(sample_partial_ranking(beta, x, subset, rng));
      g.ranker_ids.push_back(std::to_string(i + 1));
    }
    groups.push_back(std::move(g));
  }

  Eigen::MatrixXd new_objects(cfg.n_new, cfg.p);
  for (int j = 0; j < cfg.n_new; ++j) {
    for (int q = 0; q < cfg.p; ++q) new_objects(j, q) = normal(rng);
  }

  ObjectCatalog catalog(labels);
  RankingDataset data(std::move(groups), static_cast<std::size_t>(cfg.M));
  RankTable true_ranks = aggregate_ranking(object_worths(truth, x.values()), labels, data.group_labels());
  return {std::move(catalog), std::move(data), std::move(x), std::move(truth), std::move(true_ranks),
          std::move(new_objects)};
}

double rmse(const CoefficientSet& truth, const CoefficientSet& estimate) {
  if (truth.groups() != estimate.groups() || truth.vars() != estimate.vars()) {
    throw ValidationError("rmse: coefficient shapes differ");
  }
  const double ss = (truth.matrix() - estimate.matrix()).squaredNorm();
  return std::sqrt(ss / static_cast<double>(truth.matrix().size()));
}

ConfusionCounts confusion(const CoefficientSet& truth, const CoefficientSet& estimate, double zero_threshold) {
  if (truth.groups() != estimate.groups() || truth.vars() != estimate.vars()) {
    throw ValidationError("f1: coefficient shapes differ");
  }
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < truth.matrix().size(); ++i) {
    const bool actual = truth.matrix()(i) != 0.0;
    const bool predicted = std::abs(estimate.matrix()(i)) >= zero_threshold;
    if (actual && predicted) ++c.tp;
    else if (!actual && predicted) ++c.fp;
    else if (actual && !predicted) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1(const CoefficientSet& truth, const CoefficientSet& estimate, double zero_threshold, F1Variant variant) {
  const ConfusionCounts c = confusion(truth, estimate, zero_threshold);
  const int denom = 2 * c.tp + c.fp + (variant == F1Variant::Standard ? c.fn : c.tn);
  return denom == 0 ? 1.0 : 2.0 * c.tp / denom;
}

double rcr(const Eigen::MatrixXi& true_ranks, const Eigen::MatrixXi& estimated_ranks,
           std::span<const Eigen::Index> columns) {
  if (true_ranks.rows() != estimated_ranks.rows() || true_ranks.cols() != estimated_ranks.cols()) {
    throw ValidationError("rcr: rank table shapes differ");
  }
  std::vector<Eigen::Index> cols(columns.begin(), columns.end());
  if (cols.empty()) {
    cols.resize(static_cast<std::size_t>(true_ranks.cols()));
    std::iota(cols.begin(), cols.end(), Eigen::Index{0});
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < true_ranks.rows(); ++k) {
    int hits = 0;
    for (Eigen::Index j : cols) hits += true_ranks(k, j) == estimated_ranks(k, j);
    total += static_cast<double>(hits) / static_cast<double>(cols.size());
  }
  return total / static_cast<double>(true_ranks.rows());
}

Eigen::MatrixXi ranks_from_coefficients(const CoefficientSet& b, const Eigen::MatrixXd& x_all) {
  const Eigen::MatrixXd scores = b.matrix() * x_all.transpose();
  Eigen::MatrixXi ranks(scores.rows(), scores.cols());
  std::vector<double> row(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index k = 0; k < scores.rows(); ++k) {
    for (Eigen::Index j = 0; j < scores.cols(); ++j) row[static_cast<std::size_t>(j)] = scores(k, j);
    const auto r = descending_ranks(row);
    for (Eigen::Index j = 0; j < scores.cols(); ++j) ranks(k, j) = r[static_cast<std::size_t>(j)];
  }
  return ranks;
}

std::map<std::vector<ObjectIndex>, double> enumerate_ranking_distribution(const Eigen::VectorXd& beta,
                                                                          const CovariateMatrix& x,
                                                                          std::span<const ObjectIndex> subset) {
  if (subset.empty() || subset.size() > 6) throw ValidationError("enumeration supports 1 <= m <= 6");
  std::vector<ObjectIndex> perm(subset.begin(), subset.end());
  std::sort(perm.begin(), perm.end());
  if (std::adjacent_find(perm.begin(), perm.end()) != perm.end()) throw ValidationError("subset has duplicates");
  std::map<std::vector<ObjectIndex>, double> out;
  do {
    double prob = 1.0;
    for (std::size_t j = 0; j < perm.size(); ++j) {
      double denom = 0.0;
      for (std::size_t l = j; l < perm.size(); ++l) denom += std::exp(x.values().row(perm[l]).dot(beta));
      prob *= std::exp(x.values().row(perm[j]).dot(beta)) / denom;
    }
    out.emplace(perm, prob);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Sfpl: return "SFPL";
    case Method::Pl: return "PL";
    case Method::Ppl: return "PPL";
  }
  return "?";
}

std::vector<Scenario> scenario_presets(const std::string& names) {
  std::vector<Scenario> out;
  std::stringstream list(names);
  std::string name;
  while (std::getline(list, name, ',')) {
    if (name.empty()) continue;
    std::vector<std::string> tok;
    std::stringstream parts(name);
    for (std::string t; std::getline(parts, t, '-');) tok.push_back(t);

    SimulationConfig base;
    std::size_t first = 1;
    std::vector<double> etas{0.25}, deltas{0.25};
    std::vector<int> ns{10, 25, 50, 100}, ps{5, 10, 25};
    bool m_fixed = false;
    if (tok[0] == "table1") {
      etas = {0.25, 0.5};
      deltas = {0.25, 0.5};
    } else if (tok[0] == "table2") {
      base.n_new = 5;
      etas = {0.25, 0.8};
    } else if (tok[0] == "appA" && tok.size() >= 2 && (tok[1] == "K2" || tok[1] == "K6")) {
      base.K = tok[1] == "K2" ? 2 : 6;
      base.n_new = 5;
      first = 2;
    } else if (tok[0] == "appA" && tok.size() >= 3 && tok[1] == "M10" && (tok[2] == "m5" || tok[2] == "m10")) {
      base.M = 10;
      base.m = tok[2] == "m5" ? 5 : 10;
      base.n_new = 5;
      ps = {5, 10};
      m_fixed = true;
      first = 3;
    } else {
      throw ValidationError("unknown scenario '" + name + "'");
    }
    for (std::size_t i = first; i < tok.size(); ++i) {
      const std::string& t = tok[i];
      auto num = [&](std::size_t skip) {
        try {
          std::size_t used = 0;
          const double v = std::stod(t.substr(skip), &used);
          if (used != t.size() - skip) throw std::invalid_argument(t);
          return v;
        } catch (const std::exception&) {
          throw ValidationError("bad scenario token '" + t + "' in '" + name + "'");
        }
      };
      if (t.rfind("new", 0) == 0) base.n_new = static_cast<int>(num(3));
      else if (t[0] == 'n') ns = {static_cast<int>(num(1))};
      else if (t[0] == 'p') ps = {static_cast<int>(num(1))};
      else if (t[0] == 'd') deltas = {num(1)};
      else if (t[0] == 'e') etas = {num(1)};
      else if (t[0] == 'K') base.K = static_cast<int>(num(1));
      else throw ValidationError("bad scenario token '" + t + "' in '" + name + "'");
    }
    for (double delta : deltas) {
      for (double eta : etas) {
        for (int p : ps) {
          for (int n : ns) {
            Scenario s;
            s.config = base;
            s.config.p = p;
            s.config.n_k = n;
            s.config.eta = eta;
            s.config.delta = delta;
            if (!m_fixed) s.config.M = p >= 25 ? p : 20;
            s.config.validate();
            s.name = tok[0] + (first > 1 ? "-" + tok[1] : "") + (first > 2 ? "-" + tok[2] : "") + "-n" +
                     std::to_string(n) + "-p" + std::to_string(p) + "-d" + fmt_g(delta) + "-e" + fmt_g(eta);
            if (s.config.K != 4 && first == 1) s.name += "-K" + std::to_string(s.config.K);
            if (s.config.n_new != 0 && tok[0] == "table1") s.name += "-new" + std::to_string(s.config.n_new);
            out.push_back(std::move(s));
          }
        }
      }
    }
  }
  if (out.empty()) throw ValidationError("no scenarios selected");
  return out;
}

ReplicateOutcome run_replicate(const Scenario& scenario, std::size_t scenario_index, int replicate,
                               const StudyOptions& options) {
  using Clock = std::chrono::steady_clock;
  ReplicateOutcome out;
  out.scenario = scenario_index;
  out.replicate = replicate;
  try {
    const SimulationConfig& cfg = scenario.config;
    Rng rng = make_stream(options.seed, cfg.data_key(), static_cast<std::uint64_t>(replicate));
    const SimulatedData sim = generate_dataset(cfg, rng);

    Eigen::MatrixXd x_all(cfg.M + cfg.n_new, cfg.p);
    x_all.topRows(cfg.M) = sim.x.values();
    x_all.bottomRows(cfg.n_new) = sim.new_objects;
    std::vector<Eigen::Index> new_cols;
    for (int j = 0; j < cfg.n_new; ++j) new_cols.push_back(cfg.M + j);
    const Eigen::MatrixXi true_all = ranks_from_coefficients(sim.truth, x_all);

    auto score = [&](Method method, const CoefficientSet& est, double seconds) {
      MetricsReport r;
      r.method = method;
      r.rmse = rmse(sim.truth, est);
      r.rcr = rcr(sim.true_ranks.ranks, ranks_from_coefficients(est, sim.x.values()));
      if (cfg.n_new > 0) r.rcr_pred = rcr(true_all, ranks_from_coefficients(est, x_all), new_cols);
      r.seconds = seconds;
      return r;
    };

    // Shared by SFPL (starting point) and PL (the comparator itself).
    const auto t_mle = Clock::now();
    const InitialEstimate mle = initial_estimate(sim.data, sim.x);
    const double mle_seconds = std::chrono::duration<double>(Clock::now() - t_mle).count();

    for (Method method : options.methods) {
      const auto t0 = Clock::now();
      if (method == Method::Sfpl) {
        GridOptions go;
        go.n_s = options.grid_n_s;
        go.n_f = options.grid_n_f;
        go.zero_threshold = options.zero_threshold;
        go.fusion_threshold = options.fusion_threshold;
        go.epsilon = options.epsilon;
        go.controls = options.controls;
        const PenaltyGrid grid = build_grid(sim.data, sim.x, go, &mle.coefficients);
        SelectOptions so;
        so.criterion = options.criterion;
        so.zero_threshold = options.zero_threshold;
        so.epsilon = options.epsilon;
        so.controls = options.controls;
        so.keep_fits = false;
        const SelectionResult sel = select(sim.data, sim.x, grid, so, &mle.coefficients);
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count() + mle_seconds;
        MetricsReport r = score(method, sel.chosen_fit().coefficients, secs);
        r.f1 = f1(sim.truth, sel.chosen_fit().coefficients, options.zero_threshold, options.f1_variant);
        r.lambda_s = sel.chosen_score().cell.lambda_s;
        r.lambda_f = sel.chosen_score().cell.lambda_f;
        r.df = sel.chosen_score().df;
        out.metrics.push_back(r);
      } else if (method == Method::Pl) {
        out.metrics.push_back(score(method, mle.coefficients, mle_seconds));
      } else {
        const RankingDataset pooled = pool_groups(sim.data);
        const GroupFit gf = fit_group_mle(pooled.group(0).rankings, sim.x);
        CoefficientSet est(cfg.K, cfg.p);
        for (int k = 0; k < cfg.K; ++k) est.set_row(k, gf.beta);
        out.metrics.push_back(score(method, est, std::chrono::duration<double>(Clock::now() - t0).count()));
      }
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.metrics.clear();
  }
  return out;
}

SummaryStat summarize(std::span<const double> values) {
  SummaryStat s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

StudyResult run_study(const std::vector<Scenario>& scenarios, const StudyOptions& options) {
  if (options.replicates < 1) throw ValidationError("replicates must be >= 1");
  if (options.methods.empty()) throw ValidationError("no methods requested");
  for (const auto& s : scenarios) s.config.validate();
  StudyResult res;
  res.scenarios = scenarios;
  const std::size_t reps = static_cast<std::size_t>(options.replicates);
  res.replicates.resize(scenarios.size() * reps);
  parallel_for(res.replicates.size(), options.threads, [&](std::size_t i) {
    const std::size_t s = i / reps;
    res.replicates[i] = run_replicate(scenarios[s], s, static_cast<int>(i % reps), options);
  });

  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    for (std::size_t mi = 0; mi < options.methods.size(); ++mi) {
      StudyRow row;
      row.scenario = s;
      row.method = options.methods[mi];
      std::vector<double> rm, f, rc, rp, sec;
      for (std::size_t r = 0; r < reps; ++r) {
        const ReplicateOutcome& o = res.replicates[s * reps + r];
        if (!o.ok) {
          ++row.replicates_failed;
          continue;
        }
        ++row.replicates_ok;
        const MetricsReport& m = o.metrics[mi];
        rm.push_back(m.rmse);
        if (m.f1) f.push_back(*m.f1);
        rc.push_back(m.rcr);
        if (m.rcr_pred) rp.push_back(*m.rcr_pred);
        sec.push_back(m.seconds);
      }
      row.rmse = summarize(rm);
      row.f1 = summarize(f);
      row.rcr = summarize(rc);
      row.rcr_pred = summarize(rp);
      row.seconds = summarize(sec);
      res.rows.push_back(row);
    }
  }
  return res;
}

namespace {

void write_scenario_cells(std::ostream& out, const Scenario& s) {
  const auto& c = s.config;
  out << s.name << ',' << c.K << ',' << c.M << ',' << c.m << ',' << c.p << ',' << c.n_k << ',' << fmt_g(c.eta) << ','
      << fmt_g(c.delta) << ',' << c.n_new;
}

std::string stat_cells(const SummaryStat& s) {
  if (s.count == 0) return "NA,NA";
  return fmt(s.mean) + "," + (s.count > 1 ? fmt(s.se) : std::string("NA"));
}

}  // namespace

void write_study_table(std::ostream& out, const StudyResult& result, bool include_timing) {
  out << "scenario,K,M,m,p,n_k,eta,delta,n_new,replicates,failed,method,rmse_mean,rmse_se,f1_mean,f1_se,"
         "rcr_mean,rcr_se,rcr_pred_mean,rcr_pred_se,seconds_mean\n";
  for (const StudyRow& row : result.rows) {
    write_scenario_cells(out, result.scenarios[row.scenario]);
    out << ',' << row.replicates_ok << ',' << row.replicates_failed << ',' << method_name(row.method) << ','
        << stat_cells(row.rmse) << ',' << stat_cells(row.f1) << ',' << stat_cells(row.rcr) << ','
        << stat_cells(row.rcr_pred) << ','
        << (include_timing && row.seconds.count > 0 ? fmt(row.seconds.mean) : std::string("NA")) << '\n';
  }
}

void write_replicate_table(std::ostream& out, const StudyResult& result, bool include_timing) {
  out << "scenario,replicate,ok,method,rmse,f1,rcr,rcr_pred,lambda_s,lambda_f,df,seconds,error\n";
  for (const ReplicateOutcome& o : result.replicates) {
    const std::string& name = result.scenarios[o.scenario].name;
    if (!o.ok) {
      std::string err = o.error;
      std::replace(err.begin(), err.end(), ',', ';');
      out << name << ',' << o.replicate << ",false,NA,NA,NA,NA,NA,NA,NA,NA,NA," << err << '\n';
      continue;
    }
    for (const MetricsReport& m : o.metrics) {
      out << name << ',' << o.replicate << ",true," << method_name(m.method) << ',' << fmt(m.rmse) << ','
          << (m.f1 ? fmt(*m.f1) : "NA") << ',' << fmt(m.rcr) << ',' << (m.rcr_pred ? fmt(*m.rcr_pred) : "NA") << ',';
      if (m.method == Method::Sfpl) out << fmt_g(m.lambda_s) << ',' << fmt_g(m.lambda_f) << ',' << m.df;
      else out << "NA,NA,NA";
      out << ',' << (include_timing ? fmt(m.seconds) : std::string("NA")) << ",\n";
    }
  }
}

}  // namespace sfpl
