#include "cli/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "cli/manifest.hpp"
#include "sfpl/csv.hpp"
#include "sfpl/errors.hpp"
#include "sfpl/kernels.hpp"
#include "sfpl/prediction.hpp"
#include "sfpl/selection.hpp"
#include "sfpl/simulation.hpp"

namespace sfpl::cli {
namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

struct Common {
  std::string rankings;
  std::string covariates;
  std::string out;
  std::uint64_t seed = 1;
  int threads = 0;
  bool standardize = true;
  double zero_threshold = 1e-4;
  double epsilon = 1e-5;
  double xi = 1e-8;
  int max_iter = 500;
  bool force = false;
  std::string tau;
};

struct FitArgs {
  double lambda_s = std::numeric_limits<double>::quiet_NaN();
  double lambda_f = std::numeric_limits<double>::quiet_NaN();
};

struct SelectArgs {
  std::string criterion;
  std::vector<double> grid_s;
  std::vector<double> grid_f;
  int n_s = 10;
  int n_f = 10;
  double fusion_threshold = 1e-4;
};

struct PredictArgs {
  std::string fit_dir;
  std::string new_covariates;
};

struct SimulateArgs {
  std::string scenario;
  int replicates = 50;
  std::string criterion = "bic";
  std::vector<std::string> methods{"SFPL", "PL", "PPL"};
  int n_s = 10;
  int n_f = 10;
  bool f1_literal = false;
  bool timing = false;
  SimulationConfig cell;
};

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("SFPL_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError("SFPL_THREADS must be a positive integer");
  }
  return 1;
}

void check_common(const Common& c) {
  if (!(c.zero_threshold > 0.0)) throw ValidationError("--zero-threshold must be > 0");
  if (!(c.epsilon > 0.0)) throw ValidationError("--epsilon must be > 0");
  if (!(c.xi > 0.0)) throw ValidationError("--xi must be > 0");
  if (c.max_iter < 1) throw ValidationError("--max-iter must be >= 1");
}

json common_options(const Common& c, int threads) {
  return json{{"rankings", c.rankings},      {"covariates", c.covariates}, {"out", c.out},
              {"seed", c.seed},              {"threads", threads},         {"standardize", c.standardize},
              {"zero_threshold", c.zero_threshold}, {"epsilon", c.epsilon}, {"xi", c.xi},
              {"max_iter", c.max_iter},      {"force", c.force},           {"tau", c.tau}};
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ValidationError("--out is required");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

struct Inputs {
  ObjectCatalog catalog;
  CovariateMatrix raw;
  CovariateMatrix x;  // as fitted
  RankingDataset data;
  IdentifiabilityReport report;
  std::vector<std::string> warnings;
};

Inputs load_inputs(const Common& c, bool need_rankings, std::ostream& out) {
  if (c.covariates.empty()) throw ValidationError("--covariates is required");
  if (need_rankings && c.rankings.empty()) throw ValidationError("--rankings is required");
  Inputs in;
  CovariateTable table = load_covariates(c.covariates);
  in.catalog = table.catalog;
  in.raw = table.covariates;
  if (!c.rankings.empty()) in.data = load_rankings(c.rankings, in.catalog);
  in.report = check_identifiability(in.raw);
  if (!in.report.pass) {
    std::ostringstream msg;
    msg << "covariate matrix has rank " << in.report.rank << " but " << in.report.columns
        << " columns (need rank(X) = p <= M with M = " << in.raw.rows() << ")";
    if (!c.force) throw IdentifiabilityError(msg.str());
    in.warnings.push_back(msg.str() + "; continuing because of --force");
    out << "warning: " << in.warnings.back() << '\n';
  }
  in.x = c.standardize ? standardize_covariates(in.raw) : in.raw;
  if (!c.rankings.empty()) {
    for (const auto& w : coverage_warnings(in.data, in.catalog)) {
      in.warnings.push_back(w);
      out << "warning: " << w << '\n';
    }
  }
  return in;
}

Eigen::MatrixXd load_tau(const std::string& path, const RankingDataset& data) {
  if (path.empty()) return {};
  const csv::Table t = csv::read_file(path);
  const auto labels = data.group_labels();
  const Eigen::Index k = static_cast<Eigen::Index>(labels.size());
  if (t.header.size() != labels.size() + 1 || t.rows.size() != labels.size()) {
    throw ValidationError(path + ": tau must be a " + std::to_string(k) + " x " + std::to_string(k) +
                          " table with a header row and a group column");
  }
  auto index_of = [&](const std::string& label) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) return static_cast<Eigen::Index>(i);
    }
    throw ValidationError(path + ": unknown group '" + label + "' in tau");
  };
  std::vector<Eigen::Index> col(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) col[j] = index_of(t.header[j + 1]);
  Eigen::MatrixXd tau = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const Eigen::Index kr = index_of(t.rows[r][0]);
    for (std::size_t j = 0; j < labels.size(); ++j) {
      tau(kr, col[j]) = csv::parse_double(t.rows[r][j + 1], path + " line " + std::to_string(t.lines[r]));
    }
  }
  if (tau.hasNaN()) throw ValidationError(path + ": tau rows must name every group once");
  return tau;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const json& j, Eigen::Index cols, const std::string& what) {
  if (!j.is_array()) throw ValidationError("fit.json: '" + what + "' must be an array of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != cols) {
      throw ValidationError("fit.json: row " + std::to_string(i) + " of '" + what + "' has the wrong length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = j[i][c].get<double>();
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd raw_scale(const Eigen::VectorXd& beta, const CovariateMatrix& x) {
  if (!x.standardized()) return beta;
  return beta.cwiseQuotient(x.column_sds());
}

void write_coefficients(const std::string& path, const CoefficientSet& b, const Inputs& in) {
  std::ofstream f = open_out(path);
  f << "group,variable,beta_std,beta_raw\n";
  const auto labels = in.data.group_labels();
  for (Eigen::Index k = 0; k < b.groups(); ++k) {
    const Eigen::VectorXd raw = raw_scale(b.row(k), in.x);
    for (Eigen::Index q = 0; q < b.vars(); ++q) {
      f << labels[static_cast<std::size_t>(k)] << ',' << in.x.variable_names()[static_cast<std::size_t>(q)] << ','
        << csv::format_double(b(k, q)) << ',' << csv::format_double(raw(q)) << '\n';
    }
  }
}

json fit_json(const FitResult& f, const Inputs& in, double zero_threshold, double xi) {
  json j;
  j["lambda_s"] = f.config.lambda_s;
  j["lambda_f"] = f.config.lambda_f;
  j["epsilon"] = f.config.epsilon;
  j["xi"] = xi;
  j["zero_threshold"] = zero_threshold;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  j["final_step_size"] = f.final_step_size;
  j["df"] = effective_df(f.coefficients, zero_threshold);
  j["loglik"] = f.loglik;
  j["objective"] = f.objective;
  j["objective_trace"] = f.objective_trace;
  j["initial_converged"] = f.initial_converged;
  json warnings = in.warnings;
  for (const auto& w : f.warnings) warnings.push_back(w);
  j["warnings"] = warnings;
  json model;
  model["groups"] = in.data.group_labels();
  model["objects"] = in.catalog.labels();
  model["variables"] = in.x.variable_names();
  model["standardized"] = in.x.standardized();
  if (in.x.standardized()) {
    model["means"] = vector_json(in.x.column_means());
    model["sds"] = vector_json(in.x.column_sds());
  }
  model["x"] = matrix_json(in.x.values());
  model["coefficients"] = matrix_json(f.coefficients.matrix());
  j["model"] = model;
  return j;
}

void write_fit_outputs(const std::string& dir, const FitResult& f, const Inputs& in, const Common& c) {
  write_coefficients(dir + "/coefficients.csv", f.coefficients, in);
  std::ofstream j = open_out(dir + "/fit.json");
  j << fit_json(f, in, c.zero_threshold, c.xi).dump(2) << '\n';
}

Manifest start_manifest(const std::string& command, const Common& c, int threads) {
  Manifest m;
  m.command = command;
  m.options = common_options(c, threads);
  m.seed = c.seed;
  m.started_utc = utc_timestamp();
  m.thresholds = {{"zero_threshold", c.zero_threshold}, {"epsilon", c.epsilon}, {"xi", c.xi}};
  for (const std::string* p : {&c.rankings, &c.covariates, &c.tau}) {
    if (!p->empty()) m.add_input(*p);
  }
  return m;
}

void report_fit(std::ostream& out, const FitResult& f, const Inputs& in, double zero_threshold) {
  out << "groups " << in.data.num_groups() << ", objects " << in.catalog.size() << ", variables " << in.x.cols()
      << ", rankers " << in.data.total_rankers() << '\n';
  out << "lambda_s " << f.config.lambda_s << ", lambda_f " << f.config.lambda_f << ": objective " << f.objective
      << ", -loglik " << f.loglik << ", df " << effective_df(f.coefficients, zero_threshold) << ", iterations "
      << f.iterations << (f.converged ? " (converged)" : " (NOT converged)") << '\n';
}

int cmd_validate(const Common& c, std::ostream& out) {
  const auto t0 = Clock::now();
  const Inputs in = load_inputs(c, false, out);
  out << "objects " << in.catalog.size() << ", variables " << in.raw.cols() << ", rank " << in.report.rank
      << (in.report.pass ? " (identifiable)" : " (NOT identifiable)") << '\n';
  json groups = json::array();
  if (!c.rankings.empty()) {
    out << "groups " << in.data.num_groups() << ", rankers " << in.data.total_rankers() << '\n';
    for (const auto& g : catalog_coverage(in.data)) {
      out << "  " << g.group << ": " << g.ranked_objects << "/" << in.catalog.size() << " catalog objects ranked\n";
      groups.push_back({{"group", g.group}, {"ranked_objects", g.ranked_objects}, {"missing", g.missing.size()}});
    }
  }
  if (!c.out.empty()) {
    ensure_dir(c.out);
    json v{{"objects", in.catalog.size()},
           {"variables", in.raw.cols()},
           {"rank", in.report.rank},
           {"identifiable", in.report.pass},
           {"singular_values", vector_json(in.report.singular_values)},
           {"coverage", groups},
           {"warnings", in.warnings}};
    open_out(c.out + "/validation.json") << v.dump(2) << '\n';
    Manifest m = start_manifest("validate", c, 1);
    m.outputs = {"validation.json"};
    m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    m.write(c.out);
  }
  return kOk;
}

FitControls controls_from(const Common& c) {
  FitControls fc;
  fc.xi = c.xi;
  fc.max_iter = c.max_iter;
  return fc;
}

int cmd_fit(const Common& c, const FitArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  check_common(c);
  if (std::isnan(a.lambda_s)) throw ValidationError("--lambda-s is required");
  if (std::isnan(a.lambda_f)) throw ValidationError("--lambda-f is required");
  if (!(a.lambda_s >= 0.0) || !std::isfinite(a.lambda_s)) throw ValidationError("--lambda-s must be a finite number >= 0");
  if (!(a.lambda_f >= 0.0) || !std::isfinite(a.lambda_f)) throw ValidationError("--lambda-f must be a finite number >= 0");
  const int threads = resolve_threads(c.threads);
  ensure_dir(c.out);
  const Inputs in = load_inputs(c, true, out);
  PenaltyConfig cfg;
  cfg.lambda_s = a.lambda_s;
  cfg.lambda_f = a.lambda_f;
  cfg.epsilon = c.epsilon;
  cfg.tau = load_tau(c.tau, in.data);
  cfg.validate(static_cast<Eigen::Index>(in.data.num_groups()));

  const FitResult f = fit(in.data, in.x, cfg, controls_from(c));
  write_fit_outputs(c.out, f, in, c);
  report_fit(out, f, in, c.zero_threshold);

  Manifest m = start_manifest("fit", c, threads);
  m.options["lambda_s"] = a.lambda_s;
  m.options["lambda_f"] = a.lambda_f;
  m.grid = {{"lambda_s", json::array({a.lambda_s})}, {"lambda_f", json::array({a.lambda_f})}};
  m.outputs = {"coefficients.csv", "fit.json"};
  m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  m.write(c.out);
  return f.converged ? kOk : kNotConverged;
}

std::string na_or(double v) { return std::isfinite(v) ? csv::format_double(v) : "NA"; }

int cmd_select(const Common& c, const SelectArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  check_common(c);
  if (a.criterion.empty()) throw ValidationError("--criterion is required (aic or bic)");
  const Criterion criterion = parse_criterion(a.criterion);
  if (a.grid_s.empty() != a.grid_f.empty()) throw ValidationError("--grid-s and --grid-f must be given together");
  if (a.n_s < 1 || a.n_f < 1) throw ValidationError("--n-s and --n-f must be >= 1");
  if (!(a.fusion_threshold > 0.0)) throw ValidationError("--fusion-threshold must be > 0");
  const int threads = resolve_threads(c.threads);
  ensure_dir(c.out);
  const Inputs in = load_inputs(c, true, out);
  const Eigen::MatrixXd tau = load_tau(c.tau, in.data);
  {
    PenaltyConfig probe;
    probe.epsilon = c.epsilon;
    probe.tau = tau;
    probe.validate(static_cast<Eigen::Index>(in.data.num_groups()));
  }

  const InitialEstimate mle = initial_estimate(in.data, in.x);
  PenaltyGrid grid;
  if (!a.grid_s.empty()) {
    grid.lambda_s_values = a.grid_s;
    grid.lambda_f_values = a.grid_f;
    grid.lambda_s_max = a.grid_s.back();
    grid.lambda_f_max = a.grid_f.back();
    try {
      grid.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("--grid-s/--grid-f: ") + e.what());
    }
  } else {
    GridOptions go;
    go.n_s = a.n_s;
    go.n_f = a.n_f;
    go.zero_threshold = c.zero_threshold;
    go.fusion_threshold = a.fusion_threshold;
    go.epsilon = c.epsilon;
    go.tau = tau;
    go.controls = controls_from(c);
    grid = build_grid(in.data, in.x, go, &mle.coefficients);
  }

  SelectOptions so;
  so.criterion = criterion;
  so.zero_threshold = c.zero_threshold;
  so.epsilon = c.epsilon;
  so.tau = tau;
  so.controls = controls_from(c);
  so.threads = threads;
  so.keep_fits = false;
  const SelectionResult sel = select(in.data, in.x, grid, so, &mle.coefficients);

  {
    std::ofstream t = open_out(c.out + "/ic_table.csv");
    t << "lambda_s,lambda_f,df,aic,bic\n";
    for (const CellScore& s : sel.scores) {
      t << csv::format_double(s.cell.lambda_s) << ',' << csv::format_double(s.cell.lambda_f) << ',';
      if (s.ok) t << s.df << ',' << na_or(s.aic) << ',' << na_or(s.bic) << '\n';
      else t << "NA,NA,NA\n";
    }
  }
  const FitResult& f = sel.chosen_fit();
  write_fit_outputs(c.out, f, in, c);
  out << "grid " << grid.lambda_s_values.size() << " x " << grid.lambda_f_values.size() << ", criterion "
      << criterion_name(criterion) << ", chosen lambda_s " << sel.chosen_score().cell.lambda_s << ", lambda_f "
      << sel.chosen_score().cell.lambda_f << '\n';
  int failed = 0;
  for (const auto& s : sel.scores) failed += !s.ok;
  if (failed > 0) out << "warning: " << failed << " grid cells failed to fit and were skipped\n";
  report_fit(out, f, in, c.zero_threshold);

  Manifest m = start_manifest("select", c, threads);
  m.options["criterion"] = criterion_name(criterion);
  m.options["fusion_threshold"] = a.fusion_threshold;
  m.grid = {{"lambda_s", grid.lambda_s_values},
            {"lambda_f", grid.lambda_f_values},
            {"lambda_s_max", grid.lambda_s_max},
            {"lambda_f_max", grid.lambda_f_max},
            {"construction", grid.construction},
            {"chosen", {{"lambda_s", sel.chosen_score().cell.lambda_s}, {"lambda_f", sel.chosen_score().cell.lambda_f}}}};
  m.thresholds["fusion_threshold"] = a.fusion_threshold;
  m.outputs = {"ic_table.csv", "coefficients.csv", "fit.json"};
  m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  m.write(c.out);
  return f.converged ? kOk : kNotConverged;
}

int cmd_predict(const Common& c, const PredictArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  if (a.fit_dir.empty()) throw ValidationError("--fit is required");
  if (a.new_covariates.empty()) throw ValidationError("--new-covariates is required");
  ensure_dir(c.out);
  const std::string fit_path = a.fit_dir + "/fit.json";
  std::ifstream fin(fit_path);
  if (!fin) throw ValidationError("cannot read '" + fit_path + "'");
  json j;
  try {
    j = json::parse(fin);
  } catch (const std::exception& e) {
    throw ValidationError(fit_path + ": " + e.what());
  }
  if (!j.contains("model")) throw ValidationError(fit_path + ": no model section");
  const json& model = j["model"];
  try {
    const auto groups = model.at("groups").get<std::vector<std::string>>();
    const auto objects = model.at("objects").get<std::vector<std::string>>();
    const auto variables = model.at("variables").get<std::vector<std::string>>();
    const Eigen::Index p = static_cast<Eigen::Index>(variables.size());
    const CoefficientSet b(json_matrix(model.at("coefficients"), p, "coefficients"));
    Eigen::MatrixXd xv = json_matrix(model.at("x"), p, "x");
    CovariateMatrix train = [&] {
      if (!model.at("standardized").get<bool>()) return CovariateMatrix(xv, variables);
      const auto means = model.at("means").get<std::vector<double>>();
      const auto sds = model.at("sds").get<std::vector<double>>();
      return make_standardized(xv, variables, Eigen::Map<const Eigen::VectorXd>(means.data(), p),
                               Eigen::Map<const Eigen::VectorXd>(sds.data(), p));
    }();
    const ObjectCatalog catalog(objects);

    const csv::Table t = csv::read_file(a.new_covariates);
    if (t.header.empty() || t.header[0] != "object") {
      throw ValidationError(a.new_covariates + ": first column must be 'object'");
    }
    std::vector<Eigen::Index> col(static_cast<std::size_t>(p), -1);
    for (std::size_t h = 1; h < t.header.size(); ++h) {
      Eigen::Index q = -1;
      for (Eigen::Index v = 0; v < p; ++v) {
        if (variables[static_cast<std::size_t>(v)] == t.header[h]) q = v;
      }
      if (q < 0) throw ValidationError(a.new_covariates + ": unknown variable column '" + t.header[h] + "'");
      if (col[static_cast<std::size_t>(q)] >= 0) {
        throw ValidationError(a.new_covariates + ": duplicate variable column '" + t.header[h] + "'");
      }
      col[static_cast<std::size_t>(q)] = static_cast<Eigen::Index>(h);
    }
    for (Eigen::Index q = 0; q < p; ++q) {
      if (col[static_cast<std::size_t>(q)] < 0) {
        throw ValidationError(a.new_covariates + ": missing variable column '" + variables[static_cast<std::size_t>(q)] +
                              "'");
      }
    }
    NewObjects added;
    added.raw.resize(static_cast<Eigen::Index>(t.rows.size()), p);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      added.labels.push_back(t.rows[r][0]);
      for (Eigen::Index q = 0; q < p; ++q) {
        added.raw(static_cast<Eigen::Index>(r), q) =
            csv::parse_double(t.rows[r][static_cast<std::size_t>(col[static_cast<std::size_t>(q)])],
                              a.new_covariates + " line " + std::to_string(t.lines[r]));
      }
    }
    const RankTable table = predict_new(b, train, catalog, added, groups);
    std::ofstream rf = open_out(c.out + "/ranks.csv");
    write_rank_table(rf, table);
    out << "ranked " << catalog.size() << " catalog and " << added.labels.size() << " new objects for "
        << groups.size() << " groups\n";
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fit_path + ": " + e.what());
  }

  Manifest m;
  m.command = "predict";
  m.options = {{"fit", a.fit_dir}, {"new_covariates", a.new_covariates}, {"out", c.out}};
  m.seed = c.seed;
  m.started_utc = utc_timestamp();
  m.add_input(fit_path);
  m.add_input(a.new_covariates);
  m.outputs = {"ranks.csv"};
  m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  m.write(c.out);
  return kOk;
}

int cmd_simulate(const Common& c, const SimulateArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  if (a.replicates < 1) throw ValidationError("--replicates must be >= 1");
  if (!(c.zero_threshold > 0.0)) throw ValidationError("--zero-threshold must be > 0");
  if (a.n_s < 1 || a.n_f < 1) throw ValidationError("--n-s and --n-f must be >= 1");
  const int threads = resolve_threads(c.threads);
  ensure_dir(c.out);

  std::vector<Scenario> scenarios;
  if (!a.scenario.empty()) {
    scenarios = scenario_presets(a.scenario);
  } else {
    Scenario s;
    s.config = a.cell;
    s.config.validate();
    char buf[160];
    std::snprintf(buf, sizeof(buf), "custom-K%d-M%d-m%d-p%d-n%d-e%g-d%g-new%d", s.config.K, s.config.M, s.config.m,
                  s.config.p, s.config.n_k, s.config.eta, s.config.delta, s.config.n_new);
    s.name = buf;
    scenarios.push_back(s);
  }

  StudyOptions so;
  so.replicates = a.replicates;
  so.seed = c.seed;
  so.threads = threads;
  so.criterion = parse_criterion(a.criterion);
  so.grid_n_s = a.n_s;
  so.grid_n_f = a.n_f;
  so.zero_threshold = c.zero_threshold;
  so.epsilon = c.epsilon;
  so.controls = controls_from(c);
  so.f1_variant = a.f1_literal ? F1Variant::Literal : F1Variant::Standard;
  so.methods.clear();
  for (const auto& name : a.methods) {
    if (name == "SFPL" || name == "sfpl") so.methods.push_back(Method::Sfpl);
    else if (name == "PL" || name == "pl") so.methods.push_back(Method::Pl);
    else if (name == "PPL" || name == "ppl") so.methods.push_back(Method::Ppl);
    else throw ValidationError("--methods: unknown method '" + name + "'");
  }

  const StudyResult res = run_study(scenarios, so);
  {
    std::ofstream f = open_out(c.out + "/study.csv");
    write_study_table(f, res, a.timing);
  }
  {
    std::ofstream f = open_out(c.out + "/replicates.csv");
    write_replicate_table(f, res, a.timing);
  }
  int failed = 0;
  for (const auto& r : res.replicates) failed += !r.ok;
  out << scenarios.size() << " scenarios x " << a.replicates << " replicates";
  if (failed > 0) out << ", " << failed << " failed";
  out << "\n";
  write_study_table(out, res, a.timing);

  Manifest m;
  m.command = "simulate";
  m.options = {{"scenario", a.scenario},
               {"replicates", a.replicates},
               {"seed", c.seed},
               {"threads", threads},
               {"criterion", a.criterion},
               {"methods", a.methods},
               {"n_s", a.n_s},
               {"n_f", a.n_f},
               {"f1", a.f1_literal ? "literal" : "standard"},
               {"timing", a.timing},
               {"epsilon", c.epsilon},
               {"xi", c.xi},
               {"max_iter", c.max_iter},
               {"simd", kernels::isa_name(kernels::active().isa)}};
  json cells = json::array();
  for (const auto& s : scenarios) {
    const auto& k = s.config;
    cells.push_back({{"name", s.name}, {"K", k.K}, {"M", k.M}, {"m", k.m}, {"p", k.p}, {"n_k", k.n_k},
                     {"eta", k.eta}, {"delta", k.delta}, {"n_new", k.n_new}});
  }
  m.options["scenarios"] = cells;
  m.seed = c.seed;
  m.started_utc = utc_timestamp();
  m.grid = {{"n_s", a.n_s}, {"n_f", a.n_f}, {"construction", "per replicate, doubling to the endpoint property"}};
  m.thresholds = {{"zero_threshold", c.zero_threshold}, {"fusion_threshold", so.fusion_threshold},
                  {"epsilon", c.epsilon}, {"xi", c.xi}};
  m.outputs = {"study.csv", "replicates.csv"};
  m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  m.write(c.out);
  return kOk;
}

void add_common(CLI::App* app, Common& c, bool rankings, bool model_flags) {
  app->add_option("--covariates", c.covariates, "Object covariates (object,<var>...)");
  if (rankings) app->add_option("--rankings", c.rankings, "Rankings (group,ranker,position,object)");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--seed", c.seed, "Seed recorded in the manifest (simulate: RNG seed)");
  app->add_option("--threads", c.threads, "Worker threads (default: SFPL_THREADS or 1)");
  if (model_flags) {
    app->add_flag("--standardize,!--no-standardize", c.standardize, "Z-score covariates before fitting (default on)");
    app->add_option("--tau", c.tau, "K x K fusion weight table");
    app->add_flag("--force", c.force, "Proceed when the covariate matrix is rank deficient");
  }
  app->add_option("--zero-threshold", c.zero_threshold, "|beta| below this counts as zero");
  app->add_option("--epsilon", c.epsilon, "Penalty smoothing constant");
  app->add_option("--xi", c.xi, "Relative objective change for convergence");
  app->add_option("--max-iter", c.max_iter, "Maximum MM iterations");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse fused Plackett-Luce models for grouped partial rankings", "sfpl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SFPL_VERSION);

  Common c;
  FitArgs fa;
  SelectArgs sa;
  PredictArgs pa;
  SimulateArgs ma;

  CLI::App* validate = app.add_subcommand("validate", "Check input files and identifiability without fitting");
  add_common(validate, c, true, false);
  validate->add_flag("--force", c.force, "Report rank deficiency without failing");

  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit at one (lambda_s, lambda_f)");
  add_common(fit_cmd, c, true, true);
  fit_cmd->add_option("--lambda-s", fa.lambda_s, "Sparsity penalty");
  fit_cmd->add_option("--lambda-f", fa.lambda_f, "Fusion penalty");

  CLI::App* select_cmd = app.add_subcommand("select", "Fit a penalty grid and select by AIC or BIC");
  add_common(select_cmd, c, true, true);
  select_cmd->add_option("--criterion", sa.criterion, "aic or bic (required)");
  select_cmd->add_option("--grid-s", sa.grid_s, "Explicit lambda_s axis")->delimiter(',');
  select_cmd->add_option("--grid-f", sa.grid_f, "Explicit lambda_f axis")->delimiter(',');
  select_cmd->add_option("--n-s", sa.n_s, "lambda_s axis size including 0");
  select_cmd->add_option("--n-f", sa.n_f, "lambda_f axis size including 0");
  select_cmd->add_option("--fusion-threshold", sa.fusion_threshold, "Pairwise difference treated as fused");

  CLI::App* predict_cmd = app.add_subcommand("predict", "Rank catalog and new objects from a saved fit");
  predict_cmd->add_option("--fit", pa.fit_dir, "Directory holding fit.json");
  predict_cmd->add_option("--new-covariates", pa.new_covariates, "Covariates of new objects (object,<var>...)");
  predict_cmd->add_option("--out", c.out, "Output directory");
  predict_cmd->add_option("--seed", c.seed, "Seed recorded in the manifest");

  CLI::App* sim = app.add_subcommand("simulate", "Run the simulation study");
  sim->add_option("--out", c.out, "Output directory");
  sim->add_option("--seed", c.seed, "Base RNG seed");
  sim->add_option("--threads", c.threads, "Worker threads (default: SFPL_THREADS or 1)");
  sim->add_option("--zero-threshold", c.zero_threshold, "|beta| below this counts as zero");
  sim->add_option("--epsilon", c.epsilon, "Penalty smoothing constant");
  sim->add_option("--xi", c.xi, "Relative objective change for convergence");
  sim->add_option("--max-iter", c.max_iter, "Maximum MM iterations");
  sim->add_option("--scenario", ma.scenario, "Preset family or cell, comma separated");
  sim->add_option("--replicates", ma.replicates, "Replicates per scenario");
  sim->add_option("--criterion", ma.criterion, "aic or bic");
  sim->add_option("--methods", ma.methods, "Subset of SFPL,PL,PPL")->delimiter(',');
  sim->add_option("--n-s", ma.n_s, "lambda_s axis size including 0");
  sim->add_option("--n-f", ma.n_f, "lambda_f axis size including 0");
  sim->add_flag("--f1-literal", ma.f1_literal, "Score F1 as 2tp/(2tp+fp+tn)");
  sim->add_flag("--timing", ma.timing, "Write wall-clock seconds (output no longer byte-stable)");
  sim->add_option("--K", ma.cell.K, "Groups (no --scenario)");
  sim->add_option("--M", ma.cell.M, "Objects");
  sim->add_option("--m", ma.cell.m, "Objects per ranking");
  sim->add_option("--p", ma.cell.p, "Variables");
  sim->add_option("--n", ma.cell.n_k, "Rankers per group");
  sim->add_option("--eta", ma.cell.eta, "Zeroed fraction");
  sim->add_option("--delta", ma.cell.delta, "Heterogeneous fraction");
  sim->add_option("--n-new", ma.cell.n_new, "Held-out objects");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << SFPL_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (validate->parsed()) return cmd_validate(c, out);
    if (fit_cmd->parsed()) return cmd_fit(c, fa, out);
    if (select_cmd->parsed()) return cmd_select(c, sa, out);
    if (predict_cmd->parsed()) return cmd_predict(c, pa, out);
    if (sim->parsed()) return cmd_simulate(c, ma, out);
  } catch (const IdentifiabilityError& e) {
    err << "error: " << e.what() << " (use --force to override)\n";
    return kIdentifiability;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericalError& e) {
    err << "error: numerical failure: " << e.what() << '\n';
    return kNotConverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kValidation;
}

}  // namespace sfpl::cli
