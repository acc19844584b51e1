#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "cli/commands.hpp"
#include "oracles.hpp"
#include "sfpl/csv.hpp"

namespace fs = std::filesystem;
using namespace sfpl;

namespace {

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) {
    root = fs::temp_directory_path() / ("sfpl_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string path(const std::string& leaf) const { return (root / leaf).string(); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (std::getenv("SFPL_TEST_VERBOSE")) std::cerr << err.str();
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_covariates(const std::string& path, const Eigen::MatrixXd& x) {
  std::ofstream f(path);
  f << "object";
  for (Eigen::Index q = 0; q < x.cols(); ++q) f << ",v" << q;
  f << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    f << "o" << i;
    for (Eigen::Index q = 0; q < x.cols(); ++q) f << ',' << csv::format_double(x(i, q));
    f << '\n';
  }
}

ObjectCatalog catalog_of(Eigen::Index m) {
  std::vector<std::string> l;
  for (Eigen::Index i = 0; i < m; ++i) l.push_back("o" + std::to_string(i));
  return ObjectCatalog(l);
}

// coefficients.csv -> K x p (beta_std column)
Eigen::MatrixXd read_coefficients(const std::string& path, int k, int p, const char* column = "beta_std") {
  const csv::Table t = csv::read_file(path);
  const int c = t.column(column);
  REQUIRE(c >= 0);
  REQUIRE(t.rows.size() == static_cast<std::size_t>(k * p));
  Eigen::MatrixXd b(k, p);
  for (int r = 0; r < k * p; ++r) b(r / p, r % p) = csv::parse_double(t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)], "");
  return b;
}

struct Files {
  std::string cov, rank;
  oracle::Instance inst;
};

Files make_files(const Workspace& ws, std::uint64_t seed, int k = 2, int m_objects = 12, int p = 3, int n = 50) {
  std::mt19937_64 rng(seed);
  Files f{ws.path("cov.csv"), ws.path("rank.csv"), oracle::random_instance(rng, k, m_objects, 3, p, n)};
  write_covariates(f.cov, f.inst.x.values());
  std::ofstream r(f.rank);
  write_rankings(r, f.inst.data, catalog_of(m_objects));
  return f;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  Workspace ws("usage");
  const Files f = make_files(ws, 1);
  CHECK(run({}).code == cli::kValidation);
  CHECK(run({"frobnicate"}).code == cli::kValidation);
  const Run neg = run({"fit", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("o"), "--lambda-f", "0",
                       "--lambda-s", "-1"});
  CHECK(neg.code == cli::kValidation);
  CHECK(neg.err.find("--lambda-s") != std::string::npos);
  CHECK(run({"select", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("o")}).code == cli::kValidation);
  CHECK(run({"fit", "--rankings", ws.path("missing.csv"), "--covariates", f.cov, "--out", ws.path("o")}).code != cli::kOk);
  std::ofstream(ws.path("bad.csv")) << "group,ranker,position,object\nG0,r1,1,nope\n";
  CHECK(run({"validate", "--rankings", ws.path("bad.csv"), "--covariates", f.cov}).code == cli::kValidation);
}

TEST_CASE("identifiability guard exits 3 unless forced") {
  Workspace ws("ident");
  const Files f = make_files(ws, 2);
  Eigen::MatrixXd x = f.inst.x.values();
  x.col(2) = 2.0 * x.col(0) - x.col(1);
  write_covariates(ws.path("collinear.csv"), x);
  const std::vector<std::string> base{"fit",   "--rankings", f.rank, "--covariates", ws.path("collinear.csv"),
                                      "--out", ws.path("o"), "--lambda-s", "0", "--lambda-f", "0"};
  CHECK(run(base).code == cli::kIdentifiability);
  CHECK(run({"validate", "--rankings", f.rank, "--covariates", ws.path("collinear.csv")}).code == cli::kIdentifiability);
  auto forced = base;
  forced.push_back("--force");
  CHECK(run(forced).code != cli::kIdentifiability);
  CHECK(run({"fit", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("ok"), "--lambda-s", "0", "--lambda-f", "0"}).code == cli::kOk);
}

TEST_CASE("fit at zero penalty equals the per-group MLE oracle") {
  Workspace ws("fit");
  const Files f = make_files(ws, 3);
  const Run r = run({"fit", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("raw"), "--no-standardize",
                     "--lambda-s", "0", "--lambda-f", "0"});
  REQUIRE(r.code == cli::kOk);
  const Eigen::MatrixXd b = read_coefficients(ws.path("raw/coefficients.csv"), 2, 3);
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd ref = oracle::newton_mle(f.inst.data.group(static_cast<std::size_t>(k)).rankings, f.inst.x.values());
    CHECK((b.row(k).transpose() - ref).lpNorm<Eigen::Infinity>() < 1e-6);
  }
  CHECK(fs::exists(ws.path("raw/manifest.json")));
  const auto j = nlohmann::json::parse(slurp(ws.path("raw/fit.json")));
  CHECK(j["converged"].get<bool>());
  CHECK(j["df"].get<int>() == 6);
  const auto trace = j["objective_trace"].get<std::vector<double>>();
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-10);
  const auto man = nlohmann::json::parse(slurp(ws.path("raw/manifest.json")));
  CHECK(man["command"] == "fit");
  CHECK(man["inputs"].size() == 2);

  // standardized fit: raw-scale coefficients equal the raw-data MLE
  REQUIRE(run({"fit", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("std"), "--lambda-s", "0", "--lambda-f", "0"}).code == cli::kOk);
  const Eigen::MatrixXd braw = read_coefficients(ws.path("std/coefficients.csv"), 2, 3, "beta_raw");
  CHECK((braw - b).cwiseAbs().maxCoeff() < 1e-5);

  // reruns are byte identical
  REQUIRE(run({"fit", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("std2"), "--lambda-s", "0", "--lambda-f", "0"}).code == cli::kOk);
  CHECK(slurp(ws.path("std/fit.json")) == slurp(ws.path("std2/fit.json")));
  CHECK(slurp(ws.path("std/coefficients.csv")) == slurp(ws.path("std2/coefficients.csv")));
}

TEST_CASE("non-convergence exits 4 and still writes outputs") {
  Workspace ws("nc");
  const Files f = make_files(ws, 4);
  const Run r = run({"fit", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("o"), "--lambda-s", "3",
                     "--lambda-f", "3", "--max-iter", "1", "--xi", "1e-15"});
  CHECK(r.code == cli::kNotConverged);
  CHECK(fs::exists(ws.path("o/coefficients.csv")));
  CHECK_FALSE(nlohmann::json::parse(slurp(ws.path("o/fit.json")))["converged"].get<bool>());
}

TEST_CASE("select: single cell equals fit, grid path, criteria ordering") {
  Workspace ws("select");
  const Files f = make_files(ws, 5, 3, 15, 4, 60);
  REQUIRE(run({"fit", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("fit"), "--lambda-s", "0", "--lambda-f", "0"}).code == cli::kOk);
  REQUIRE(run({"select", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("one"), "--criterion", "bic",
               "--grid-s", "0", "--grid-f", "0"})
              .code == cli::kOk);
  CHECK(slurp(ws.path("fit/coefficients.csv")) == slurp(ws.path("one/coefficients.csv")));

  REQUIRE(run({"select", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("bic"), "--criterion", "bic",
               "--threads", "2"})
              .code == cli::kOk);
  REQUIRE(run({"select", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("aic"), "--criterion", "aic"})
              .code == cli::kOk);
  const csv::Table ic = csv::read_file(ws.path("bic/ic_table.csv"));
  CHECK(ic.header == std::vector<std::string>{"lambda_s", "lambda_f", "df", "aic", "bic"});
  CHECK(ic.rows.size() == 100);
  std::set<std::string> dfs;
  for (std::size_t i = 0; i < 10; ++i) dfs.insert(ic.rows[i][2]);
  CHECK(dfs.size() >= 2);
  CHECK(slurp(ws.path("bic/ic_table.csv")) == slurp(ws.path("aic/ic_table.csv")));
  const auto jb = nlohmann::json::parse(slurp(ws.path("bic/fit.json")));
  const auto ja = nlohmann::json::parse(slurp(ws.path("aic/fit.json")));
  CHECK(jb["df"].get<int>() <= ja["df"].get<int>());
}

TEST_CASE("predict round trip") {
  Workspace ws("predict");
  const Files f = make_files(ws, 6);
  REQUIRE(run({"fit", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("fit"), "--lambda-s", "0", "--lambda-f", "0"}).code == cli::kOk);
  const Eigen::MatrixXd x = f.inst.x.values();
  {
    std::ofstream n(ws.path("new.csv"));
    // columns deliberately out of order; first row is a twin of o5
    n << "object,v2,v0,v1\n";
    n << "twin," << csv::format_double(x(5, 2)) << ',' << csv::format_double(x(5, 0)) << ','
      << csv::format_double(x(5, 1)) << '\n';
    n << "other,0.1,0.2,0.3\n";
  }
  REQUIRE(run({"predict", "--fit", ws.path("fit"), "--new-covariates", ws.path("new.csv"), "--out", ws.path("pred")})
              .code == cli::kOk);
  const csv::Table t = csv::read_file(ws.path("pred/ranks.csv"));
  CHECK(t.header == std::vector<std::string>{"object", "group", "worth", "rank", "predicted_only"});
  REQUIRE(t.rows.size() == 2 * 14);
  for (std::size_t k = 0; k < 2; ++k) {
    int twin_rank = -1, o5_rank = -1;
    for (std::size_t r = k * 14; r < (k + 1) * 14; ++r) {
      CHECK(std::stoi(t.rows[r][3]) == static_cast<int>(r - k * 14) + 1);
      if (t.rows[r][0] == "twin") {
        twin_rank = std::stoi(t.rows[r][3]);
        CHECK(t.rows[r][4] == "true");
      }
      if (t.rows[r][0] == "o5") o5_rank = std::stoi(t.rows[r][3]);
    }
    CHECK(twin_rank == o5_rank + 1);
  }
  std::ofstream(ws.path("unknown.csv")) << "object,v0,v1,zz\na,1,2,3\n";
  CHECK(run({"predict", "--fit", ws.path("fit"), "--new-covariates", ws.path("unknown.csv"), "--out", ws.path("p2")})
            .code == cli::kValidation);
  std::ofstream(ws.path("dup.csv")) << "object,v0,v1,v2\na,1,2,3\na,1,2,3\n";
  CHECK(run({"predict", "--fit", ws.path("fit"), "--new-covariates", ws.path("dup.csv"), "--out", ws.path("p3")})
            .code == cli::kValidation);
}

TEST_CASE("validate reports rank and coverage") {
  Workspace ws("validate");
  const Files f = make_files(ws, 7);
  const Run r = run({"validate", "--rankings", f.rank, "--covariates", f.cov, "--out", ws.path("v")});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out.find("rank") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(ws.path("v/validation.json")));
  CHECK(j["rank"].get<int>() == 3);
  CHECK(j["identifiable"].get<bool>());
  CHECK(j["coverage"].size() == 2);
  Eigen::MatrixXd wide = Eigen::MatrixXd::Random(3, 4);
  write_covariates(ws.path("wide.csv"), wide);
  std::ofstream(ws.path("r3.csv")) << "group,ranker,position,object\nG,1,1,o0\nG,1,2,o2\n";
  CHECK(run({"validate", "--rankings", ws.path("r3.csv"), "--covariates", ws.path("wide.csv")}).code ==
        cli::kIdentifiability);
}

TEST_CASE("simulate is byte-identical across reruns and worker counts") {
  Workspace ws("sim");
  const std::vector<std::string> base{"simulate", "--scenario", "table2-n10-p5-e0.25", "--replicates", "3", "--seed", "7",
                                      "--n-s", "4", "--n-f", "3"};
  auto with = [&](const std::string& dir, const std::string& threads) {
    auto a = base;
    a.insert(a.end(), {"--out", ws.path(dir), "--threads", threads});
    return run(a).code;
  };
  REQUIRE(with("t1", "1") == cli::kOk);
  REQUIRE(with("t1b", "1") == cli::kOk);
  REQUIRE(with("t8", "8") == cli::kOk);
  CHECK(slurp(ws.path("t1/study.csv")) == slurp(ws.path("t1b/study.csv")));
  CHECK(slurp(ws.path("t1/study.csv")) == slurp(ws.path("t8/study.csv")));
  CHECK(slurp(ws.path("t1/replicates.csv")) == slurp(ws.path("t8/replicates.csv")));
  const csv::Table t = csv::read_file(ws.path("t1/study.csv"));
  CHECK(t.rows.size() == 3);
  CHECK(t.column("rcr_pred_mean") >= 0);
  CHECK(run({"simulate", "--K", "2", "--M", "5", "--m", "6", "--p", "2", "--n", "5", "--out", ws.path("bad")}).code ==
        cli::kValidation);
}
