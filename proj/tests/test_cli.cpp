#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "iwvi");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = iwvi::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// A fresh directory path under the system temp dir that does not exist yet.
fs::path scratch(const std::string& name) {
  const fs::path root = fs::temp_directory_path() / "iwvi_cli_tests";
  fs::create_directories(root);
  const fs::path p = root / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("snr-sweep writes one row per estimator, alpha, n and coordinate") {
  const fs::path out = scratch("snr");
  const Result r = run_cli({"snr-sweep", "--model", "gaussian", "--theta", "0", "--phi", "1",
                            "--alphas", "0,0.5", "--ngrid", "5x2^0..8", "--reps", "50", "--seed",
                            "7", "--out", out.string()});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(out / "snr.csv");
  // 3 estimators x 2 alphas x 9 n x 2 coordinates, plus the header.
  CHECK(count_lines(csv) == 1 + 3 * 2 * 9 * 2);
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["subcommand"] == "snr-sweep");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["config"]["alphas"].size() == 2);
  CHECK(manifest.contains("version"));
  CHECK(manifest.contains("wall_clock_ms"));
  CHECK(json::parse(slurp(out / "snr.json"))["rows"].size() == 108);
}

TEST_CASE("golden-file stability: same config and seed give identical CSV") {
  const fs::path a = scratch("gold_a"), b = scratch("gold_b"), c = scratch("gold_c");
  const std::vector<std::string> base{"snr-sweep", "--alphas", "0.5", "--ngrid", "5,10,20",
                                      "--estimators", "am,star,naive", "--reps", "100",
                                      "--seed", "3"};
  auto with_out = [&](const fs::path& p, const std::string& workers) {
    auto args = base;
    args.insert(args.end(), {"--workers", workers, "--out", p.string()});
    return args;
  };
  REQUIRE(run_cli(with_out(a, "1")).code == 0);
  REQUIRE(run_cli(with_out(b, "1")).code == 0);
  REQUIRE(run_cli(with_out(c, "3")).code == 0);
  CHECK(slurp(a / "snr.csv") == slurp(b / "snr.csv"));
  CHECK(slurp(a / "snr.csv") == slurp(c / "snr.csv"));
}

TEST_CASE("config errors exit 2 and name the field") {
  const Result alpha = run_cli({"snr-sweep", "--alphas", "1.0", "--out", scratch("x1").string()});
  CHECK(alpha.code == 2);
  CHECK(alpha.err.find("alpha must lie in [0,1)") != std::string::npos);
  CHECK(alpha.err.find("alphas[0]") != std::string::npos);

  const Result grid = run_cli({"snr-sweep", "--ngrid", "10,5", "--out", scratch("x2").string()});
  CHECK(grid.code == 2);
  CHECK(grid.err.find("strictly increasing") != std::string::npos);

  CHECK(run_cli({"run", "--config", "missing.cfg"}).code == 2);
  CHECK(run_cli({"fly"}).code == 2);
  CHECK(run_cli({"snr-sweep", "--reps", "many"}).code == 2);
  CHECK(run_cli({"ssm-fit", "--data", "/nonexistent/data.csv", "--out", scratch("x3").string()})
            .code == 2);
  CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("output directories are never reused") {
  const fs::path out = scratch("reuse");
  REQUIRE(run_cli({"snr-sweep", "--ngrid", "5,10,20", "--reps", "20", "--out", out.string()}).code == 0);
  const Result again = run_cli({"snr-sweep", "--ngrid", "5,10,20", "--reps", "20", "--out", out.string()});
  CHECK(again.code == 2);
  CHECK(again.err.find("already exists") != std::string::npos);
}

TEST_CASE("run --config reads a JSON experiment") {
  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  const fs::path cfg = dir / "exp.json";
  std::ofstream(cfg) << R"({"subcommand": "variance-sweep", "model": {"type": "gaussian"}, "n_grid": [5, 10, 20, 40],
                            "replicates": 50, "alphas": [0.5], "estimators": ["am", "naive"]})";
  const fs::path out = dir / "out";
  const Result r = run_cli({"run", "--config", cfg.string(), "--out", out.string()});
  REQUIRE(r.code == 0);
  const std::string slopes = slurp(out / "slopes.csv");
  CHECK(slopes.rfind("estimator,alpha,coordinate,slope,tail_slope,points\n", 0) == 0);
  CHECK(count_lines(slopes) == 1 + 2 * 2);
  CHECK(count_lines(slurp(out / "variance.csv")) == 1 + 2 * 4 * 2);

  std::ofstream(dir / "bad.json") << R"({"subcommand": "snr-sweep", "alphas": [2]})";
  CHECK(run_cli({"run", "--config", (dir / "bad.json").string()}).code == 2);
}

TEST_CASE("optimize writes paired trajectories") {
  const fs::path out = scratch("opt");
  const Result r = run_cli({"optimize", "--estimators", "star,am", "--n", "20", "--iters", "30",
                            "--out", out.string()});
  REQUIRE(r.code == 0);
  const std::string star = slurp(out / "trajectory_star.csv");
  CHECK(star.rfind("iter,theta_1,phi_1,grad_norm,ess,bound,alpha,beta,elapsed_ms\n", 0) == 0);
  CHECK(count_lines(star) == 1 + 31);
  CHECK(fs::exists(out / "trajectory_am.json"));
  const json summary = json::parse(slurp(out / "summary.json"));
  // theta is not trained unless asked.
  CHECK(summary["star"]["final_params"][0] == 0.0);
}

TEST_CASE("gaussian-verify prints a pass/fail table") {
  const fs::path out = scratch("verify");
  const Result r = run_cli({"gaussian-verify", "--theta", "0", "--phi", "1", "--alphas", "0.5",
                            "--ngrid", "320", "--reps", "400", "--out", out.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(count_lines(slurp(out / "verify.csv")) == 1 + 3);
}

TEST_CASE("ssm-fit on a simulated series") {
  const fs::path out = scratch("ssm");
  const Result r = run_cli({"ssm-fit", "--sim-T", "40", "--particles", "10", "--n", "10",
                            "--iters", "5", "--alphas", "0.5", "--estimators", "star",
                            "--clip", "5", "--step", "0.01", "--out", out.string()});
  REQUIRE(r.code == 0);
  CHECK(count_lines(slurp(out / "observations.csv")) == 41);
  const json post = json::parse(slurp(out / "posterior_star.json"));
  CHECK(post["sigma2"]["std"].get<double>() > 0.0);
  CHECK(post["z"].size() == 3);

  // The written series round-trips through --data.
  const fs::path refit = scratch("ssm_refit");
  CHECK(run_cli({"ssm-fit", "--data", (out / "observations.csv").string(), "--particles", "10",
                 "--n", "10", "--iters", "2", "--alphas", "0.5", "--estimators", "am",
                 "--out", refit.string()})
            .code == 0);
  CHECK_FALSE(fs::exists(refit / "observations.csv"));
}
