#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "gpbart/cli.hpp"
#include "gpbart/io.hpp"
#include "test_helpers.hpp"

using namespace gpbart;
using testing::TempDir;

namespace {

int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "gpbart");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

int count_data_lines(const std::string& path) {
  std::istringstream in(testing::read_file(path));
  std::string line;
  int n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;  // header
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate, fit and predict") {
  TempDir dir("cli");
  const std::string data = dir.file("sim.csv");
  REQUIRE(cli({"simulate", "--generator", "benchmark", "--n", "40", "--seed", "3", "--out", data}) == 0);
  CHECK(count_data_lines(data) == 40);
  CHECK(testing::read_file(data).rfind("# seed=3 config_hash=", 0) == 0);
  CHECK(std::filesystem::exists(data + ".json"));

  const std::vector<std::string> fit_args = {"fit", "--data", data, "--ignore", "truth",
                                             "--trees", "3", "--mcmc", "20", "--burnin", "10",
                                             "--seed", "5"};
  auto with_out = [&](std::vector<std::string> a, const std::string& out) {
    a.push_back("--out");
    a.push_back(out);
    return a;
  };
  REQUIRE(cli(with_out(fit_args, dir.file("fit1"))) == 0);
  REQUIRE(cli(with_out(fit_args, dir.file("fit2"))) == 0);
  const std::string post1 = testing::read_file(dir.file("fit1/posterior.jsonl"));
  CHECK(post1 == testing::read_file(dir.file("fit2/posterior.jsonl")));
  CHECK(std::filesystem::exists(dir.file("fit1/tau_trace.csv")));
  CHECK(count_data_lines(dir.file("fit1/tau_trace.csv")) == 20);
  CHECK(testing::read_file(dir.file("fit1/acceptance.csv")).find("grow-project") != std::string::npos);
  CHECK(std::filesystem::exists(dir.file("fit1/summary.json")));

  auto a_args = with_out(fit_args, dir.file("fitA"));
  a_args.push_back("--variant");
  a_args.push_back("A");
  REQUIRE(cli(a_args) == 0);
  const std::string acc = testing::read_file(dir.file("fitA/acceptance.csv"));
  CHECK(acc.find("project") == std::string::npos);
  CHECK(acc.find("prune") != std::string::npos);

  const std::string pred = dir.file("pred.csv");
  REQUIRE(cli({"predict", "--posterior", dir.file("fit1/posterior.jsonl"), "--data", data,
               "--out", pred, "--level", "0", "--workers", "2"}) == 0);
  CHECK(count_data_lines(pred) == 40);
  std::istringstream rows(testing::read_file(pred));
  std::string line;
  std::getline(rows, line);
  std::getline(rows, line);
  std::getline(rows, line);
  std::vector<std::string> cells;
  std::stringstream ls(line);
  for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
  REQUIRE(cells.size() == 5);
  CHECK(cells[2] == cells[3]);
}

TEST_CASE("validation failures exit with 1 and write nothing") {
  TempDir dir("cli");
  const std::string data = dir.file("sim.csv");
  REQUIRE(cli({"simulate", "--n", "30", "--out", data}) == 0);
  std::string err;
  CHECK(cli({"fit", "--data", data, "--mcmc", "10", "--burnin", "10", "--out", dir.file("bad")}, &err) == 1);
  CHECK(err.find("burnin") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir.file("bad")));
  CHECK(cli({"fit", "--data", data, "--gp-columns", "nope", "--mcmc", "5", "--burnin", "1",
             "--out", dir.file("bad")}, &err) == 1);
  CHECK(err.find("'nope'") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir.file("bad")));
  CHECK(cli({"predict", "--posterior", dir.file("none.jsonl"), "--data", data}, &err) == 1);
  CHECK(err.find("posterior") != std::string::npos);
  CHECK(cli({"simulate", "--generator", "friedman", "--p", "3", "--out", dir.file("f.csv")}) == 1);
  CHECK(cli({"bogus"}) == 1);
}

TEST_CASE("config file values yield to flags") {
  TempDir dir("cli");
  const std::string data = dir.file("sim.csv");
  REQUIRE(cli({"simulate", "--n", "30", "--out", data}) == 0);
  testing::write_file(dir.file("run.cfg"),
                      "# settings\ntrees = 3\nmcmc = 12\nburnin = 6\nignore = truth\nseed = 9\n");
  REQUIRE(cli({"fit", "--config", dir.file("run.cfg"), "--data", data, "--trees", "2", "--out",
               dir.file("o")}) == 0);
  const FittedModel m = load_draws(dir.file("o/posterior.jsonl"));
  CHECK(m.posterior.hp.trees == 2);
  CHECK(m.posterior.hp.n_mcmc == 12);
  CHECK(m.posterior.seed == 9);

  testing::write_file(dir.file("bad.cfg"), "not_an_option = 1\n");
  CHECK(cli({"fit", "--config", dir.file("bad.cfg"), "--data", data}) == 1);
}

TEST_CASE("benchmark writes reports and a surface grid") {
  TempDir dir("cli");
  REQUIRE(cli({"benchmark", "--generator", "benchmark", "--n", "30", "--variants", "AD",
               "--repetitions", "1", "--folds", "3", "--max-folds", "1", "--trees", "2",
               "--mcmc", "10", "--burnin", "5", "--grid-res", "5", "--workers", "2", "--out",
               dir.file("b")}) == 0);
  CHECK(count_data_lines(dir.file("b/surface.csv")) == 25);
  CHECK(count_data_lines(dir.file("b/cv_summary.csv")) == 2);
  CHECK(count_data_lines(dir.file("b/cv_long.csv")) == 2 * 5);
  CHECK(std::filesystem::exists(dir.file("b/phi_min.csv")));

  REQUIRE(cli({"benchmark", "--generator", "friedman", "--n", "30", "--p", "6", "--variants", "D",
               "--repetitions", "1", "--folds", "3", "--max-folds", "1", "--trees", "2",
               "--mcmc", "10", "--burnin", "5", "--out", dir.file("f")}) == 0);
  CHECK(count_data_lines(dir.file("f/phi_min.csv")) == 6);
  CHECK_FALSE(std::filesystem::exists(dir.file("f/surface.csv")));
}

}  // TEST_SUITE
