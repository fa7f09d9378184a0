#include "linksae/cli.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "linksae");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = linksae::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "linksae_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

fs::path small_config() {
  const fs::path p = fs::temp_directory_path() / "linksae_cli_tests" / "small.json";
  fs::create_directories(p.parent_path());
  std::ofstream(p) << R"({"seed": 5,
    "population": {"domain_sizes": [60, 40, 50]},
    "simulation": {"replications": 2, "n_sample": 40},
    "estimators": {"A_star": false, "C_star": false, "E": false, "F": false}})";
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with code 2 and a JSON line") {
  const Result r = run({"no-such-command"});
  CHECK(r.code == linksae::kExitUsage);
  CHECK(r.err.find("\"error\":\"usage\"") != std::string::npos);
  CHECK(run({}).code == linksae::kExitUsage);
  CHECK(run({"--help"}).code == linksae::kExitOk);
}

TEST_CASE("missing inputs are io errors naming the path") {
  const Result r = run({"link-fs", "--file1", "/nonexistent/a.csv", "--file2", "b.csv", "--schema", "s.json",
                        "--out", scratch("missing").string()});
  CHECK(r.code == linksae::kExitIo);
  CHECK(r.err.find("/nonexistent/a.csv") != std::string::npos);
}

TEST_CASE("unknown configuration keys are config errors") {
  const fs::path p = fs::temp_directory_path() / "linksae_cli_tests" / "bad.json";
  fs::create_directories(p.parent_path());
  std::ofstream(p) << R"({"simulation": {"replicatons": 3}})";
  const Result r = run({"simulate", "--config", p.string(), "--out", scratch("bad").string()});
  CHECK(r.code == linksae::kExitConfig);
  CHECK(r.err.find("replicatons") != std::string::npos);
  CHECK(run({"generate", "--seed", "12x", "--out", scratch("seed").string()}).code == linksae::kExitConfig);
}

TEST_CASE("generate, link and fit end to end") {
  const fs::path gen = scratch("gen");
  REQUIRE(run({"generate", "--config", small_config().string(), "--out", gen.string()}).code == 0);
  for (const char* f : {"register.csv", "sample.csv", "truth.csv", "schema.json", "population.csv", "manifest.json"}) {
    CHECK(fs::exists(gen / f));
  }
  const std::string s = (gen / "sample.csv").string(), reg = (gen / "register.csv").string(),
                    sch = (gen / "schema.json").string(), pop = (gen / "population.csv").string();
  const fs::path fsdir = scratch("fs");
  const Result l = run({"link-fs", "--file1", s, "--file2", reg, "--schema", sch, "--truth",
                        (gen / "truth.csv").string(), "--out", fsdir.string()});
  REQUIRE(l.code == 0);
  CHECK(fs::exists(fsdir / "pairs.csv"));
  CHECK(fs::exists(fsdir / "fs_summary.json"));
  const fs::path fit = scratch("fit");
  const Result f = run({"sae-fit", "--file1", s, "--file2", reg, "--schema", sch, "--links",
                        (fsdir / "pairs.csv").string(), "--population", pop, "--adjusted", "--audit-file",
                        (gen / "truth.csv").string(), "--out", fit.string()});
  CHECK(f.code == 0);
  CHECK(fs::exists(fit / "area_estimates.csv"));
  const Result both = run({"sae-fit", "--file1", s, "--file2", reg, "--schema", sch, "--links",
                           (fsdir / "pairs.csv").string(), "--population", pop, "--adjusted", "--out",
                           scratch("fit2").string()});
  CHECK(both.code == linksae::kExitConfig);
}

TEST_CASE("simulate writes tables that report reads back") {
  const fs::path dir = scratch("sim");
  REQUIRE(run({"simulate", "--config", small_config().string(), "--out", dir.string()}).code == 0);
  const Result rep = run({"report", "--dir", dir.string()});
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("Estimates D") != std::string::npos);
  std::ifstream in(dir / "report.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == rep.out);
}

TEST_CASE("output directory from the environment unless the flag is given") {
  const fs::path env_dir = scratch("env");
  ::setenv(linksae::kOutputDirEnv, env_dir.string().c_str(), 1);
  CHECK(run({"generate", "--config", small_config().string()}).code == 0);
  CHECK(fs::exists(env_dir / "manifest.json"));
  const fs::path flag_dir = scratch("flag");
  CHECK(run({"generate", "--config", small_config().string(), "--out", flag_dir.string()}).code == 0);
  CHECK(fs::exists(flag_dir / "manifest.json"));
  ::unsetenv(linksae::kOutputDirEnv);
}
