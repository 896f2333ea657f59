#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyncov/cli.hpp"
#include "dyncov/data.hpp"

namespace fs = std::filesystem;
using dyncov::run_cli;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dyncov_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 2 with usage text") {
  const Result r = run({"--frobnicate", "simulate"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: Usage:", 0) == 0);
  CHECK(r.err.find("Usage: dyncov") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"simulate", "--dim"}).code == 2);
  CHECK(run({"--innovation", "cauchy", "simulate"}).code == 2);
}

TEST_CASE("help and version exit 0") {
  const Result help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("evaluate") != std::string::npos);
  CHECK(run({"--version"}).out == std::string(dyncov::kVersion) + "\n");
}

TEST_CASE("runtime failures print one machine-parsable line and exit 1") {
  const Result r = run({"fit", "/nonexistent/series.csv"});
  CHECK(r.code == 1);
  CHECK(lines(r.err).size() == 1);
  CHECK(r.err.rfind("error: FileNotFound: ", 0) == 0);

  const Result bad = run({"simulate", "--a", "0.9", "--b", "0.5"});
  CHECK(bad.code == 1);
  CHECK(bad.err.rfind("error: InvalidParams: ", 0) == 0);
}

TEST_CASE("simulate is reproducible and writes the requested shape") {
  const Result a = run({"--seed", "9", "simulate", "--dim", "3", "--steps", "40"});
  const Result b = run({"--seed", "9", "simulate", "--dim", "3", "--steps", "40"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto rows = lines(a.out);
  CHECK(rows.size() == 41);
  CHECK(rows.front() == "index,x1,x2,x3");
  CHECK(run({"--seed", "10", "simulate", "--dim", "3", "--steps", "40"}).out != a.out);
}

TEST_CASE("simulate then fit recovers the parameters") {
  const fs::path dir = scratch("fit");
  const std::string series = (dir / "sim.csv").string();
  REQUIRE(run({"--seed", "21", "-o", series, "simulate", "--dim", "2", "--steps", "2000", "--a",
               "0.9", "--b", "0.35"})
              .code == 0);
  const std::string params = (dir / "params.json").string();
  const Result fit = run({"--seed", "1", "-o", params, "--no-standardize", "fit", series,
                          "--restarts", "2"});
  REQUIRE(fit.code == 0);
  const auto j = nlohmann::json::parse(slurp(params));
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(j["a"][i].get<double>() - 0.9) < 0.1);
    CHECK(std::abs(j["b"][i].get<double>() - 0.35) < 0.1);
  }
  CHECK(j["observations"] == 2000);

  // Parameters written by fit drive simulate.
  const Result again = run({"--seed", "4", "simulate", "--params", params, "--steps", "10"});
  CHECK(again.code == 0);
  CHECK(lines(again.out).size() == 11);
}

TEST_CASE("evaluate then compare") {
  const fs::path dir = scratch("evaluate");
  std::vector<std::string> inputs;
  for (const std::string name : {"alpha", "beta", "gamma"}) {
    const std::string path = (dir / (name + ".csv")).string();
    REQUIRE(run({"--seed", std::to_string(inputs.size() + 1), "-o", path, "simulate", "--dim",
                 "2", "--steps", "90"})
                .code == 0);
    inputs.push_back(path);
  }
  std::vector<std::string> args = {"--seed",     "3",         "--particles", "150",
                                   "--warmup",   "40",        "--jobs",      "2",
                                   "evaluate",   "--methods", "BEKK,BMDC",   "--fit-restarts",
                                   "1",          "--output",  (dir / "out").string()};
  args.insert(args.end(), inputs.begin(), inputs.end());
  const Result ev = run(args);
  REQUIRE_MESSAGE(ev.code == 0, ev.err);

  const auto records = lines(slurp(dir / "out" / "records_beta_BMDC.csv"));
  CHECK(records.size() == 1 + 90 - 40);
  CHECK(records[1].rfind("40,BMDC,", 0) == 0);

  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
  CHECK(summary["runs"].size() == 6);
  CHECK(summary["config"]["particles"] == 150);

  const Result cmp = run({"compare", (dir / "out" / "scores.csv").string()});
  REQUIRE(cmp.code == 0);
  const auto rows = lines(cmp.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "dataset,BEKK,BMDC");
  for (std::size_t i = 1; i <= 3; ++i) {
    std::istringstream row("dataset,BEKK,BMDC\n" + rows[i] + "\n");
    CHECK(dyncov::parse_csv(row).values.sum() == 3.0);
  }

  const Result js = run({"--format", "json", "compare", (dir / "out" / "scores.csv").string()});
  const auto j = nlohmann::json::parse(js.out);
  CHECK(j["avg_ranks"][0].get<double>() + j["avg_ranks"][1].get<double>() == 3.0);
  CHECK(j["pairwise"].size() == 1);
}

TEST_CASE("evaluate replays byte-identically from its manifest") {
  const fs::path dir = scratch("manifest");
  const std::string series = (dir / "s.csv").string();
  REQUIRE(run({"--seed", "8", "-o", series, "simulate", "--dim", "2", "--steps", "80"}).code == 0);
  REQUIRE(run({"--seed", "12", "--particles", "100", "evaluate", "--methods", "BMDC,BMDC-T,BEKK",
               "--fit-restarts", "1", series, "--output", (dir / "first").string()})
              .code == 0);
  const Result replay = run({"evaluate", "--manifest", (dir / "first" / "manifest.json").string(),
                             "--output", (dir / "second").string()});
  REQUIRE_MESSAGE(replay.code == 0, replay.err);
  for (const std::string m : {"BMDC", "BMDC-T", "BEKK"}) {
    const std::string file = "records_s_" + m + ".csv";
    CHECK(slurp(dir / "first" / file) == slurp(dir / "second" / file));
  }
}

TEST_CASE("filter snapshots resume to the same records") {
  const fs::path dir = scratch("filter");
  const std::string series = (dir / "s.csv").string();
  REQUIRE(run({"--seed", "5", "-o", series, "simulate", "--dim", "2", "--steps", "60"}).code == 0);
  const std::vector<std::string> common = {"--seed", "2", "--particles", "120"};

  auto full_args = common;
  full_args.insert(full_args.end(), {"filter", series, "--snapshot-every", "25", "--snapshot-dir",
                                     (dir / "snaps").string(), "--posterior",
                                     (dir / "post.csv").string()});
  const Result full = run(full_args);
  REQUIRE_MESSAGE(full.code == 0, full.err);
  CHECK(fs::exists(dir / "snaps" / "cloud_25.txt"));
  CHECK(fs::exists(dir / "snaps" / "cloud_50.txt"));
  CHECK(lines(slurp(dir / "post.csv")).size() == 61);

  auto resume_args = common;
  resume_args.insert(resume_args.end(),
                     {"filter", series, "--resume", (dir / "snaps" / "cloud_25.txt").string()});
  const Result resumed = run(resume_args);
  REQUIRE_MESSAGE(resumed.code == 0, resumed.err);
  const auto a = lines(full.out);
  const auto b = lines(resumed.out);
  REQUIRE(a.size() == 61);
  REQUIRE(b.size() == 36);
  CHECK(a.front() == b.front());
  for (std::size_t i = 1; i < b.size(); ++i) CHECK(a[25 + i] == b[i]);
}

TEST_CASE("curve from a snapshot") {
  const fs::path dir = scratch("curve");
  const std::string series = (dir / "s.csv").string();
  REQUIRE(run({"--seed", "6", "-o", series, "simulate", "--dim", "2", "--steps", "30"}).code == 0);
  REQUIRE(run({"--particles", "80", "filter", series, "--snapshot-every", "30", "--snapshot-dir",
               dir.string()})
              .code == 0);
  const Result c = run({"--particles", "80", "curve", "--snapshot", (dir / "cloud_30.txt").string(),
                        "--grid-points", "21"});
  REQUIRE_MESSAGE(c.code == 0, c.err);
  const auto rows = lines(c.out);
  CHECK(rows.size() == 22);
  CHECK(rows.front() == "point,mixture_logpdf,plugin_logpdf");
  CHECK(rows[11].rfind("0,", 0) == 0);
}

TEST_CASE("price input goes through return construction") {
  const fs::path dir = scratch("prices");
  const fs::path prices = dir / "p.csv";
  {
    std::ofstream f(prices);
    f << "date,p\n";
    for (int t = 0; t < 6; ++t) f << "2021-01-0" << t + 1 << ",10\n";
  }
  const Result r = run({"--input-kind", "prices", "fit", prices.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("warning: dropped 5 stale") != std::string::npos);
  CHECK(r.err.find("error: EmptyFile:") != std::string::npos);
}
