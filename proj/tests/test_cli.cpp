#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rspin/cli.hpp"

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "rspin");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = rspin::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / ("rspin_cli_" + name); }

}  // namespace

TEST(Cli, ExtendedCorrelatorJson) {
  CliResult res = run({"correlator", "--r", "3", "--sector", "ext", "--ins", "1:0,1:0"});
  ASSERT_EQ(res.code, 0) << res.err;
  auto j = nlohmann::json::parse(res.out);
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["value"]["num"], "1");
  EXPECT_EQ(j["value"]["den"], "1");
  EXPECT_EQ(j["provenance"], "both-agree");
}

TEST(Cli, BaseValueText) {
  CliResult res = run({"correlator", "--r", "3", "--sector", "ext", "--ins", "1:0,2:0,2:0", "--format", "text"});
  ASSERT_EQ(res.code, 0) << res.err;
  EXPECT_NE(res.out.find("= -1/3"), std::string::npos) << res.out;
}

TEST(Cli, OpenAndClosedSectors) {
  CliResult o = run({"correlator", "--r", "2", "--sector", "open", "--boundary", "3", "--format", "text"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("= -2"), std::string::npos) << o.out;
  CliResult c = run({"correlator", "--r", "2", "--sector", "closed", "--ins", "0:0,0:0,0:0", "--format", "csv"});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(c.out.find("\"0:0,0:0,0:0\",0,1,1,hierarchy"), std::string::npos) << c.out;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({"correlator", "--r", "3", "--ins", "9:0"}).code, 2);
  EXPECT_EQ(run({"correlator", "--r", "3", "--ins", "-1:0"}).code, 2);
  EXPECT_EQ(run({"correlator", "--r", "3", "--ins", "1:0", "--sector", "bulk"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"verify", "--r", "2", "--suite", "nope"}).code, 2);
  CliResult cap = run({"correlator", "--r", "3", "--ins", "1:0,1:0,1:0,1:0,1:0,1:0,1:0"});
  EXPECT_EQ(cap.code, 3);
  EXPECT_NE(cap.err.find("max_n >= 7"), std::string::npos) << cap.err;
  EXPECT_EQ(run({"table", "--r", "2", "--max-n", "3", "--max-d", "0", "--out", "/nonexistent-dir/t.json"}).code, 4);
}

TEST(Cli, ExtendedTableContainsKnownEntry) {
  CliResult res = run({"table", "--r", "2", "--sector", "ext", "--max-n", "4", "--max-d", "1"});
  ASSERT_EQ(res.code, 0) << res.err;
  auto j = nlohmann::json::parse(res.out);
  bool found = false;
  for (const auto& e : j["entries"]) {
    if (e["insertions"].size() != 3) continue;
    bool all_one = true;
    for (const auto& p : e["insertions"]) all_one = all_one && p["twist"] == 1 && p["desc"] == 0;
    if (all_one) {
      found = true;
      EXPECT_EQ(e["value"]["num"], "-1");
      EXPECT_EQ(e["value"]["den"], "2");
    }
  }
  EXPECT_TRUE(found);
}

TEST(Cli, TableIsByteStable) {
  const auto a = temp_file("a.csv"), b = temp_file("b.csv");
  ASSERT_EQ(run({"table", "--r", "3", "--sector", "open", "--max-n", "4", "--max-d", "1", "--format", "csv", "--out", a.string()}).code, 0);
  ASSERT_EQ(run({"table", "--r", "3", "--sector", "open", "--max-n", "4", "--max-d", "1", "--format", "csv", "--out", b.string()}).code, 0);
  std::ifstream fa(a), fb(b);
  std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, sb);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Cli, ClosedTableWithFewInsertionsIsValid) {
  CliResult res = run({"table", "--r", "4", "--sector", "closed", "--max-n", "2", "--max-d", "0"});
  ASSERT_EQ(res.code, 0) << res.err;
  auto j = nlohmann::json::parse(res.out);
  EXPECT_TRUE(j["entries"].empty());
}

TEST(Cli, ConfigFilePrecedence) {
  const auto cfg = temp_file("cfg.txt");
  {
    std::ofstream f(cfg);
    f << "# test config\nr = 2\nformat = text\n";
  }
  CliResult from_config = run({"correlator", "--config", cfg.string(), "--sector", "closed", "--ins", "0:0,0:0,0:0"});
  ASSERT_EQ(from_config.code, 0) << from_config.err;
  EXPECT_NE(from_config.out.find("= 1"), std::string::npos) << from_config.out;
  CliResult flag_wins = run({"correlator", "--config", cfg.string(), "--r", "3", "--sector", "ext", "--ins", "1:0,2:0,2:0"});
  ASSERT_EQ(flag_wins.code, 0) << flag_wins.err;
  EXPECT_NE(flag_wins.out.find("-1/3"), std::string::npos) << flag_wins.out;
  {
    std::ofstream f(cfg);
    f << "colour = blue\n";
  }
  EXPECT_EQ(run({"correlator", "--config", cfg.string(), "--ins", "1:0,1:0"}).code, 2);
  std::filesystem::remove(cfg);
}

TEST(Cli, VerifyExitCodes) {
  CliResult ok = run({"verify", "--r", "2", "--max-n", "5", "--max-d", "1", "--suite", "theorem", "--suite", "trr"});
  EXPECT_EQ(ok.code, 0) << ok.out;
  auto j = nlohmann::json::parse(ok.out);
  EXPECT_EQ(j["suites"].size(), 2u);
  EXPECT_TRUE(j["passed"]);
  CliResult bad = run({"verify", "--r", "3", "--max-n", "4", "--max-d", "1", "--suite", "flows", "--corrupt-jet", "--format", "text"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("violated flow index"), std::string::npos) << bad.out;
}

TEST(Cli, LaxSlices) {
  CliResult l2 = run({"lax", "--r", "2", "--slice"});
  ASSERT_EQ(l2.code, 0) << l2.err;
  EXPECT_EQ(l2.out, "z^2 + 2*T1\n");
  CliResult d3 = run({"lax", "--r", "3", "--degree", "0", "--dispersive"});
  ASSERT_EQ(d3.code, 0) << d3.err;
  EXPECT_EQ(d3.out, "Dx^3 + 3*e^-3*T1\n");
  CliResult l3 = run({"lax", "--r", "3", "--degree", "1"});
  ASSERT_EQ(l3.code, 0) << l3.err;
  EXPECT_NE(l3.out.find("6*T2"), std::string::npos) << l3.out;
}
