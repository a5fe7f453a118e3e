#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "corpus.hpp"
#include "sparktrace/concolic.hpp"

using namespace sparktrace;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result sh(const std::string &args) {
  std::string cmd = std::string(SPARKTRACE_BIN) + " " + args + " 2>&1";
  Result r;
  FILE *p = popen(cmd.c_str(), "r");
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;)
    r.output.append(buf, n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("sparktrace-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  std::string path(const std::string &name) const { return (dir / name).string(); }
  std::string write(const std::string &name, const std::string &text) const {
    std::ofstream(dir / name) << text;
    return path(name);
  }
  fs::path dir;
};

const char *kEmptyCheck = "export function f(s){if(s.length==0) return 0; return 1;}\n";

}  // namespace

TEST_F(Cli, Version) {
  auto r = sh("--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("TRACE v1"), std::string::npos);
  EXPECT_NE(r.output.find("MODULE v1"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(sh("").code, 2);
  EXPECT_EQ(sh("frobnicate").code, 2);
  EXPECT_EQ(sh("trace " + path("missing.ms") + " f").code, 2);
  auto file = write("lib.ms", kEmptyCheck);
  EXPECT_EQ(sh("trace " + file + " f --args int:notanumber").code, 2);
  EXPECT_EQ(sh("--set nosuchkey=1 gen " + file + " f").code, 2);
}

TEST_F(Cli, TwoBytecodeTraceHasTwoRegions) {
  auto file = write("one.ms", "export function f(){return 1;}\n");
  auto r = sh("trace " + file + " f -o " + path("one"));
  ASSERT_EQ(r.code, 0) << r.output;
  MicroTrace raw = load_trace(support::read_file(path("one.raw.trace")));
  MicroTrace x = load_trace(support::read_file(path("one.trace")));
  EXPECT_EQ(raw.ops.size(), 6u);
  int regions = 0;
  for (std::size_t i = 0; i < x.ops.size(); ++i)
    regions += i == 0 || x.ops[i].origin_pc != x.ops[i - 1].origin_pc;
  EXPECT_EQ(regions, 2);
}

TEST_F(Cli, SymHeader) {
  auto file = write("lib.ms", kEmptyCheck);
  ASSERT_EQ(sh("trace " + file + " f --args ab --sym 0 -o " + path("t")).code, 0);
  EXPECT_NE(support::read_file(path("t.trace")).find("\nsym 0 "), std::string::npos);
}

TEST_F(Cli, UnknownFunctionListsExports) {
  auto file = write("lib.ms", "export function alpha(s){return s.length;} export function beta(s){return s;}\n");
  auto r = sh("trace " + file + " gamma");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("alpha"), std::string::npos);
  EXPECT_NE(r.output.find("beta"), std::string::npos);
}

TEST_F(Cli, LiftReplayAndDivergence) {
  auto file = write("lib.ms", kEmptyCheck);
  ASSERT_EQ(sh("trace " + file + " f --args a --sym 0 -o " + path("t")).code, 0);
  auto lifted = sh("lift " + path("t.trace") + " -o " + path("t.sir"));
  ASSERT_EQ(lifted.code, 0) << lifted.output;

  TestCase tc;
  tc.function = "f";
  tc.args = {Value::string("a")};
  write("same.tc.json", test_case_to_json(tc));
  auto ok = sh("replay " + path("t.sir") + " " + path("same.tc.json"));
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("all assertions hold"), std::string::npos) << ok.output;

  tc.args = {Value::string("")};
  write("diff.tc.json", test_case_to_json(tc));
  auto bad = sh("replay " + path("t.sir") + " " + path("diff.tc.json"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("assertion 0 failed"), std::string::npos) << bad.output;
}

TEST_F(Cli, LiftingRawTraceFails) {
  auto file = write("lib.ms", kEmptyCheck);
  ASSERT_EQ(sh("trace " + file + " f --args a -o " + path("t")).code, 0);
  auto r = sh("lift " + path("t.raw.trace") + " -o " + path("t.sir"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("VerifyFrameSize"), std::string::npos) << r.output;
}

TEST_F(Cli, GenBranchFree) {
  auto file = write("lib.ms", "export function f(s){return 0;}\n");
  auto r = sh("gen " + file + " f -o " + path("out"));
  EXPECT_EQ(r.code, 0) << r.output;
  auto report = nlohmann::json::parse(support::read_file(path("out/f/report.json")));
  EXPECT_EQ(report["iterations"], 1);
  EXPECT_TRUE(fs::exists(path("out/f/case-0.tc.json")));
  EXPECT_FALSE(fs::exists(path("out/f/case-1.tc.json")));
}

TEST_F(Cli, GenFindingsExitOne) {
  auto file = write("lib.ms", "export function f(s){if(s.length==0) throw \"e\"; return 0;}\n");
  auto r = sh("gen " + file + " f -o " + path("out"));
  EXPECT_EQ(r.code, 1) << r.output;
}

// Artifacts kept by gen match what the separate trace and lift commands write.
TEST_F(Cli, GenArtifactsDecompose) {
  auto file = write("lib.ms", kEmptyCheck);
  ASSERT_EQ(sh("gen " + file + " f --keep-artifacts -o " + path("out")).code, 0);
  fs::path art = dir / "out/f/artifacts";
  TestCase tc = test_case_from_json(support::read_file((art / "iter-0.tc.json").string()));
  std::string arg = percent_encode(tc.args.at(0).str);
  ASSERT_EQ(sh("trace " + file + " f --args str:" + arg + " --sym 0 -o " + path("t")).code, 0);
  EXPECT_EQ(support::read_file(path("t.raw.trace")), support::read_file((art / "iter-0.raw.trace").string()));
  EXPECT_EQ(support::read_file(path("t.trace")), support::read_file((art / "iter-0.trace").string()));
  ASSERT_EQ(sh("lift " + path("t.trace") + " -o " + path("t.sir")).code, 0);
  EXPECT_EQ(support::read_file(path("t.sir")), support::read_file((art / "iter-0.sir").string()));
  for (const auto &entry : fs::directory_iterator(art)) {
    std::string name = entry.path().filename().string();
    if (name.size() < 4 || name.substr(name.size() - 4) != ".sir")
      continue;
    std::string stem = entry.path().string().substr(0, entry.path().string().size() - 4);
    auto r = sh("replay " + entry.path().string() + " " + stem + ".tc.json");
    EXPECT_EQ(r.code, 0) << name << " " << r.output;
  }
}

TEST_F(Cli, GenReproducible) {
  auto file = write("lib.ms", support::read_file(support::corpus_dir() + "/slugify-mini.ms"));
  ASSERT_EQ(sh("--set timing=false gen " + file + " slugify --rng-seed 7 -o " + path("a")).code, 0);
  ASSERT_EQ(sh("gen " + file + " slugify --rng-seed 7 -o " + path("b") + " --set timing=false").code, 0);
  EXPECT_EQ(support::read_file(path("a/slugify/report.json")), support::read_file(path("b/slugify/report.json")));
}

TEST_F(Cli, ConfigFilePrecedence) {
  auto file = write("lib.ms", "export function f(s){if(s.length==0) throw \"e\"; return 0;}\n");
  auto cfg = write("run.conf", "# pinned\nmaxIterations = 1\ntiming = false\n");
  ASSERT_EQ(sh("--config " + cfg + " gen " + file + " f -o " + path("a")).code >= 0, true);
  auto a = nlohmann::json::parse(support::read_file(path("a/f/report.json")));
  EXPECT_EQ(a["iterations"], 1);
  sh("--config " + cfg + " --set maxIterations=5 gen " + file + " f -o " + path("b"));
  auto b = nlohmann::json::parse(support::read_file(path("b/f/report.json")));
  EXPECT_GT(b["iterations"].get<int>(), 1);
}

TEST_F(Cli, CampaignSmall) {
  fs::create_directories(dir / "corpus");
  for (const char *name : {"benchmarkify-mini.ms", "left-pad-mini.ms"})
    fs::copy_file(support::corpus_dir() + "/" + name, dir / "corpus" / name);
  std::ofstream(dir / "corpus/manifest.json")
      << R"([{"name":"benchmarkify-mini","sourcePath":"benchmarkify-mini.ms","loc":10,"notes":""},
             {"name":"left-pad-mini","sourcePath":"left-pad-mini.ms","loc":10,"notes":""}])";
  auto r1 = sh("campaign " + path("corpus") + " --set timing=false -o " + path("c1"));
  EXPECT_EQ(r1.code, 0) << r1.output;
  EXPECT_NE(r1.output.find("findings: 1"), std::string::npos) << r1.output;
  auto r2 = sh("campaign " + path("corpus") + " -j 2 --set timing=false -o " + path("c2"));
  EXPECT_EQ(r2.code, 0);
  EXPECT_EQ(support::read_file(path("c1/campaign.json")), support::read_file(path("c2/campaign.json")));
  EXPECT_TRUE(fs::exists(path("c1/campaign.csv")));
}
