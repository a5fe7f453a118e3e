#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "corpus.hpp"
#include "sparktrace/harness.hpp"

using namespace sparktrace;
namespace fs = std::filesystem;

namespace {

struct Lib {
  AstNode ast;
  Program program;
  ExportInfo info;
};

Lib load(const std::string &src) {
  Lib l;
  l.ast = parse_text(src);
  l.program = compile(l.ast);
  l.info = list_exports(l.ast).at(0);
  return l;
}

std::vector<TestCase> cases(const std::string &fn, std::vector<std::string> inputs) {
  std::vector<TestCase> out;
  for (auto &s : inputs) {
    TestCase tc;
    tc.id = static_cast<int>(out.size());
    tc.function = fn;
    tc.args = {Value::string(s)};
    out.push_back(tc);
  }
  return out;
}

RunResult run_on(const Lib &l, const std::vector<std::string> &inputs) {
  return instrument_and_run(l.program, l.info.name, cases(l.info.name, inputs),
                            function_statements(l.program, l.info.name));
}

const char *kThrowOnEmpty = "export function f(s){if(s.length==0) throw \"e\"; return 0;}";

fs::path temp_dir(const std::string &name) {
  fs::path p = fs::temp_directory_path() / ("sparktrace-harness-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path &p, const std::string &text) { std::ofstream(p) << text; }

}  // namespace

TEST(Harness, StraightLineFullCoverage) {
  auto l = load("export function f(s){var t = s + \"!\"; return t;}");
  auto r = run_on(l, {"a"});
  EXPECT_EQ(r.coverage.statements_total, 2);
  EXPECT_DOUBLE_EQ(r.coverage.percent, 100.0);
  EXPECT_TRUE(r.findings.empty());
}

TEST(Harness, EmptyBoundaryFinding) {
  auto l = load(kThrowOnEmpty);
  auto r = run_on(l, {"x", ""});
  EXPECT_DOUBLE_EQ(r.coverage.percent, 100.0);
  ASSERT_EQ(r.findings.size(), 1u);
  EXPECT_EQ(r.findings[0].kind, OutcomeKind::UnhandledException);
  EXPECT_EQ(r.findings[0].message, "e");
  EXPECT_EQ(r.findings[0].witness, 1);
  EXPECT_EQ(r.findings[0].witness_args, std::vector<Value>{Value::string("")});
}

TEST(Harness, ZeroCases) {
  auto l = load(kThrowOnEmpty);
  auto r = run_on(l, {});
  EXPECT_DOUBLE_EQ(r.coverage.percent, 0.0);
  EXPECT_TRUE(r.findings.empty());
}

TEST(Harness, DuplicateFindingsCollapse) {
  auto l = load(kThrowOnEmpty);
  auto r = run_on(l, {"", "", "x", ""});
  EXPECT_EQ(r.findings.size(), 1u);
}

TEST(Harness, HandledFindingsReported) {
  auto l = load("export function f(s){try { if (s == \"z\") { throw \"z!\"; } } catch (e) { return 1; } return 0;}");
  auto r = run_on(l, {"a", "z"});
  ASSERT_EQ(r.findings.size(), 1u);
  EXPECT_EQ(r.findings[0].kind, OutcomeKind::HandledException);
}

TEST(Harness, CoverageIncludesCallees) {
  auto l = load("export function f(s){return g(s);} function g(s){if (s.length > 1) { return 1; } return 0;}");
  auto r = run_on(l, {"a"});
  EXPECT_EQ(r.coverage.statements_total, 4);
  EXPECT_EQ(r.coverage.statements_covered, 3);
}

TEST(Harness, ReplayDeterministicAndSubadditive) {
  auto lib = support::find_library(support::load_corpus(), "query-string-mini");
  const ExportInfo &e = lib.exports.at(0);
  auto a = random_seeds(e, 10, 1, Config{});
  auto b = random_seeds(e, 10, 2, Config{});
  auto both = a;
  both.insert(both.end(), b.begin(), b.end());
  auto scope = library_statements(lib.program);
  auto ra = instrument_and_run(lib.program, e.name, a, scope);
  auto rb = instrument_and_run(lib.program, e.name, b, scope);
  auto rab = instrument_and_run(lib.program, e.name, both, scope);
  EXPECT_EQ(instrument_and_run(lib.program, e.name, a, scope).coverage.per_statement, ra.coverage.per_statement);
  EXPECT_GE(rab.coverage.percent, std::max(ra.coverage.percent, rb.coverage.percent));
}

TEST(Harness, WitnessReproducesFinding) {
  auto corpus = support::load_corpus();
  const auto &lib = support::find_library(corpus, "benchmarkify-mini");
  Config config;
  for (const ExportInfo &e : lib.exports) {
    auto rep = generate(lib.program, e, config);
    auto r = instrument_and_run(lib.program, e.name, rep.test_cases, library_statements(lib.program));
    for (const BugFinding &f : r.findings) {
      auto o = interpret(lib.program, *lib.program.find(e.name), f.witness_args);
      EXPECT_EQ(o.kind == OutcomeKind::UnhandledException ? o.message : o.handled.at(0).message, f.message);
      EXPECT_EQ(o.kind, f.kind);
    }
  }
}

TEST(Harness, RandomSeedsDeterministic) {
  auto l = load("export function f(a, b){return a.concat(b);}");
  auto x = random_seeds(l.info, 20, 99, Config{});
  auto y = random_seeds(l.info, 20, 99, Config{});
  ASSERT_EQ(x.size(), 20u);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].args, y[i].args);
    EXPECT_EQ(x[i].args.size(), 2u);
  }
}

TEST(Harness, ZeroSeedLengthGivesEmptyString) {
  auto l = load("export function f(s){return s.length;}");
  Config config;
  config.max_seed_len = 0;
  auto seeds = random_seeds(l.info, 1, 5, config);
  ASSERT_EQ(seeds.size(), 1u);
  EXPECT_EQ(seeds[0].args, std::vector<Value>{Value::string("")});
  EXPECT_THROW(random_seeds(l.info, 0, 5, config), Error);
}

TEST(Harness, SeedLengthAndByteDistribution) {
  auto l = load("export function f(s){return s.length;}");
  Config config;
  auto seeds = random_seeds(l.info, 10000, 17, config);
  std::vector<int> lengths(config.max_seed_len + 1, 0);
  for (const TestCase &tc : seeds) {
    const std::string &s = tc.args[0].str;
    ASSERT_LE(s.size(), static_cast<std::size_t>(config.max_seed_len));
    ++lengths[s.size()];
    for (char c : s)
      ASSERT_NE(config.alphabet.find(c), std::string::npos);
  }
  for (int n : lengths)
    EXPECT_NEAR(n / 10000.0, 1.0 / 9.0, 0.02);
}

TEST(Harness, StringExportsOnly) {
  auto ast = parse_text("export function a(s){return s.length;} export function b(n){return n;} function c(s){return s.length;}");
  auto e = string_exports(ast);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].name, "a");
}

TEST(Harness, ManifestValidation) {
  auto dir = temp_dir("manifest");
  write(dir / "manifest.json", R"([{"name":"x","sourcePath":"x.ms","loc":3,"notes":""}])");
  EXPECT_THROW(load_manifest(dir.string()), Error);
  write(dir / "x.ms", "export function f(s){return s.length;}\n");
  EXPECT_EQ(load_manifest(dir.string()).size(), 1u);
  write(dir / "manifest.json", R"([{"name":"x","sourcePath":"x.ms","loc":0}])");
  EXPECT_THROW(load_manifest(dir.string()), Error);
  write(dir / "manifest.json", "[");
  EXPECT_THROW(load_manifest(dir.string()), Error);
  EXPECT_THROW(load_manifest((dir / "nope").string()), Error);
}

TEST(Harness, CampaignIsolatesBrokenLibrary) {
  auto dir = temp_dir("campaign");
  write(dir / "good.ms", kThrowOnEmpty);
  write(dir / "bad.ms", "export function f(s){");
  write(dir / "manifest.json", R"([{"name":"good","sourcePath":"good.ms","loc":1,"notes":""},
                                   {"name":"bad","sourcePath":"bad.ms","loc":1,"notes":""}])");
  Config config;
  config.timing = false;
  auto rep = run_campaign(dir.string(), load_manifest(dir.string()), config);
  ASSERT_EQ(rep.libraries.size(), 2u);
  EXPECT_TRUE(rep.libraries[0].error.empty());
  EXPECT_DOUBLE_EQ(rep.libraries[0].coverage.percent, 100.0);
  EXPECT_FALSE(rep.libraries[1].error.empty());
  EXPECT_EQ(rep.finding_count(), 1);
  std::string json = rep.to_json(false);
  EXPECT_NE(json.find("\"error\""), std::string::npos);
  EXPECT_NE(rep.to_csv().find("good"), std::string::npos);
  // Worker count does not change the report.
  EXPECT_EQ(run_campaign(dir.string(), load_manifest(dir.string()), config, 3).to_json(false), json);
}
