#pragma once

#include <map>
#include <string>
#include <vector>

#include "sparktrace/concolic.hpp"

namespace sparktrace {

struct CoverageReport {
  std::map<Span, int> per_statement;  // every statement in scope, with its hit count
  int statements_total = 0;
  int statements_covered = 0;
  double percent = 0;

  // Adds hits from `o` for statements present in both.
  void merge(const CoverageReport &o);
};

struct BugFinding {
  std::string library;
  std::string function;
  OutcomeKind kind = OutcomeKind::UnhandledException;
  std::string message;
  Span span;
  int witness = 0;
  std::vector<Value> witness_args;
};

struct LibraryManifest {
  std::string name;
  std::string source_path;  // relative to the manifest's directory
  int loc = 0;
  std::string notes;
};

// Reads <dir>/manifest.json and checks every entry.
std::vector<LibraryManifest> load_manifest(const std::string &dir);

// Statements of `fn` and of every function it can call.
std::vector<Span> function_statements(const Program &program, const std::string &fn);
std::vector<Span> library_statements(const Program &program);

struct RunResult {
  CoverageReport coverage;
  std::vector<BugFinding> findings;
  int limit_exceeded = 0;  // cases stopped by the dispatch budget
};

// Replays `cases` through the interpreter, counting hits on `scope` statements.
RunResult instrument_and_run(const Program &program, const std::string &fn, const std::vector<TestCase> &cases,
                             const std::vector<Span> &scope, const Config &config = {});

std::vector<TestCase> random_seeds(const ExportInfo &info, int n, uint64_t rng_seed, const Config &config);

// Exports the harness drives: those with at least one String parameter.
std::vector<ExportInfo> string_exports(const AstNode &ast);

struct FunctionResult {
  std::string library;
  std::string function;
  double coverage_percent = 0;
  double library_coverage_percent = 0;
  int iterations = 0;
  double mean_iteration_ms = 0;
  int test_cases = 0;
  std::vector<BugFinding> findings;
  std::string error;
};

struct LibraryResult {
  std::string name;
  CoverageReport coverage;  // union over all driven functions
  std::string error;
};

struct CampaignReport {
  std::vector<FunctionResult> functions;
  std::vector<LibraryResult> libraries;

  int finding_count() const;
  std::string to_json(bool timing = true) const;
  std::string to_csv() const;
};

CampaignReport run_campaign(const std::string &corpus_dir, const std::vector<LibraryManifest> &manifests,
                            const Config &config, int jobs = 1);

}  // namespace sparktrace
