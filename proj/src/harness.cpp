#include "sparktrace/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace sparktrace {

namespace fs = std::filesystem;

void CoverageReport::merge(const CoverageReport &o) {
  for (const auto &[span, hits] : o.per_statement) {
    auto it = per_statement.find(span);
    if (it != per_statement.end())
      it->second += hits;
  }
  statements_covered = static_cast<int>(
      std::count_if(per_statement.begin(), per_statement.end(), [](const auto &kv) { return kv.second > 0; }));
  statements_total = static_cast<int>(per_statement.size());
  percent = statements_total ? 100.0 * statements_covered / statements_total : 0.0;
}

std::vector<LibraryManifest> load_manifest(const std::string &dir) {
  fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open " + path.string());
  std::vector<LibraryManifest> out;
  try {
    auto j = nlohmann::json::parse(in);
    for (const auto &e : j) {
      LibraryManifest m;
      m.name = e.at("name").get<std::string>();
      m.source_path = e.at("sourcePath").get<std::string>();
      m.loc = e.at("loc").get<int>();
      m.notes = e.value("notes", "");
      if (!fs::exists(fs::path(dir) / m.source_path))
        throw Error("manifest entry '" + m.name + "': missing source " + m.source_path);
      if (m.loc <= 0)
        throw Error("manifest entry '" + m.name + "': loc must be positive");
      out.push_back(std::move(m));
    }
  } catch (nlohmann::json::exception &e) {
    throw Error("bad manifest " + path.string() + ": " + e.what());
  }
  return out;
}

std::vector<Span> function_statements(const Program &program, const std::string &fn) {
  const BytecodeFunction *root = program.find(fn);
  if (!root)
    throw Error("no function named '" + fn + "'");
  std::set<int> seen{root->index};
  std::vector<int> work{root->index};
  while (!work.empty()) {
    const BytecodeFunction &f = program.functions[static_cast<std::size_t>(work.back())];
    work.pop_back();
    for (const Bytecode &bc : f.code)
      if (bc.op == Op::CallFunc && seen.insert(bc.operands[0]).second)
        work.push_back(bc.operands[0]);
  }
  std::vector<Span> out;
  for (int i : seen)
    for (const Span &s : program.functions[static_cast<std::size_t>(i)].statements)
      out.push_back(s);
  return out;
}

std::vector<Span> library_statements(const Program &program) {
  std::vector<Span> out;
  for (const BytecodeFunction &f : program.functions)
    out.insert(out.end(), f.statements.begin(), f.statements.end());
  return out;
}

RunResult instrument_and_run(const Program &program, const std::string &fn, const std::vector<TestCase> &cases,
                             const std::vector<Span> &scope, const Config &config) {
  const BytecodeFunction *f = program.find(fn);
  if (!f)
    throw Error("no function named '" + fn + "'");
  RunResult r;
  for (const Span &s : scope)
    r.coverage.per_statement[s] = 0;
  RunOptions opts;
  opts.max_string_len = config.max_string_len;
  std::set<std::tuple<Span, std::string, OutcomeKind>> seen;
  for (const TestCase &tc : cases) {
    ExecOutcome o;
    try {
      o = interpret(program, *f, tc.args, opts);
    } catch (ExecutionLimit &) {
      ++r.limit_exceeded;
      continue;
    }
    // A hit is an entry into a statement from a different one.
    Span previous;
    for (const DispatchEntry &d : o.dispatch_log) {
      const BytecodeFunction &owner = program.at_address(d.pc);
      const Span &s = owner.statement_map[static_cast<std::size_t>(d.pc - owner.code_base)];
      if (s == previous)
        continue;
      previous = s;
      auto it = r.coverage.per_statement.find(s);
      if (it != r.coverage.per_statement.end())
        ++it->second;
    }
    auto record = [&](OutcomeKind kind, const std::string &message, Span span) {
      if (seen.insert({span, message, kind}).second)
        r.findings.push_back({"", fn, kind, message, span, tc.id, tc.args});
    };
    for (const HandledEvent &h : o.handled)
      record(OutcomeKind::HandledException, h.message, h.throw_span);
    if (o.kind == OutcomeKind::UnhandledException)
      record(OutcomeKind::UnhandledException, o.message, o.span);
  }
  r.coverage.merge({});
  return r;
}

std::vector<TestCase> random_seeds(const ExportInfo &info, int n, uint64_t rng_seed, const Config &config) {
  if (n < 1)
    throw Error("random_seeds: n must be at least 1");
  std::mt19937_64 rng(rng_seed);
  std::vector<TestCase> out;
  for (int i = 0; i < n; ++i) {
    TestCase tc;
    tc.id = i;
    tc.function = info.name;
    tc.args = random_arguments(info.param_count, rng, config);
    out.push_back(std::move(tc));
  }
  return out;
}

std::vector<ExportInfo> string_exports(const AstNode &ast) {
  std::vector<ExportInfo> out;
  for (ExportInfo &e : list_exports(ast))
    if (std::count(e.param_types.begin(), e.param_types.end(), ParamType::String) > 0)
      out.push_back(std::move(e));
  return out;
}

// Campaign -------------------------------------------------------------------------

int CampaignReport::finding_count() const {
  int n = 0;
  for (const FunctionResult &f : functions)
    n += static_cast<int>(f.findings.size());
  return n;
}

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

uint64_t fnv(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string CampaignReport::to_json(bool timing) const {
  auto rows = nlohmann::ordered_json::array();
  for (const FunctionResult &f : functions) {
    nlohmann::ordered_json row;
    row["library"] = f.library;
    row["function"] = f.function;
    row["coveragePercent"] = round2(f.coverage_percent);
    row["libraryCoveragePercent"] = round2(f.library_coverage_percent);
    row["iterations"] = f.iterations;
    row["testCases"] = f.test_cases;
    row["meanIterationMs"] = timing ? round2(f.mean_iteration_ms) : 0.0;
    auto findings = nlohmann::ordered_json::array();
    for (const BugFinding &b : f.findings) {
      auto args = nlohmann::ordered_json::array();
      for (const Value &v : b.witness_args)
        args.push_back(v.tag == Tag::Str ? percent_encode(v.str) : v.to_display());
      findings.push_back({{"kind", outcome_kind_name(b.kind)},
                          {"message", b.message},
                          {"span", b.span.str()},
                          {"witness", b.witness},
                          {"witnessArgs", args}});
    }
    row["findings"] = findings;
    if (!f.error.empty())
      row["error"] = f.error;
    rows.push_back(std::move(row));
  }
  for (const LibraryResult &l : libraries)
    if (!l.error.empty())
      rows.push_back({{"library", l.name}, {"error", l.error}});
  return rows.dump(2) + "\n";
}

std::string CampaignReport::to_csv() const {
  std::ostringstream os;
  os << "library,function,coveragePercent,libraryCoveragePercent,findings\n";
  for (const FunctionResult &f : functions)
    os << f.library << "," << f.function << "," << round2(f.coverage_percent) << ","
       << round2(f.library_coverage_percent) << "," << f.findings.size() << "\n";
  return os.str();
}

CampaignReport run_campaign(const std::string &corpus_dir, const std::vector<LibraryManifest> &manifests,
                            const Config &config, int jobs) {
  struct Loaded {
    Program program;
    std::vector<ExportInfo> exports;
  };
  CampaignReport report;
  std::vector<Loaded> loaded(manifests.size());
  struct Task {
    std::size_t lib;
    std::size_t fn;
  };
  std::vector<Task> tasks;
  report.libraries.resize(manifests.size());
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    report.libraries[i].name = manifests[i].name;
    try {
      std::ifstream in(fs::path(corpus_dir) / manifests[i].source_path);
      if (!in)
        throw Error("cannot read " + manifests[i].source_path);
      std::stringstream ss;
      ss << in.rdbuf();
      SourceProgram src{manifests[i].source_path, ss.str(), {}};
      AstNode ast = parse(src);
      loaded[i].program = compile(ast);
      loaded[i].exports = string_exports(ast);
      for (std::size_t k = 0; k < loaded[i].exports.size(); ++k)
        tasks.push_back({i, k});
    } catch (Error &e) {
      report.libraries[i].error = e.what();
    }
  }

  struct TaskOutput {
    FunctionResult row;
    std::vector<TestCase> cases;
  };
  std::vector<TaskOutput> outputs(tasks.size());
  auto run_task = [&](std::size_t t) {
    const Task &task = tasks[t];
    const Loaded &lib = loaded[task.lib];
    const ExportInfo &info = lib.exports[task.fn];
    TaskOutput &out = outputs[t];
    out.row.library = manifests[task.lib].name;
    out.row.function = info.name;
    try {
      uint64_t seed = config.rng_seed ^ fnv(manifests[task.lib].name + "/" + info.name);
      std::vector<TestCase> seeds = random_seeds(info, 1, seed, config);
      GenerateReport g = generate(lib.program, info, config, &seeds.front().args);
      RunResult run =
          instrument_and_run(lib.program, info.name, g.test_cases, function_statements(lib.program, info.name), config);
      out.row.coverage_percent = run.coverage.percent;
      out.row.iterations = g.iterations;
      out.row.mean_iteration_ms = g.mean_iteration_ms();
      out.row.test_cases = static_cast<int>(g.test_cases.size());
      out.row.findings = std::move(run.findings);
      for (BugFinding &b : out.row.findings)
        b.library = out.row.library;
      out.cases = std::move(g.test_cases);
    } catch (std::exception &e) {
      out.row.error = e.what();
    }
  };

  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t t = next++; t < tasks.size(); t = next++)
      run_task(t);
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i)
      pool.emplace_back(worker);
    for (std::thread &th : pool)
      th.join();
  }

  // Library coverage: every case of every function, over all library statements.
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    if (!report.libraries[i].error.empty())
      continue;
    const Program &program = loaded[i].program;
    CoverageReport total;
    for (const Span &s : library_statements(program))
      total.per_statement[s] = 0;
    for (std::size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t].lib == i && outputs[t].row.error.empty())
        total.merge(instrument_and_run(program, outputs[t].row.function, outputs[t].cases, library_statements(program),
                                       config)
                        .coverage);
    total.merge({});
    report.libraries[i].coverage = std::move(total);
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    outputs[t].row.library_coverage_percent = report.libraries[tasks[t].lib].coverage.percent;
    report.functions.push_back(std::move(outputs[t].row));
  }
  return report;
}

}  // namespace sparktrace
