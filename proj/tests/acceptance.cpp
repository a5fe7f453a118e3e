// Acceptance gate. One PASS/FAIL line per criterion; exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "constructs.hpp"
#include "corpus.hpp"
#include "oracles.hpp"
#include "sparktrace/harness.hpp"

using namespace sparktrace;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned limits.
constexpr int kMirrorInputs = 100;
constexpr double kMirrorSeconds = 30;
constexpr double kMatrixSeconds = 10;
constexpr int kSolverPaths = 1000;
constexpr double kSolverSeconds = 60;
constexpr int kBugIterations = 50;
constexpr double kBugSeconds = 120;
constexpr double kCoverageFloor = 75.0;
constexpr double kOracleGap = 10.0;
constexpr double kCoverageSeconds = 300;
constexpr std::size_t kSpeedBytecodes = 200;
constexpr double kIterationMs = 1000;

struct Verdict {
  bool pass = true;
  std::string detail;
  void fail(const std::string &why) {
    if (pass)
      detail = why;
    pass = false;
  }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<LibraryManifest> manifests_named(const std::vector<std::string> &names) {
  std::vector<LibraryManifest> out;
  for (LibraryManifest &m : load_manifest(support::corpus_dir()))
    for (const std::string &n : names)
      if (m.name == n)
        out.push_back(m);
  return out;
}

// 1 and 2 share the traces.
void mirroring(const std::vector<support::LoadedLibrary> &corpus, Verdict &mirror, Verdict &extract) {
  auto start = Clock::now();
  Config config;
  std::mt19937_64 rng(config.rng_seed);
  int traces = 0;
  for (const auto &lib : corpus) {
    for (const ExportInfo &e : lib.exports) {
      const BytecodeFunction &fn = *lib.program.find(e.name);
      std::set<int> sym = symbolic_params(e, config);
      for (int i = 0; i < kMirrorInputs; ++i) {
        auto args = random_arguments(e.param_count, rng, config);
        ExecOutcome o = interpret(lib.program, fn, args);
        MicroTrace raw = baseline_trace(lib.program, fn, args, sym);
        std::vector<int64_t> pcs;
        for (const DispatchEntry &d : o.dispatch_log)
          pcs.push_back(d.pc);
        std::string where = lib.manifest.name + "/" + e.name + " input " + std::to_string(i);
        if (!o.same_result(raw.outcome))
          mirror.fail("outcome differs at " + where);
        if (raw.dispatch_pcs() != pcs)
          mirror.fail("dispatch sequence differs at " + where);

        MicroTrace x = extract_function_instr(raw);
        std::size_t verification = 0, left = 0;
        for (const MicroOp &op : raw.ops)
          verification += op.tag == MicroTag::Verification;
        for (const MicroOp &op : x.ops)
          left += op.tag == MicroTag::Verification;
        if (x.ops.size() + verification != raw.ops.size() || left != 0)
          extract.fail("count mismatch at " + where);
        ++traces;
      }
    }
  }
  double secs = seconds_since(start);
  if (secs >= kMirrorSeconds)
    mirror.fail("took " + fmt("%.1f", secs) + " s");
  std::string summary = std::to_string(traces) + " traces, " + fmt("%.1f s", secs);
  if (mirror.pass)
    mirror.detail = summary;
  if (extract.pass)
    extract.detail = std::to_string(traces) + " traces";
}

Verdict matrix() {
  Verdict v;
  auto start = Clock::now();
  int n = 0;
  for (const support::Construct &c : support::construct_matrix()) {
    try {
      Program p = compile_source(c.source, c.name);
      const BytecodeFunction &fn = p.functions.at(0);
      ExecOutcome concrete = interpret(p, fn, c.args);
      MicroTrace x = extract_function_instr(baseline_trace(p, fn, c.args, {0}));
      IrModule m = build_entry(lift(x));
      EvalResult r = eval_ir(m, bindings_from_trace(x));
      bool all_true = r.first_failed() == -1 && !r.diverged && r.assertion_results.size() == m.assertions().size();
      if (!matches_outcome(r, concrete) || !all_true)
        v.fail(c.name + ": replay does not reproduce the concrete run");
    } catch (const std::exception &e) {
      v.fail(c.name + ": " + e.what());
    }
    ++n;
  }
  double secs = seconds_since(start);
  if (n != 16)
    v.fail("matrix has " + std::to_string(n) + " programs");
  if (secs >= kMatrixSeconds)
    v.fail("took " + fmt("%.1f", secs) + " s");
  if (v.pass)
    v.detail = "16 programs, " + fmt("%.2f s", secs);
  return v;
}

Verdict solver_oracle() {
  Verdict v;
  auto start = Clock::now();
  std::mt19937_64 rng(2024);
  const std::string letters = "abcd";
  int checks = 0, sat = 0;
  for (int i = 0; i < kSolverPaths && v.pass; ++i) {
    support::RandomPathOptions opts;
    opts.alphabet = letters.substr(0, 2 + i % 3);
    opts.symbols = 1 + (i / 3) % 2;
    opts.max_len = 3;
    Bindings observed;
    PathCondition pc = support::random_path(rng, opts, &observed);
    auto domain = support::all_strings(opts.alphabet, opts.max_len);
    std::set<std::string> in_domain(domain.begin(), domain.end());
    std::map<int, SymbolDecl> decls;
    std::set<int> ids;
    for (int s = 0; s < opts.symbols; ++s) {
      decls[s] = SymbolDecl{"s" + std::to_string(s), 0, opts.max_len, -1};
      ids.insert(s);
    }
    SolverOptions sopts;
    sopts.alphabet = opts.alphabet;
    sopts.max_len = opts.max_len;
    std::size_t k = rng() % pc.size();
    bool want = support::brute_force_sat(pc, k, ids, domain);
    SolveResult r = negate_and_solve(pc, k, decls, observed, sopts);
    ++checks;
    std::string where = "path " + std::to_string(i);
    if (r.status == SolveStatus::Unknown)
      v.fail(where + ": solver gave up");
    else if ((r.status == SolveStatus::Sat) != want)
      v.fail(where + ": verdict " + std::string(solve_status_name(r.status)) + ", enumeration says " +
             (want ? "sat" : "unsat"));
    else if (r.status == SolveStatus::Sat) {
      ++sat;
      bool ok = support::satisfies_negation(pc, k, r.model);
      for (int s : ids)
        ok = ok && r.model.count(s) && in_domain.count(r.model.at(s));
      if (!ok)
        v.fail(where + ": witness is not among the enumerated solutions");
    }
  }
  double secs = seconds_since(start);
  if (secs >= kSolverSeconds)
    v.fail("took " + fmt("%.1f", secs) + " s");
  if (v.pass)
    v.detail = std::to_string(checks) + " path conditions (" + std::to_string(sat) + " sat), " + fmt("%.1f s", secs);
  return v;
}

struct Shape {
  std::string library, function;
  OutcomeKind kind;
  std::string message_part;
};

Verdict bugs(const std::vector<support::LoadedLibrary> &corpus) {
  const std::vector<Shape> shapes = {
      {"benchmarkify-mini", "formatNumber", OutcomeKind::UnhandledException, "Cannot read properties of null"},
      {"msgpack5-mini", "encodeDate", OutcomeKind::UnhandledException, "Cannot read properties of null"},
      {"is-regex-mini", "regexExec", OutcomeKind::UnhandledException, "SyntaxError: Invalid regular expression"},
      {"validator-mini", "isVAT", OutcomeKind::HandledException, "no validator for country code"},
      {"chalk-mini", "chalkClass", OutcomeKind::UnhandledException, "deprecated"},
      {"stringify-mini", "stringify", OutcomeKind::UnhandledException, "unknown stringify option"},
  };
  Verdict v;
  auto start = Clock::now();
  std::vector<std::string> names;
  for (const Shape &s : shapes)
    names.push_back(s.library);
  Config config;
  config.max_iterations = kBugIterations;
  CampaignReport rep = run_campaign(support::corpus_dir(), manifests_named(names), config);
  int found = 0;
  for (const Shape &s : shapes) {
    bool hit = false;
    for (const FunctionResult &f : rep.functions) {
      if (f.library != s.library || f.function != s.function)
        continue;
      if (f.iterations > kBugIterations)
        v.fail(s.function + " ran " + std::to_string(f.iterations) + " iterations");
      for (const BugFinding &b : f.findings) {
        if (b.kind != s.kind || b.message.find(s.message_part) == std::string::npos)
          continue;
        // The witness alone must reproduce it.
        const auto &lib = support::find_library(corpus, s.library);
        ExecOutcome o = interpret(lib.program, *lib.program.find(s.function), b.witness_args);
        std::string msg = o.kind == OutcomeKind::UnhandledException ? o.message
                          : o.handled.empty()                         ? ""
                                                                      : o.handled[0].message;
        hit |= o.kind == s.kind && msg == b.message;
      }
    }
    if (hit)
      ++found;
    else
      v.fail("missed " + s.library + "/" + s.function);
  }
  double secs = seconds_since(start);
  if (secs >= kBugSeconds)
    v.fail("took " + fmt("%.1f", secs) + " s");
  if (v.pass)
    v.detail = std::to_string(found) + "/6 shapes, " + fmt("%.1f s", secs);
  return v;
}

Verdict coverage(const std::vector<support::LoadedLibrary> &corpus, const CampaignReport &rep, double campaign_secs) {
  Verdict v;
  auto start = Clock::now();
  auto domain = support::all_strings("abcd", 3);
  double engine_sum = 0, oracle_sum = 0, lowest = 100;
  std::string lowest_name;
  for (const auto &lib : corpus) {
    const LibraryResult *got = nullptr;
    for (const LibraryResult &l : rep.libraries)
      if (l.name == lib.manifest.name)
        got = &l;
    if (!got || !got->error.empty()) {
      v.fail(lib.manifest.name + " failed in the campaign");
      continue;
    }
    double pct = got->coverage.percent;
    if (pct < kCoverageFloor)
      v.fail(lib.manifest.name + " at " + fmt("%.2f%%", pct));
    if (pct < lowest) {
      lowest = pct;
      lowest_name = lib.manifest.name;
    }
    engine_sum += pct;
    oracle_sum += support::exhaustive_coverage(lib.ast, domain).percent();
  }
  double n = static_cast<double>(corpus.size());
  double engine = engine_sum / n, oracle = oracle_sum / n;
  if (std::fabs(engine - oracle) > kOracleGap)
    v.fail("mean " + fmt("%.2f", engine) + " vs oracle " + fmt("%.2f", oracle));
  double secs = campaign_secs + seconds_since(start);
  if (secs >= kCoverageSeconds)
    v.fail("took " + fmt("%.1f", secs) + " s");
  if (v.pass)
    v.detail = "lowest " + lowest_name + " " + fmt("%.2f%%", lowest) + ", mean " + fmt("%.2f", engine) +
               " vs oracle " + fmt("%.2f", oracle) + ", " + fmt("%.1f s", secs);
  return v;
}

Verdict single_arg() {
  Verdict v;
  auto manifests = manifests_named({"path-join-mini"});
  Config all;
  Config single;
  single.symbolize_all_strings = false;
  CampaignReport a = run_campaign(support::corpus_dir(), manifests, all);
  CampaignReport s = run_campaign(support::corpus_dir(), manifests, single);
  if (a.functions.size() != 1 || a.functions[0].function != "join") {
    v.fail("expected one two-argument export 'join'");
    return v;
  }
  double pa = a.functions[0].coverage_percent, ps = s.functions[0].coverage_percent;
  if (!(ps < pa))
    v.fail("single " + fmt("%.2f", ps) + " vs all " + fmt("%.2f", pa));
  else
    v.detail = "join: all args " + fmt("%.2f%%", pa) + ", single arg " + fmt("%.2f%%", ps);
  return v;
}

Verdict speed(const std::vector<support::LoadedLibrary> &corpus, const CampaignReport &rep) {
  Verdict v;
  double total_ms = 0;
  long iterations = 0;
  int functions = 0;
  for (const FunctionResult &f : rep.functions) {
    const auto &lib = support::find_library(corpus, f.library);
    if (lib.program.find(f.function)->code.size() > kSpeedBytecodes)
      continue;
    total_ms += f.mean_iteration_ms * f.iterations;
    iterations += f.iterations;
    ++functions;
  }
  double mean = iterations ? total_ms / static_cast<double>(iterations) : 0;
  if (!iterations)
    v.fail("no iterations measured");
  else if (mean >= kIterationMs)
    v.fail("mean " + fmt("%.1f ms", mean));
  else
    v.detail = fmt("mean %.2f ms", mean) + " over " + std::to_string(iterations) + " iterations in " +
               std::to_string(functions) + " functions";
  return v;
}

Verdict determinism() {
  Verdict v;
  Config config;
  config.timing = false;
  auto manifests = load_manifest(support::corpus_dir());
  CampaignReport a = run_campaign(support::corpus_dir(), manifests, config);
  CampaignReport b = run_campaign(support::corpus_dir(), manifests, config);
  std::string ja = a.to_json(false), jb = b.to_json(false);
  if (ja != jb || a.to_csv() != b.to_csv())
    v.fail("reports differ");
  else
    v.detail = std::to_string(ja.size()) + " bytes identical";
  return v;
}

Verdict guarded(const std::function<Verdict()> &f) {
  try {
    return f();
  } catch (const std::exception &e) {
    Verdict v;
    v.fail(std::string("error: ") + e.what());
    return v;
  }
}

}  // namespace

int main() {
  std::vector<support::LoadedLibrary> corpus = support::load_corpus();
  std::vector<std::pair<std::string, Verdict>> results;
  auto report = [&](int n, const std::string &name, const Verdict &v) {
    std::printf("%s criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", n, name.c_str(), v.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(name, v);
  };

  Verdict mirror, extract;
  try {
    mirroring(corpus, mirror, extract);
  } catch (const std::exception &e) {
    mirror.fail(std::string("error: ") + e.what());
    extract.fail(std::string("error: ") + e.what());
  }
  report(1, "mirroring", mirror);
  report(2, "extraction-count", extract);
  report(3, "replay-matrix", guarded(matrix));
  report(4, "solver-oracle", guarded(solver_oracle));
  report(5, "bug-detection", guarded([&] { return bugs(corpus); }));

  CampaignReport campaign;
  double campaign_secs = 0;
  std::string campaign_error;
  try {
    auto start = Clock::now();
    campaign = run_campaign(support::corpus_dir(), load_manifest(support::corpus_dir()), Config{});
    campaign_secs = seconds_since(start);
  } catch (const std::exception &e) {
    campaign_error = e.what();
  }
  auto needs_campaign = [&](auto f) {
    return guarded([&] {
      if (!campaign_error.empty())
        throw Error(campaign_error);
      return f();
    });
  };
  report(6, "coverage", needs_campaign([&] { return coverage(corpus, campaign, campaign_secs); }));
  report(7, "single-arg", guarded(single_arg));
  report(8, "iteration-speed", needs_campaign([&] { return speed(corpus, campaign); }));
  report(9, "determinism", guarded(determinism));

  int failed = 0;
  for (const auto &[name, v] : results)
    failed += !v.pass;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  return failed ? 1 : 0;
}
