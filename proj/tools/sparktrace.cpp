#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sparktrace/harness.hpp"

using namespace sparktrace;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFindings = 1;
constexpr int kUsage = 2;
constexpr int kPipeline = 3;

struct UsageError : Error {
  using Error::Error;
};

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw UsageError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path &path, const std::string &contents) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot write " + path.string());
  out << contents;
}

struct Loaded {
  AstNode ast;
  Program program;
  std::vector<ExportInfo> exports;
};

Loaded load_source(const std::string &path) {
  SourceProgram src{path, read_file(path), {}};
  Loaded l;
  l.ast = parse(src);
  l.program = compile(l.ast);
  l.exports = list_exports(l.ast);
  return l;
}

const ExportInfo &find_export(const Loaded &l, const std::string &fn) {
  for (const ExportInfo &e : l.exports)
    if (e.name == fn)
      return e;
  std::string names;
  for (const ExportInfo &e : l.exports)
    names += (names.empty() ? "" : ", ") + e.name;
  throw UsageError("no exported function '" + fn + "'; exports: " + (names.empty() ? "(none)" : names));
}

// int:N, bool:true|false, null, str:TEXT, or bare TEXT (percent-decoded string).
Value parse_arg(const std::string &text) {
  if (text == "null")
    return Value::null();
  if (text.rfind("int:", 0) == 0) {
    try {
      std::size_t used = 0;
      long long v = std::stoll(text.substr(4), &used);
      if (used == text.size() - 4)
        return Value::integer(v);
    } catch (std::exception &) {
    }
    throw UsageError("bad integer argument '" + text + "'");
  }
  if (text == "bool:true" || text == "bool:false")
    return Value::boolean(text == "bool:true");
  if (text.rfind("str:", 0) == 0)
    return Value::string(percent_decode(text.substr(4)));
  return Value::string(percent_decode(text));
}

std::set<int> parse_sym(const std::string &text, int param_count) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty())
      continue;
    int i = -1;
    try {
      i = std::stoi(item);
    } catch (std::exception &) {
    }
    if (i < 0 || i >= param_count)
      throw UsageError("--sym index out of range: " + item);
    out.insert(i);
  }
  return out;
}

struct Global {
  std::string config_file;
  std::vector<std::string> sets;

  Config build() const {
    Config c;
    try {
      if (!config_file.empty())
        load_config_file(config_file, c);
      for (const std::string &kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw UsageError("--set expects key=value, got '" + kv + "'");
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      c.validate();
    } catch (const UsageError &) {
      throw;
    } catch (const Error &e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

int cmd_trace(const Global &g, const std::string &file, const std::string &fn, const std::vector<std::string> &arg_text,
              const std::string &sym_text, const std::string &out_stem) {
  Config config = g.build();
  Loaded l = load_source(file);
  const ExportInfo &info = find_export(l, fn);
  std::vector<Value> args;
  for (const std::string &a : arg_text)
    args.push_back(parse_arg(a));
  if (static_cast<int>(args.size()) != info.param_count)
    throw UsageError(fn + " takes " + std::to_string(info.param_count) + " arguments, got " +
                     std::to_string(args.size()));
  std::set<int> symbolic = sym_text.empty() ? std::set<int>{} : parse_sym(sym_text, info.param_count);
  TraceOptions topts;
  topts.max_string_len = config.max_string_len;
  topts.op_cap = config.trace_op_cap;
  MicroTrace raw = baseline_trace(l.program, *l.program.find(fn), args, symbolic, topts);
  MicroTrace extracted = extract_function_instr(raw);
  std::string stem = out_stem.empty() ? fn : out_stem;
  write_file(stem + ".raw.trace", dump_trace(raw));
  write_file(stem + ".trace", dump_trace(extracted));
  std::cout << "outcome: " << raw.outcome.summary() << "\n"
            << "raw ops: " << raw.ops.size() << ", extracted ops: " << extracted.ops.size() << "\n"
            << "wrote " << stem << ".raw.trace and " << stem << ".trace\n";
  return kOk;
}

int cmd_lift(const std::string &trace_path, const std::string &out) {
  MicroTrace t = load_trace(read_file(trace_path));
  IrModule m = build_entry(lift(t));
  std::string path = out;
  if (path.empty()) {
    fs::path p(trace_path);
    path = (p.parent_path() / p.stem()).string() + ".sir";
  }
  write_file(path, dump_ir(m));
  std::cout << "blocks: " << m.blocks.size() << ", assertions: " << m.assertions().size() << "\nwrote " << path
            << "\n";
  return kOk;
}

int cmd_replay(const std::string &sir_path, const std::string &tc_path) {
  IrModule m = load_ir(read_file(sir_path));
  TestCase tc = test_case_from_json(read_file(tc_path));
  Bindings b;
  for (const auto &[id, decl] : m.symbols) {
    if (id < 0 || static_cast<std::size_t>(id) >= tc.args.size() || tc.args[static_cast<std::size_t>(id)].tag != Tag::Str)
      throw UsageError("test case has no string argument for symbol " + std::to_string(id) + " (" + decl.name + ")");
    b[id] = tc.args[static_cast<std::size_t>(id)].str;
  }
  EvalResult r = eval_ir(m, b);
  std::cout << "outcome: " << r.outcome_name();
  if (!r.diverged)
    std::cout << " " << r.value.debug();
  std::cout << "\n";
  for (const LoggedError &e : r.errors)
    std::cout << "logged: " << e.value.debug() << (e.handled ? " (handled)" : "") << "\n";
  if (r.diverged) {
    std::cout << "assertion " << r.first_failed() << " failed\n";
    return kFindings;
  }
  std::cout << "all assertions hold (" << r.assertion_results.size() << ")\n";
  return kOk;
}

int cmd_gen(const Global &g, const std::string &file, const std::string &fn, bool keep, bool single,
            const std::optional<uint64_t> &rng_seed, const std::string &out_dir) {
  Config config = g.build();
  if (single)
    config.symbolize_all_strings = false;
  if (rng_seed)
    config.rng_seed = *rng_seed;
  if (!out_dir.empty())
    config.output_dir = out_dir;
  config.validate();
  Loaded l = load_source(file);
  const ExportInfo &info = find_export(l, fn);
  GenerateArtifacts artifacts;
  GenerateReport report = generate(l.program, info, config, nullptr, keep ? &artifacts : nullptr);
  fs::path dir = fs::path(config.output_dir) / fn;
  for (const TestCase &tc : report.test_cases)
    write_file(dir / ("case-" + std::to_string(tc.id) + ".tc.json"), test_case_to_json(tc));
  for (const auto &[name, contents] : artifacts.files)
    write_file(dir / "artifacts" / name, contents);
  write_file(dir / "report.json", report.to_json(config.timing));
  std::cout << "iterations: " << report.iterations << ", test cases: " << report.test_cases.size()
            << ", exceptions: " << report.exceptions.size() << ", divergences: " << report.divergences << "\n";
  for (const ExceptionRecord &e : report.exceptions)
    std::cout << outcome_kind_name(e.kind) << " " << e.span.str() << " " << e.message << " (case " << e.test_case
              << ")\n";
  std::cout << "wrote " << dir.string() << "\n";
  return report.exceptions.empty() && report.divergences == 0 ? kOk : kFindings;
}

int cmd_campaign(const Global &g, const std::string &corpus, int jobs, const std::string &out_dir,
                 const std::optional<uint64_t> &rng_seed) {
  Config config = g.build();
  if (rng_seed)
    config.rng_seed = *rng_seed;
  if (!out_dir.empty())
    config.output_dir = out_dir;
  config.validate();
  std::vector<LibraryManifest> manifests = load_manifest(corpus);
  CampaignReport report = run_campaign(corpus, manifests, config, jobs);
  fs::path dir(config.output_dir);
  write_file(dir / "campaign.json", report.to_json(config.timing));
  write_file(dir / "campaign.csv", report.to_csv());
  for (const FunctionResult &f : report.functions) {
    std::cout << f.library << "/" << f.function << ": " << f.coverage_percent << "% (library "
              << f.library_coverage_percent << "%), " << f.findings.size() << " findings";
    if (!f.error.empty())
      std::cout << ", error: " << f.error;
    std::cout << "\n";
  }
  int failures = 0;
  for (const LibraryResult &lib : report.libraries)
    if (!lib.error.empty()) {
      ++failures;
      std::cout << "library " << lib.name << " failed: " << lib.error << "\n";
    }
  for (const FunctionResult &f : report.functions)
    failures += f.error.empty() ? 0 : 1;
  std::cout << "findings: " << report.finding_count() << ", failures: " << failures << "\nwrote "
            << (dir / "campaign.json").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"sparktrace: trace, lift and concolically test MiniScript functions"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override one config key (key=value)");
  app.set_version_flag("--version", "TRACE v1\nMODULE v1");

  std::string file, fn, sym, out, trace_path, sir_path, tc_path, corpus;
  std::vector<std::string> args;
  bool keep = false, single = false;
  uint64_t seed_value = 0;
  int jobs = 1;

  auto *trace = app.add_subcommand("trace", "trace one call; writes raw and extracted traces");
  trace->add_option("file", file)->required();
  trace->add_option("fn", fn)->required();
  trace->add_option("--args", args, "arguments: text, str:TEXT, int:N, bool:true, null");
  trace->add_option("--sym", sym, "comma-separated parameter indices to make symbolic");
  trace->add_option("-o,--output", out, "output stem");

  auto *lift_cmd = app.add_subcommand("lift", "lift an extracted trace to a .sir module");
  lift_cmd->add_option("trace", trace_path)->required();
  lift_cmd->add_option("-o,--output", out, "output path");

  auto *replay = app.add_subcommand("replay", "evaluate a module under a test case's bindings");
  replay->add_option("sir", sir_path)->required();
  replay->add_option("testcase", tc_path)->required();

  auto *gen = app.add_subcommand("gen", "generate test cases for one exported function");
  gen->add_option("file", file)->required();
  gen->add_option("fn", fn)->required();
  gen->add_flag("--keep-artifacts", keep, "write per-iteration traces and modules");
  gen->add_flag("--single-symbolic-arg", single, "symbolize only the first String parameter");
  auto *gen_seed = gen->add_option("--rng-seed", seed_value);
  gen->add_option("-o,--output-dir", out);

  auto *campaign = app.add_subcommand("campaign", "run the harness over a corpus directory");
  campaign->add_option("corpus", corpus)->required()->check(CLI::ExistingDirectory);
  campaign->add_option("-j,--jobs", jobs)->check(CLI::PositiveNumber);
  auto *campaign_seed = campaign->add_option("--rng-seed", seed_value);
  campaign->add_option("-o,--output-dir", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*trace)
      return cmd_trace(g, file, fn, args, sym, out);
    if (*lift_cmd)
      return cmd_lift(trace_path, out);
    if (*replay)
      return cmd_replay(sir_path, tc_path);
    if (*gen)
      return cmd_gen(g, file, fn, keep, single, *gen_seed ? std::optional<uint64_t>(seed_value) : std::nullopt, out);
    if (*campaign)
      return cmd_campaign(g, corpus, jobs, out,
                          *campaign_seed ? std::optional<uint64_t>(seed_value) : std::nullopt);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPipeline;
  }
  return kUsage;
}
