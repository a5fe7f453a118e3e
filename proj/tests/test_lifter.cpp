#include <gtest/gtest.h>

#include <random>

#include "corpus.hpp"
#include "sparktrace/concolic.hpp"
#include "sparktrace/lifter.hpp"

using namespace sparktrace;

namespace {

struct Lifted {
  MicroTrace trace;
  IrModule module;
};

Lifted lift_source(const std::string &src, std::vector<Value> args, std::set<int> sym = {0}) {
  Program p = compile_source(src);
  Lifted out;
  out.trace = baseline_trace(p, p.functions.at(0), args, sym);
  out.module = build_entry(lift(extract_function_instr(out.trace)));
  return out;
}

const char *kEmptyCheck = "function f(s){if(s.length==0) return 0; return 1;}";

// Labels visited by following Goto terminators from the entry.
std::vector<std::string> chain(const IrModule &m) {
  std::vector<std::string> out;
  const IrBlock *b = m.find_block(m.entry);
  while (b) {
    out.push_back(b->label);
    if (b->term.kind != IrTerminator::Kind::Goto || out.size() > m.blocks.size())
      break;
    b = m.find_block(b->term.target);
  }
  return out;
}

}  // namespace

TEST(Lifter, ConstantReturn) {
  auto l = lift_source("function f(){return 7;}", {}, {});
  EvalResult r = eval_ir(l.module, {});
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.outcome, OutcomeKind::Returned);
  EXPECT_EQ(r.value, Value::integer(7));
  EXPECT_TRUE(r.assertion_results.empty());
  EXPECT_TRUE(l.module.assertions().empty());
}

TEST(Lifter, FailedLengthTestGivesOneFalseAssertion) {
  auto l = lift_source(kEmptyCheck, {Value::string("a")});
  auto asserts = l.module.assertions();
  ASSERT_EQ(asserts.size(), 1u);
  EXPECT_FALSE(asserts[0].expected);
}

TEST(Lifter, RawTraceRejected) {
  Program p = compile_source("function f(){return 7;}");
  MicroTrace raw = baseline_trace(p, p.functions[0], {}, {});
  try {
    lift(raw);
    FAIL();
  } catch (const LiftError &e) {
    EXPECT_EQ(e.seq, 0);
    EXPECT_NE(e.reason.find("VerifyFrameSize"), std::string::npos);
  }
}

TEST(Lifter, EntryChainCoversEveryBlock) {
  auto l = lift_source("function f(s){var n = 0; if (s.length > 1) { n = 1; } if (s.charAt(0) == \"x\") { n = n + 2; } return n;}",
                       {Value::string("xy")});
  IrModule bare = lift(extract_function_instr(l.trace));
  ASSERT_GE(bare.blocks.size(), 3u);
  auto labels = chain(l.module);
  EXPECT_EQ(labels.size(), bare.blocks.size() + 1);
  EXPECT_EQ(labels.front(), l.module.entry);
}

TEST(Lifter, EntryDeclaresSymbols) {
  auto without = lift_source("function f(s){return s.length;}", {Value::string("ab")}, {});
  for (const IrInstr &in : without.module.find_block(without.module.entry)->instrs)
    EXPECT_NE(in.kind, IrKind::MakeSymbolic);
  auto with = lift_source("function f(s){return s.length;}", {Value::string("ab")});
  int n = 0;
  for (const IrInstr &in : with.module.find_block(with.module.entry)->instrs)
    n += in.kind == IrKind::MakeSymbolic;
  EXPECT_EQ(n, 1);
}

TEST(Lifter, BuildEntryIdempotent) {
  auto l = lift_source(kEmptyCheck, {Value::string("a")});
  EXPECT_EQ(build_entry(l.module), l.module);
}

TEST(Lifter, DivergenceDetected) {
  auto l = lift_source(kEmptyCheck, {Value::string("a")});
  EvalResult same = eval_ir(l.module, bindings_from_trace(l.trace));
  EXPECT_FALSE(same.diverged);
  EXPECT_EQ(same.value, Value::integer(1));
  EvalResult r = eval_ir(l.module, {{0, ""}});
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.first_failed(), 0);
  ASSERT_FALSE(r.assertion_results.empty());
  EXPECT_FALSE(r.assertion_results[0]);
  EXPECT_EQ(r.outcome_name(), "Diverged");
}

TEST(Lifter, BindingLongerThanCapacity) {
  auto l = lift_source(kEmptyCheck, {Value::string("a")});
  EXPECT_THROW(eval_ir(l.module, {{0, "abc"}}), EvalError);
}

TEST(Lifter, UnhandledOutcomeReplays) {
  auto l = lift_source("function f(s){if (s.length == 1) { throw \"bad \" + s; } return 0;}", {Value::string("q")});
  EvalResult r = eval_ir(l.module, bindings_from_trace(l.trace));
  EXPECT_EQ(r.outcome, OutcomeKind::UnhandledException);
  EXPECT_EQ(r.value, Value::string("bad q"));
  EXPECT_TRUE(matches_outcome(r, l.trace.outcome));
}

TEST(Lifter, EmptyModuleRoundTrips) {
  IrModule m;
  m.function_name = "f";
  EXPECT_EQ(load_ir(dump_ir(m)), m);
}

TEST(Lifter, BadIrText) {
  EXPECT_THROW(load_ir("nonsense\n"), IrParseError);
}

TEST(Lifter, IrKindNames) {
  for (int i = 0; i <= static_cast<int>(IrKind::LogError); ++i) {
    IrKind k = static_cast<IrKind>(i);
    EXPECT_EQ(ir_kind_from_name(ir_kind_name(k)), k);
  }
}

// Replay fidelity and text round trip over the whole corpus.
TEST(Lifter, CorpusReplayAndRoundTrip) {
  std::mt19937_64 rng(5);
  Config config;
  int modules = 0;
  for (const auto &lib : support::load_corpus()) {
    for (const ExportInfo &e : lib.exports) {
      for (int i = 0; i < 8; ++i) {
        auto args = random_arguments(e.param_count, rng, config);
        MicroTrace t = baseline_trace(lib.program, *lib.program.find(e.name), args, symbolic_params(e, config));
        IrModule m = build_entry(lift(extract_function_instr(t)));
        EvalResult r = eval_ir(m, bindings_from_trace(t));
        ASSERT_FALSE(r.diverged) << lib.manifest.name << "/" << e.name;
        EXPECT_EQ(r.first_failed(), -1);
        EXPECT_TRUE(matches_outcome(r, t.outcome)) << lib.manifest.name << "/" << e.name;
        std::string text = dump_ir(m);
        EXPECT_EQ(dump_ir(m), text);
        EXPECT_EQ(load_ir(text), m) << lib.manifest.name << "/" << e.name;
        ++modules;
      }
    }
  }
  EXPECT_GT(modules, 300);
}
