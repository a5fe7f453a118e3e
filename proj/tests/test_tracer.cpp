#include <gtest/gtest.h>

#include <random>

#include "corpus.hpp"
#include "sparktrace/concolic.hpp"
#include "sparktrace/tracer.hpp"

using namespace sparktrace;

namespace {

std::vector<MicroKind> kinds(const MicroTrace &t) {
  std::vector<MicroKind> out;
  for (const MicroOp &op : t.ops)
    out.push_back(op.kind);
  return out;
}

struct Snapshot {
  int depth;
  int function;
  int64_t pc;
  std::vector<Value> registers;
  Value acc;
  bool operator==(const Snapshot &) const = default;
};

void PrintTo(const Snapshot &s, std::ostream *os) {
  *os << "depth " << s.depth << " fn " << s.function << " pc " << s.pc << " acc " << s.acc.debug() << " regs [";
  for (const Value &v : s.registers)
    *os << " " << v.debug();
  *os << " ]";
}

std::function<void(const FrameView &)> recorder(std::vector<Snapshot> &out) {
  return [&out](const FrameView &v) {
    out.push_back({v.depth, v.function, v.pc, {v.registers.begin(), v.registers.end()}, *v.accumulator});
  };
}

std::size_t verification_ops(const MicroTrace &t) {
  std::size_t n = 0;
  for (const MicroOp &op : t.ops)
    n += op.tag == MicroTag::Verification;
  return n;
}

}  // namespace

TEST(Tracer, ConstantReturn) {
  Program p = compile_source("function f(){return 1;}");
  MicroTrace t = baseline_trace(p, p.functions[0], {}, {});
  using K = MicroKind;
  EXPECT_EQ(kinds(t), (std::vector<K>{K::VerifyFrameSize, K::VerifyFeedbackVector, K::LoadConst, K::VerifyFrameSize,
                                      K::VerifyFeedbackVector, K::Ret}));
  EXPECT_EQ(t.outcome.kind, OutcomeKind::Returned);
  EXPECT_EQ(t.outcome.value, Value::integer(1));
  MicroTrace x = extract_function_instr(t);
  EXPECT_EQ(kinds(x), (std::vector<K>{K::LoadConst, K::Ret}));
}

TEST(Tracer, SymbolicPinCarriesLength) {
  Program p = compile_source("function f(s){return s.length;}");
  std::vector<Value> args{Value::string("ab")};
  MicroTrace t = baseline_trace(p, p.functions[0], args, {0});
  int pins = 0;
  for (const MicroOp &op : t.ops)
    if (op.kind == MicroKind::SymbolicPin) {
      ++pins;
      EXPECT_EQ(op.operands[0], 0);
      EXPECT_EQ(op.operands[2], 2);
    }
  EXPECT_EQ(pins, 1);
  EXPECT_EQ(t.outcome.value, Value::integer(2));
  ASSERT_EQ(t.symbols.count(0), 1u);
  EXPECT_EQ(t.symbols.at(0).length, 2);
  EXPECT_NE(dump_trace(t).find("\nsym 0 "), std::string::npos);
}

TEST(Tracer, NonStringParamStaysConcrete) {
  Program p = compile_source("function f(s){return s;}");
  std::vector<Value> args{Value::integer(3)};
  MicroTrace t = baseline_trace(p, p.functions[0], args, {0});
  EXPECT_TRUE(t.symbols.empty());
  EXPECT_EQ(t.outcome.value, Value::integer(3));
}

TEST(Tracer, ExtractionIsIdempotent) {
  Program p = compile_source("function f(s){if (s.length == 0) { return 0; } return s.charCodeAt(0);}");
  std::vector<Value> args{Value::string("q")};
  MicroTrace x = extract_function_instr(baseline_trace(p, p.functions[0], args, {0}));
  EXPECT_EQ(extract_function_instr(x), x);
  EXPECT_EQ(verification_ops(x), 0u);
}

TEST(Tracer, EmptyTraceDumpsHeaderOnly) {
  MicroTrace t;
  t.function_name = "f";
  std::string text = dump_trace(t);
  EXPECT_EQ(text.rfind("TRACE v1\n", 0), 0u);
  EXPECT_EQ(text.find("\n0 "), std::string::npos);
  EXPECT_EQ(load_trace(text), t);
}

TEST(Tracer, OpCap) {
  Program p = compile_source("function f(s){var i = 0; while (i < 100) { i = i + 1; } return i;}");
  TraceOptions opts;
  opts.op_cap = 50;
  std::vector<Value> args{Value::string("")};
  EXPECT_THROW(baseline_trace(p, p.functions[0], args, {}, opts), TraceOverflow);
}

TEST(Tracer, MalformedTraceText) {
  EXPECT_THROW(load_trace("TRACE v2\n"), TraceParseError);
  EXPECT_THROW(load_trace("TRACE v1\nfunc f\n0 ControlFlow 0 Bogus 1\n"), TraceParseError);
  EXPECT_THROW(load_trace("TRACE v1\nfunc f\n0 ControlFlow 0 Ret 1\n"), TraceParseError);
}

TEST(Tracer, HexRoundTrip) {
  std::vector<uint8_t> bytes{0, 1, 0x7f, 0x80, 0xff};
  EXPECT_EQ(hex_decode(hex_encode(bytes)), bytes);
}

TEST(Tracer, MemoryReadWrite) {
  TraceMemory m;
  int64_t a = m.allocate(3, RegionClass::StringData, "xyz");
  int64_t b = m.allocate(16, RegionClass::Scratch);
  EXPECT_GE(a, TraceMemory::kBase);
  EXPECT_EQ(m.read_string(a, 3), "xyz");
  m.write64(b, -2);
  EXPECT_EQ(m.read64(b), -2);
  m.write8(a, 'Q');
  EXPECT_EQ(m.read_string(a, 3), "Qyz");
  auto image = m.initial_image();
  ASSERT_EQ(image.size(), 2u);
  EXPECT_EQ(image[0].bytes, (std::vector<uint8_t>{'x', 'y', 'z'}));
  EXPECT_FALSE(m.contains(b + 16));
}

// Differential run against the interpreter, down to register contents at
// every dispatch, plus extraction counts and text round trip.
TEST(Tracer, MirrorsInterpreterOnCorpus) {
  std::mt19937_64 rng(11);
  Config config;
  int traces = 0;
  for (const auto &lib : support::load_corpus()) {
    for (const ExportInfo &e : lib.exports) {
      const BytecodeFunction &fn = *lib.program.find(e.name);
      for (int i = 0; i < 15; ++i) {
        auto args = random_arguments(e.param_count, rng, config);
        std::vector<Snapshot> a, b;
        RunOptions ropts;
        ropts.on_dispatch = recorder(a);
        ExecOutcome o = interpret(lib.program, fn, args, ropts);
        TraceOptions topts;
        topts.on_dispatch = recorder(b);
        MicroTrace t = baseline_trace(lib.program, fn, args, symbolic_params(e, config), topts);
        ASSERT_TRUE(o.same_result(t.outcome)) << lib.manifest.name << "/" << e.name;
        ASSERT_EQ(a.size(), b.size()) << lib.manifest.name << "/" << e.name;
        for (std::size_t k = 0; k < a.size(); ++k)
          ASSERT_EQ(a[k], b[k]) << lib.manifest.name << "/" << e.name << " dispatch " << k;
        std::vector<int64_t> pcs;
        for (const DispatchEntry &d : o.dispatch_log)
          pcs.push_back(d.pc);
        ASSERT_EQ(t.dispatch_pcs(), pcs);

        MicroTrace x = extract_function_instr(t);
        EXPECT_EQ(x.ops.size() + verification_ops(t), t.ops.size());
        EXPECT_EQ(verification_ops(x), 0u);
        EXPECT_EQ(load_trace(dump_trace(t)), t);
        EXPECT_EQ(load_trace(dump_trace(x)), x);
        ++traces;
      }
    }
  }
  EXPECT_GT(traces, 500);
}
