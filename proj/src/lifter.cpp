#include "sparktrace/lifter.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

namespace sparktrace {

namespace {

struct IrInfo {
  IrKind kind;
  std::string_view name;
  bool result;
};

constexpr IrInfo kIrTable[] = {
    {IrKind::Const, "Const", true},         {IrKind::Add, "Add", true},
    {IrKind::Sub, "Sub", true},             {IrKind::Mul, "Mul", true},
    {IrKind::Div, "Div", true},             {IrKind::Mod, "Mod", true},
    {IrKind::CmpEq, "CmpEq", true},         {IrKind::CmpLt, "CmpLt", true},
    {IrKind::CmpLe, "CmpLe", true},         {IrKind::Not, "Not", true},
    {IrKind::Select, "Select", true},       {IrKind::ReadMem8, "ReadMem8", true},
    {IrKind::WriteMem8, "WriteMem8", false}, {IrKind::MakeSymbolic, "MakeSymbolic", true},
    {IrKind::AssertPathTaken, "AssertPathTaken", false}, {IrKind::LogError, "LogError", false},
};

// Operand shape per kind: 'v' value id, 'i' immediate, 't' tag name.
std::string_view ir_shape(IrKind k) {
  switch (k) {
  case IrKind::Const: return "i";
  case IrKind::Not:
  case IrKind::ReadMem8: return "v";
  case IrKind::Select: return "vvv";
  case IrKind::WriteMem8: return "vv";
  case IrKind::MakeSymbolic: return "iii";
  case IrKind::AssertPathTaken: return "viii";
  case IrKind::LogError: return "tvvii";
  default: return "vv";
  }
}

}  // namespace

std::string_view ir_kind_name(IrKind k) { return kIrTable[static_cast<int>(k)].name; }

std::optional<IrKind> ir_kind_from_name(std::string_view name) {
  for (const IrInfo &info : kIrTable)
    if (info.name == name)
      return info.kind;
  return std::nullopt;
}

bool ir_has_result(IrKind k) { return kIrTable[static_cast<int>(k)].result; }

const IrBlock *IrModule::find_block(std::string_view label) const {
  for (const IrBlock &b : blocks)
    if (b.label == label)
      return &b;
  return nullptr;
}

std::vector<PathAssertion> IrModule::assertions() const {
  std::vector<PathAssertion> out;
  for (const IrBlock &b : blocks)
    for (const IrInstr &in : b.instrs)
      if (in.kind == IrKind::AssertPathTaken)
        out.push_back({in.args[0], in.imms[0] != 0, in.imms[1], in.imms[2]});
  return out;
}

// Lifting -------------------------------------------------------------------

namespace {

const MemRegion *region_at(const std::vector<MemRegion> &memory, int64_t addr, int64_t length) {
  for (const MemRegion &r : memory)
    if (addr >= r.base && addr + length <= r.end())
      return &r;
  return nullptr;
}

class Lifter {
public:
  explicit Lifter(const MicroTrace &trace) : trace_(trace) {
    module_.function_name = trace.function_name;
    module_.memory = trace.memory;
    for (const auto &[id, sym] : trace.symbols)
      module_.symbols[id] = {sym.name, sym.base, sym.length, -1};
    regs_.fill(-1);
    current_.label = "b0";
  }

  IrModule run() {
    for (std::size_t i = 0; i < trace_.ops.size(); ++i) {
      seq_ = static_cast<int64_t>(i);
      if (halted_)
        fail("op after the trace halted");
      lift_op(trace_.ops[i]);
    }
    if (!halted_)
      fail("trace ends without a return or an unhandled throw");
    for (auto &[id, decl] : module_.symbols)
      if (decl.length_value < 0)
        decl.length_value = module_.value_count++;
    return std::move(module_);
  }

private:
  [[noreturn]] void fail(const std::string &reason) const { throw LiftError(seq_, reason); }

  int emit(IrKind kind, std::vector<int> args, std::vector<int64_t> imms = {}) {
    IrInstr in;
    in.kind = kind;
    in.args = std::move(args);
    in.imms = std::move(imms);
    if (ir_has_result(kind))
      in.result = module_.value_count++;
    current_.instrs.push_back(std::move(in));
    return current_.instrs.back().result;
  }
  int konst(int64_t v) { return emit(IrKind::Const, {}, {v}); }

  int reg(int64_t r) const {
    if (r < 0 || r >= kMachineRegs)
      fail("machine register out of range: " + std::to_string(r));
    if (regs_[r] < 0)
      fail("read of undefined machine register M" + std::to_string(r));
    return regs_[r];
  }
  void set_reg(int64_t r, int value) {
    if (r < 0 || r >= kMachineRegs)
      fail("machine register out of range: " + std::to_string(r));
    regs_[r] = value;
  }

  int word(int64_t addr) {
    auto it = words_.find(addr);
    if (it != words_.end())
      return it->second;
    const MemRegion *r = region_at(module_.memory, addr, 8);
    if (!r)
      fail("register slot " + std::to_string(addr) + " outside memory image");
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
      v = (v << 8) | r->bytes[static_cast<std::size_t>(addr - r->base + i)];
    int id = konst(static_cast<int64_t>(v));
    words_[addr] = id;
    return id;
  }

  void check_byte(int64_t addr) const {
    if (!region_at(module_.memory, addr, 1))
      fail("memory access at " + std::to_string(addr) + " outside memory image");
  }

  void split() {
    if (current_.instrs.empty())
      return;
    std::string next = "b" + std::to_string(module_.blocks.size() + 1);
    current_.term.kind = IrTerminator::Kind::Goto;
    current_.term.target = next;
    module_.blocks.push_back(std::move(current_));
    current_ = IrBlock{};
    current_.label = next;
  }

  void halt(OutcomeKind kind, Tag tag, int a, int b) {
    current_.term.kind = IrTerminator::Kind::Halt;
    current_.term.outcome = kind;
    current_.term.tag = tag;
    current_.term.a = a;
    current_.term.b = b;
    module_.blocks.push_back(std::move(current_));
    halted_ = true;
  }

  static Tag tag_of(int64_t v, int64_t seq) {
    if (v < 0 || v > static_cast<int64_t>(Tag::Null))
      throw LiftError(seq, "bad value tag " + std::to_string(v));
    return static_cast<Tag>(v);
  }

  void lift_op(const MicroOp &op) {
    const auto &o = op.operands;
    if (op.tag == MicroTag::Verification)
      fail("unexpected Verification op " + std::string(micro_kind_name(op.kind)) + " (trace was not extracted)");
    switch (op.kind) {
    case MicroKind::LoadReg:
      set_reg(o[0], word(o[2]));
      set_reg(o[1], word(o[2] + 8));
      break;
    case MicroKind::StoreReg:
      if (!region_at(module_.memory, o[0], 16))
        fail("register slot " + std::to_string(o[0]) + " outside memory image");
      words_[o[0]] = reg(o[1]);
      words_[o[0] + 8] = reg(o[2]);
      break;
    case MicroKind::LoadConst:
      set_reg(o[0], konst(o[2]));
      set_reg(o[1], konst(o[3]));
      break;
    case MicroKind::LoadImm:
      set_reg(o[0], konst(o[1]));
      break;
    case MicroKind::ArithAdd:
    case MicroKind::ArithSub:
    case MicroKind::ArithMul:
    case MicroKind::ArithDiv:
    case MicroKind::ArithMod:
    case MicroKind::CmpEq:
    case MicroKind::CmpLt:
    case MicroKind::CmpLe: {
      static constexpr IrKind kMap[] = {IrKind::Add, IrKind::Sub,   IrKind::Mul,   IrKind::Div,
                                        IrKind::Mod, IrKind::CmpEq, IrKind::CmpLt, IrKind::CmpLe};
      IrKind k = kMap[static_cast<int>(op.kind) - static_cast<int>(MicroKind::ArithAdd)];
      int l = reg(o[1]), r = reg(o[2]);
      set_reg(o[0], emit(k, {l, r}));
      break;
    }
    case MicroKind::BranchTaken:
    case MicroKind::BranchNotTaken: {
      bool taken = op.kind == MicroKind::BranchTaken;
      bool sense = o[1] != 0;
      emit(IrKind::AssertPathTaken, {reg(o[0])}, {taken == sense ? 1 : 0, o[2], o[3]});
      split();
      break;
    }
    case MicroKind::MemRead8:
      check_byte(o[2]);
      set_reg(o[0], emit(IrKind::ReadMem8, {reg(o[1])}));
      break;
    case MicroKind::MemWrite8:
      check_byte(o[2]);
      emit(IrKind::WriteMem8, {reg(o[0]), reg(o[1])});
      break;
    case MicroKind::StrOpBegin:
    case MicroKind::StrOpEnd:
      break;
    case MicroKind::CallBegin:
      split();
      ++depth_;
      break;
    case MicroKind::CallEnd:
      if (depth_ == 0)
        fail("CallEnd without CallBegin");
      --depth_;
      split();
      break;
    case MicroKind::Ret:
      if (depth_ == 0)
        halt(handled_ ? OutcomeKind::HandledException : OutcomeKind::Returned, tag_of(o[0], seq_), reg(o[1]),
             reg(o[2]));
      break;
    case MicroKind::ThrowOp: {
      Tag tag = tag_of(o[0], seq_);
      int a = reg(o[1]), b = reg(o[2]);
      emit(IrKind::LogError, {a, b}, {static_cast<int64_t>(tag), o[3], op.origin_pc});
      if (o[3]) {
        handled_ = true;
      } else {
        halt(OutcomeKind::UnhandledException, tag, a, b);
      }
      break;
    }
    case MicroKind::SymbolicPin: {
      auto it = module_.symbols.find(static_cast<int>(o[0]));
      if (it == module_.symbols.end())
        fail("SymbolicPin for undeclared symbol " + std::to_string(o[0]));
      SymbolDecl &decl = it->second;
      if (decl.base != o[1] || decl.capacity != o[2])
        fail("SymbolicPin disagrees with the symbol table");
      if (decl.capacity > 0)
        check_byte(decl.base + decl.capacity - 1);
      if (decl.length_value < 0)
        decl.length_value = module_.value_count++;
      if (!region_at(module_.memory, o[3], 16))
        fail("pinned slot outside memory image");
      words_[o[3] + 8] = decl.length_value;
      break;
    }
    case MicroKind::VerifyFrameSize:
    case MicroKind::VerifyFeedbackVector:
      fail("unexpected " + std::string(micro_kind_name(op.kind)));
    }
  }

  const MicroTrace &trace_;
  IrModule module_;
  IrBlock current_;
  std::array<int, kMachineRegs> regs_{};
  std::map<int64_t, int> words_;
  int64_t seq_ = 0;
  int depth_ = 0;
  bool handled_ = false;
  bool halted_ = false;
};

}  // namespace

IrModule lift(const MicroTrace &extracted) { return Lifter(extracted).run(); }

IrModule build_entry(const IrModule &module) {
  if (!module.entry.empty())
    return module;
  if (module.blocks.empty())
    throw Error("build_entry: module has no blocks");
  IrModule out = module;
  IrBlock main;
  main.label = "main";
  for (const auto &[id, decl] : module.symbols) {
    IrInstr in;
    in.kind = IrKind::MakeSymbolic;
    in.result = decl.length_value;
    in.imms = {id, decl.base, decl.capacity};
    main.instrs.push_back(std::move(in));
  }
  main.term.kind = IrTerminator::Kind::Goto;
  main.term.target = module.blocks.front().label;
  out.blocks.insert(out.blocks.begin(), std::move(main));
  out.entry = "main";
  return out;
}

Bindings bindings_from_trace(const MicroTrace &trace) {
  Bindings b;
  for (const auto &[id, sym] : trace.symbols)
    b[id] = trace.inputs.at(static_cast<std::size_t>(id)).str;
  return b;
}

// Evaluation ----------------------------------------------------------------

std::string EvalResult::outcome_name() const {
  return diverged ? "Diverged" : std::string(outcome_kind_name(outcome));
}

int EvalResult::first_failed() const {
  for (std::size_t i = 0; i < assertion_results.size(); ++i)
    if (!assertion_results[i])
      return static_cast<int>(i);
  return -1;
}

namespace {

class IrMemory {
public:
  explicit IrMemory(const std::vector<MemRegion> &image) : regions_(image) {
    std::sort(regions_.begin(), regions_.end(), [](const MemRegion &a, const MemRegion &b) { return a.base < b.base; });
  }

  uint8_t &at(int64_t addr) {
    auto it = std::upper_bound(regions_.begin(), regions_.end(), addr,
                               [](int64_t a, const MemRegion &r) { return a < r.base; });
    if (it == regions_.begin() || addr >= (it - 1)->end())
      throw EvalError("memory access at " + std::to_string(addr) + " outside every region");
    --it;
    return it->bytes[static_cast<std::size_t>(addr - it->base)];
  }

  std::string read(int64_t base, int64_t length) {
    if (length < 0)
      throw EvalError("negative string length");
    std::string s;
    for (int64_t i = 0; i < length; ++i)
      s.push_back(static_cast<char>(at(base + i)));
    return s;
  }

private:
  std::vector<MemRegion> regions_;
};

int64_t eval_binary(IrKind k, int64_t x, int64_t y) {
  auto ux = static_cast<uint64_t>(x), uy = static_cast<uint64_t>(y);
  switch (k) {
  case IrKind::Add: return static_cast<int64_t>(ux + uy);
  case IrKind::Sub: return static_cast<int64_t>(ux - uy);
  case IrKind::Mul: return static_cast<int64_t>(ux * uy);
  case IrKind::Div:
    if (y == 0) return 0;
    if (x == std::numeric_limits<int64_t>::min() && y == -1) return x;
    return x / y;
  case IrKind::Mod:
    if (y == 0 || y == -1) return 0;
    return x % y;
  case IrKind::CmpEq: return x == y;
  case IrKind::CmpLt: return x < y;
  case IrKind::CmpLe: return x <= y;
  default: throw EvalError("not a binary instruction");
  }
}

Value make_value(IrMemory &mem, Tag tag, int64_t a, int64_t b) {
  switch (tag) {
  case Tag::Int: return Value::integer(a);
  case Tag::Bool: return Value::boolean(a != 0);
  case Tag::Null: return Value::null();
  case Tag::Str: return Value::string(mem.read(a, b));
  }
  return Value::null();
}

}  // namespace

EvalResult eval_ir(const IrModule &module, const Bindings &bindings, IrObserver *observer) {
  if (module.entry.empty())
    throw EvalError("module has no entry block (build_entry not applied)");
  IrMemory mem(module.memory);
  std::vector<int64_t> vals(static_cast<std::size_t>(module.value_count), 0);
  std::vector<bool> defined(vals.size(), false);
  std::size_t total_assertions = module.assertions().size();

  auto val = [&](int id) -> int64_t {
    if (id < 0 || id >= module.value_count || !defined[static_cast<std::size_t>(id)])
      throw EvalError("use of undefined value %" + std::to_string(id));
    return vals[static_cast<std::size_t>(id)];
  };
  auto def = [&](int id, int64_t v) {
    if (id < 0 || id >= module.value_count)
      throw EvalError("result id out of range");
    vals[static_cast<std::size_t>(id)] = v;
    defined[static_cast<std::size_t>(id)] = true;
  };

  EvalResult r;
  const IrBlock *block = module.find_block(module.entry);
  std::size_t visits = 0;
  while (block) {
    if (++visits > module.blocks.size())
      throw EvalError("block chain does not terminate");
    for (const IrInstr &in : block->instrs) {
      switch (in.kind) {
      case IrKind::Const:
        def(in.result, in.imms.at(0));
        break;
      case IrKind::Not:
        def(in.result, val(in.args.at(0)) == 0);
        break;
      case IrKind::Select:
        def(in.result, val(in.args.at(0)) ? val(in.args.at(1)) : val(in.args.at(2)));
        break;
      case IrKind::ReadMem8:
        def(in.result, mem.at(val(in.args.at(0))));
        break;
      case IrKind::WriteMem8:
        mem.at(val(in.args.at(0))) = static_cast<uint8_t>(val(in.args.at(1)) & 0xff);
        break;
      case IrKind::MakeSymbolic: {
        int id = static_cast<int>(in.imms.at(0));
        auto it = bindings.find(id);
        if (it == bindings.end())
          throw EvalError("no binding for symbol " + std::to_string(id));
        int64_t base = in.imms.at(1), cap = in.imms.at(2);
        if (static_cast<int64_t>(it->second.size()) > cap)
          throw EvalError("binding for symbol " + std::to_string(id) + " longer than its capacity " +
                          std::to_string(cap));
        for (int64_t i = 0; i < cap; ++i)
          mem.at(base + i) = i < static_cast<int64_t>(it->second.size()) ? static_cast<uint8_t>(it->second[i]) : 0;
        def(in.result, static_cast<int64_t>(it->second.size()));
        break;
      }
      case IrKind::AssertPathTaken:
        r.assertion_results.push_back((val(in.args.at(0)) != 0) == (in.imms.at(0) != 0));
        break;
      case IrKind::LogError: {
        auto tag = static_cast<Tag>(in.imms.at(0));
        r.errors.push_back({tag, make_value(mem, tag, val(in.args.at(0)), val(in.args.at(1))), in.imms.at(1) != 0,
                            in.imms.at(2)});
        break;
      }
      default:
        def(in.result, eval_binary(in.kind, val(in.args.at(0)), val(in.args.at(1))));
        break;
      }
      if (observer)
        observer->after(in, vals);
      if (in.kind == IrKind::AssertPathTaken && !r.assertion_results.back()) {
        r.diverged = true;
        r.assertion_results.resize(total_assertions, false);
        return r;
      }
    }
    const IrTerminator &t = block->term;
    if (t.kind == IrTerminator::Kind::Halt) {
      r.outcome = t.outcome;
      r.value = make_value(mem, t.tag, val(t.a), val(t.b));
      return r;
    }
    block = module.find_block(t.target);
    if (!block)
      throw EvalError("GOTO to unknown block '" + t.target + "'");
  }
  throw EvalError("module has no entry block");
}

bool matches_outcome(const EvalResult &r, const ExecOutcome &o) {
  if (r.diverged || r.outcome != o.kind)
    return false;
  std::size_t handled = std::count_if(r.errors.begin(), r.errors.end(), [](const LoggedError &e) { return e.handled; });
  if (handled != o.handled.size())
    return false;
  for (std::size_t i = 0, h = 0; i < r.errors.size(); ++i)
    if (r.errors[i].handled && r.errors[i].value.to_display() != o.handled[h++].message)
      return false;
  if (o.kind == OutcomeKind::UnhandledException)
    return r.value.to_display() == o.message;
  return r.value == o.value;
}

// Text format ---------------------------------------------------------------

std::string dump_ir(const IrModule &m) {
  std::ostringstream os;
  os << "MODULE v1\n";
  os << "FUNC " << (m.function_name.empty() ? "-" : m.function_name) << "\n";
  os << "ENTRY " << (m.entry.empty() ? "-" : m.entry) << "\n";
  os << "VALUES " << m.value_count << "\n";
  for (const auto &[id, d] : m.symbols)
    os << "SYM " << id << " " << d.base << " " << d.capacity << " " << d.name << " %" << d.length_value << "\n";
  for (const MemRegion &r : m.memory)
    os << "MEM " << r.base << " " << hex_encode(r.bytes) << " "
       << (r.cls == RegionClass::StringData ? "StringData" : "Scratch") << "\n";
  for (const IrBlock &b : m.blocks) {
    os << "BLOCK " << b.label << "\n";
    for (const IrInstr &in : b.instrs) {
      os << "  ";
      if (in.result >= 0)
        os << "%" << in.result << " = ";
      os << ir_kind_name(in.kind);
      std::size_t ai = 0, ii = 0;
      for (char c : ir_shape(in.kind)) {
        if (c == 'v')
          os << " %" << in.args.at(ai++);
        else if (c == 't')
          os << " " << tag_name(static_cast<Tag>(in.imms.at(ii++)));
        else
          os << " " << in.imms.at(ii++);
      }
      os << "\n";
    }
    if (b.term.kind == IrTerminator::Kind::Goto)
      os << "  GOTO " << b.term.target << "\n";
    else
      os << "  HALT " << outcome_kind_name(b.term.outcome) << " " << tag_name(b.term.tag) << " %" << b.term.a << " %"
         << b.term.b << "\n";
  }
  return os.str();
}

namespace {

int64_t parse_i64(std::string_view s, int line) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw IrParseError(line, "expected integer, got '" + std::string(s) + "'");
  return v;
}

int parse_ref(std::string_view s, int line) {
  if (s.size() < 2 || s[0] != '%')
    throw IrParseError(line, "expected value reference, got '" + std::string(s) + "'");
  int64_t v = parse_i64(s.substr(1), line);
  if (v < 0 || v > std::numeric_limits<int>::max())
    throw IrParseError(line, "value id out of range");
  return static_cast<int>(v);
}

}  // namespace

IrModule load_ir(const std::string &text) {
  IrModule m;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  IrBlock *block = nullptr;
  bool terminated = true;
  while (std::getline(is, line)) {
    ++lineno;
    auto w = split_ws(line);
    if (w.empty())
      continue;
    try {
      if (!header) {
        if (w.size() != 2 || w[0] != "MODULE" || w[1] != "v1")
          throw IrParseError(lineno, "missing 'MODULE v1' header");
        header = true;
      } else if (w[0] == "FUNC" && w.size() == 2) {
        m.function_name = w[1] == "-" ? "" : w[1];
      } else if (w[0] == "ENTRY" && w.size() == 2) {
        m.entry = w[1] == "-" ? "" : w[1];
      } else if (w[0] == "VALUES" && w.size() == 2) {
        m.value_count = static_cast<int>(parse_i64(w[1], lineno));
      } else if (w[0] == "SYM" && w.size() == 6) {
        m.symbols[static_cast<int>(parse_i64(w[1], lineno))] = {w[4], parse_i64(w[2], lineno),
                                                                parse_i64(w[3], lineno), parse_ref(w[5], lineno)};
      } else if (w[0] == "MEM" && w.size() == 4) {
        MemRegion r;
        r.base = parse_i64(w[1], lineno);
        r.bytes = hex_decode(w[2]);
        if (w[3] == "StringData")
          r.cls = RegionClass::StringData;
        else if (w[3] == "Scratch")
          r.cls = RegionClass::Scratch;
        else
          throw IrParseError(lineno, "unknown region class '" + w[3] + "'");
        m.memory.push_back(std::move(r));
      } else if (w[0] == "BLOCK" && w.size() == 2) {
        if (!terminated)
          throw IrParseError(lineno, "block '" + block->label + "' has no terminator");
        if (m.find_block(w[1]))
          throw IrParseError(lineno, "duplicate block label '" + w[1] + "'");
        m.blocks.push_back({w[1], {}, {}});
        block = &m.blocks.back();
        terminated = false;
      } else if (!block || terminated) {
        throw IrParseError(lineno, "instruction outside a block");
      } else if (w[0] == "GOTO" && w.size() == 2) {
        block->term.kind = IrTerminator::Kind::Goto;
        block->term.target = w[1];
        terminated = true;
      } else if (w[0] == "HALT" && w.size() == 5) {
        block->term.kind = IrTerminator::Kind::Halt;
        block->term.outcome = outcome_kind_from_name(w[1]);
        block->term.tag = tag_from_name(w[2]);
        block->term.a = parse_ref(w[3], lineno);
        block->term.b = parse_ref(w[4], lineno);
        terminated = true;
      } else {
        IrInstr in;
        std::size_t k = 0;
        if (w[0][0] == '%') {
          if (w.size() < 3 || w[1] != "=")
            throw IrParseError(lineno, "malformed assignment");
          in.result = parse_ref(w[0], lineno);
          k = 2;
        }
        auto kind = ir_kind_from_name(w[k]);
        if (!kind)
          throw IrParseError(lineno, "unknown instruction '" + w[k] + "'");
        in.kind = *kind;
        if (ir_has_result(in.kind) != (in.result >= 0))
          throw IrParseError(lineno, "result mismatch for " + w[k]);
        std::string_view shape = ir_shape(in.kind);
        if (w.size() != k + 1 + shape.size())
          throw IrParseError(lineno, "wrong operand count for " + w[k]);
        for (std::size_t i = 0; i < shape.size(); ++i) {
          const std::string &tok = w[k + 1 + i];
          if (shape[i] == 'v')
            in.args.push_back(parse_ref(tok, lineno));
          else if (shape[i] == 't')
            in.imms.push_back(static_cast<int64_t>(tag_from_name(tok)));
          else
            in.imms.push_back(parse_i64(tok, lineno));
        }
        block->instrs.push_back(std::move(in));
      }
    } catch (IrParseError &) {
      throw;
    } catch (Error &e) {
      throw IrParseError(lineno, e.what());
    }
  }
  if (!header)
    throw IrParseError(lineno, "missing 'MODULE v1' header");
  if (!terminated)
    throw IrParseError(lineno, "block '" + block->label + "' has no terminator");
  return m;
}

}  // namespace sparktrace
