#include "sparktrace/tracer.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

namespace sparktrace {

namespace {

struct MicroInfo {
  MicroKind kind;
  std::string_view name;
  int arity;
};

constexpr MicroInfo kMicroTable[] = {
    {MicroKind::LoadReg, "LoadReg", 3},
    {MicroKind::StoreReg, "StoreReg", 3},
    {MicroKind::LoadConst, "LoadConst", 4},
    {MicroKind::LoadImm, "LoadImm", 2},
    {MicroKind::ArithAdd, "ArithAdd", 3},
    {MicroKind::ArithSub, "ArithSub", 3},
    {MicroKind::ArithMul, "ArithMul", 3},
    {MicroKind::ArithDiv, "ArithDiv", 3},
    {MicroKind::ArithMod, "ArithMod", 3},
    {MicroKind::CmpEq, "CmpEq", 3},
    {MicroKind::CmpLt, "CmpLt", 3},
    {MicroKind::CmpLe, "CmpLe", 3},
    {MicroKind::BranchTaken, "BranchTaken", 4},
    {MicroKind::BranchNotTaken, "BranchNotTaken", 4},
    {MicroKind::MemRead8, "MemRead8", 3},
    {MicroKind::MemWrite8, "MemWrite8", 3},
    {MicroKind::StrOpBegin, "StrOpBegin", 1},
    {MicroKind::StrOpEnd, "StrOpEnd", 1},
    {MicroKind::CallBegin, "CallBegin", 3},
    {MicroKind::CallEnd, "CallEnd", 1},
    {MicroKind::Ret, "Ret", 3},
    {MicroKind::ThrowOp, "ThrowOp", 5},
    {MicroKind::SymbolicPin, "SymbolicPin", 4},
    {MicroKind::VerifyFrameSize, "VerifyFrameSize", 1},
    {MicroKind::VerifyFeedbackVector, "VerifyFeedbackVector", 1},
};

}  // namespace

std::string_view micro_kind_name(MicroKind k) { return kMicroTable[static_cast<int>(k)].name; }

std::optional<MicroKind> micro_kind_from_name(std::string_view name) {
  for (const MicroInfo &info : kMicroTable)
    if (info.name == name)
      return info.kind;
  return std::nullopt;
}

int micro_arity(MicroKind k) { return kMicroTable[static_cast<int>(k)].arity; }

std::string_view micro_tag_name(MicroTag t) { return t == MicroTag::ControlFlow ? "ControlFlow" : "Verification"; }

// TraceMemory -----------------------------------------------------------

int64_t TraceMemory::allocate(std::size_t length, RegionClass cls, std::string_view init) {
  int64_t base = kBase + static_cast<int64_t>(live_.size());
  std::size_t reserved = std::max<std::size_t>(length, 1);
  reserved = (reserved + 15) & ~std::size_t{15};
  live_.resize(live_.size() + reserved, 0);
  initial_.resize(live_.size(), 0);
  for (std::size_t i = 0; i < init.size() && i < length; ++i) {
    live_[static_cast<std::size_t>(base - kBase) + i] = static_cast<uint8_t>(init[i]);
    initial_[static_cast<std::size_t>(base - kBase) + i] = static_cast<uint8_t>(init[i]);
  }
  regions_.push_back({base, static_cast<int64_t>(length), cls});
  return base;
}

std::size_t TraceMemory::index(int64_t addr) const {
  if (!contains(addr))
    throw Error("trace memory access outside any region at " + std::to_string(addr));
  return static_cast<std::size_t>(addr - kBase);
}

bool TraceMemory::contains(int64_t addr, int64_t length) const {
  auto it = std::upper_bound(regions_.begin(), regions_.end(), addr,
                             [](int64_t a, const Region &r) { return a < r.base; });
  if (it == regions_.begin())
    return false;
  --it;
  return addr >= it->base && addr + length <= it->base + it->length;
}

uint8_t TraceMemory::read8(int64_t addr) const { return live_[index(addr)]; }

void TraceMemory::write8(int64_t addr, uint8_t v) { live_[index(addr)] = v; }

int64_t TraceMemory::read64(int64_t addr) const {
  if (!contains(addr, 8))
    throw Error("trace memory word access outside any region at " + std::to_string(addr));
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i)
    v = (v << 8) | live_[static_cast<std::size_t>(addr - kBase + i)];
  return static_cast<int64_t>(v);
}

void TraceMemory::write64(int64_t addr, int64_t v) {
  if (!contains(addr, 8))
    throw Error("trace memory word access outside any region at " + std::to_string(addr));
  auto u = static_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    live_[static_cast<std::size_t>(addr - kBase + i)] = static_cast<uint8_t>(u >> (8 * i));
}

void TraceMemory::seed64(int64_t addr, int64_t v) {
  write64(addr, v);
  auto u = static_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    initial_[static_cast<std::size_t>(addr - kBase + i)] = static_cast<uint8_t>(u >> (8 * i));
}

std::string TraceMemory::read_string(int64_t base, int64_t length) const {
  if (length == 0)
    return {};
  if (!contains(base, length))
    throw Error("string outside memory regions");
  auto from = live_.begin() + (base - kBase);
  return std::string(from, from + length);
}

std::vector<MemRegion> TraceMemory::initial_image() const {
  std::vector<MemRegion> out;
  out.reserve(regions_.size());
  for (const Region &r : regions_) {
    MemRegion m;
    m.base = r.base;
    m.cls = r.cls;
    auto from = initial_.begin() + (r.base - kBase);
    m.bytes.assign(from, from + r.length);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<int64_t> MicroTrace::dispatch_pcs() const {
  std::vector<int64_t> pcs;
  for (const MicroOp &op : ops)
    if (op.kind == MicroKind::VerifyFrameSize)
      pcs.push_back(op.origin_pc);
  return pcs;
}

// Baseline tracer ---------------------------------------------------------

namespace {

// Machine register roles.
constexpr int kAccA = 0, kAccB = 1;  // accumulator
constexpr int kLhsA = 2, kLhsB = 3;  // register operand
constexpr int kAuxA = 4, kAuxB = 5;  // second register operand
constexpr int kCond = 6, kIdx = 7, kSrcAddr = 8, kByte = 9, kDstAddr = 10, kLen = 11, kLimit = 12,
              kDst = 13, kDst2 = 14, kInner = 15, kStart = 16, kEnd = 17, kOffset = 18, kCount = 19,
              kByteL = 20, kByteR = 21, kTruth = 22, kConvA = 23, kConvB = 24, kConvC = 25, kProbe = 26;
constexpr int kZero = 31;

struct TryRecord {
  int handler = 0;
  int catch_reg = 0;
  Span span;
};

struct TFrame {
  const BytecodeFunction *fn = nullptr;
  int64_t base = 0;
  int pc = 0;
  std::vector<Tag> param_tags;
  std::vector<Tag> reg_tags;
  std::vector<TryRecord> tries;

  int64_t param_slot(int p) const { return base + 16LL * p; }
  int64_t reg_slot(int r) const { return base + 16LL * (fn->param_count + r); }
};

struct TraceThrow {
  Tag tag;
  int reg_a;
  int reg_b;
};

struct TraceDone {};

int64_t wrap(uint64_t v) { return static_cast<int64_t>(v); }

class Tracer {
public:
  Tracer(const Program &program, const TraceOptions &options) : program_(program), options_(options) {}

  MicroTrace run(const BytecodeFunction &fn, std::span<const Value> args, const std::set<int> &symbolic) {
    if (static_cast<int>(args.size()) != fn.param_count)
      throw Error("function '" + fn.name + "' expects " + std::to_string(fn.param_count) + " arguments");
    symbolic_ = symbolic;
    trace_.function_name = fn.name;
    trace_.inputs.assign(args.begin(), args.end());

    TFrame top = make_frame(fn);
    for (int p = 0; p < fn.param_count; ++p) {
      const Value &v = args[p];
      auto [a, b] = materialize_input(v);
      memory_.seed64(top.param_slot(p), a);
      memory_.seed64(top.param_slot(p) + 8, b);
      top.param_tags[p] = v.tag;
    }
    frames_.push_back(std::move(top));

    try {
      for (;;) {
        TFrame &f = frames_.back();
        const Bytecode &bc = f.fn->code[f.pc];
        pc_ = f.fn->code_base + f.pc;
        trace_.outcome.dispatch_log.push_back({pc_, bc.op});
        if (options_.on_dispatch)
          report_frame();
        emit_tagged(MicroTag::Verification, MicroKind::VerifyFrameSize, {f.fn->frame_size});
        emit_tagged(MicroTag::Verification, MicroKind::VerifyFeedbackVector, {f.fn->index});
        try {
          handle(bc);
        } catch (TraceThrow &t) {
          unwind(t);
        }
      }
    } catch (TraceDone &) {
    }
    auto &o = trace_.outcome;
    if (o.kind != OutcomeKind::UnhandledException)
      o.kind = o.handled.empty() ? OutcomeKind::Returned : OutcomeKind::HandledException;
    trace_.memory = memory_.initial_image();
    return std::move(trace_);
  }

private:
  // Emission --------------------------------------------------------------

  void emit_tagged(MicroTag tag, MicroKind kind, std::initializer_list<int64_t> operands) {
    if (trace_.ops.size() >= options_.op_cap)
      throw TraceOverflow("trace exceeded " + std::to_string(options_.op_cap) + " micro-ops");
    MicroOp op;
    op.kind = kind;
    op.tag = tag;
    op.origin_pc = pc_;
    std::copy(operands.begin(), operands.end(), op.operands.begin());
    trace_.ops.push_back(op);
  }
  void emit(MicroKind kind, std::initializer_list<int64_t> operands) {
    emit_tagged(MicroTag::ControlFlow, kind, operands);
  }

  void load_imm(int dst, int64_t v) {
    m_[dst] = v;
    emit(MicroKind::LoadImm, {dst, v});
  }
  void load_const(int da, int db, int64_t a, int64_t b) {
    m_[da] = a;
    m_[db] = b;
    emit(MicroKind::LoadConst, {da, db, a, b});
  }
  void load_reg(int da, int db, int64_t slot) {
    m_[da] = memory_.read64(slot);
    m_[db] = memory_.read64(slot + 8);
    emit(MicroKind::LoadReg, {da, db, slot});
  }
  void store_reg(int64_t slot, int sa, int sb) {
    memory_.write64(slot, m_[sa]);
    memory_.write64(slot + 8, m_[sb]);
    emit(MicroKind::StoreReg, {slot, sa, sb});
  }
  void arith(MicroKind kind, int dst, int l, int r) {
    auto x = static_cast<uint64_t>(m_[l]), y = static_cast<uint64_t>(m_[r]);
    int64_t v = 0;
    switch (kind) {
    case MicroKind::ArithAdd: v = wrap(x + y); break;
    case MicroKind::ArithSub: v = wrap(x - y); break;
    case MicroKind::ArithMul: v = wrap(x * y); break;
    case MicroKind::ArithDiv:
      v = (m_[l] == std::numeric_limits<int64_t>::min() && m_[r] == -1) ? m_[l] : m_[l] / m_[r];
      break;
    case MicroKind::ArithMod: v = m_[r] == -1 ? 0 : m_[l] % m_[r]; break;
    default: throw Error("not an arithmetic micro-op");
    }
    m_[dst] = v;
    emit(kind, {dst, l, r});
  }
  void cmp(MicroKind kind, int dst, int l, int r) {
    bool v = kind == MicroKind::CmpEq ? m_[l] == m_[r] : kind == MicroKind::CmpLt ? m_[l] < m_[r] : m_[l] <= m_[r];
    m_[dst] = v ? 1 : 0;
    emit(kind, {dst, l, r});
  }
  void move(int dst, int src) {
    load_imm(kZero, 0);
    arith(MicroKind::ArithAdd, dst, src, kZero);
  }
  // Conditional jump; fires when (cond != 0) == sense. Returns whether it fired.
  bool branch(int cond, bool sense, int64_t target) {
    bool fired = (m_[cond] != 0) == sense;
    emit(fired ? MicroKind::BranchTaken : MicroKind::BranchNotTaken, {cond, sense ? 1 : 0, pc_, target});
    return fired;
  }
  // In-handler check that branches away when `cond` is zero. Returns whether it held.
  bool guard(int cond) { return !branch(cond, false, pc_); }

  void mem_read(int dst, int addr_reg) {
    int64_t addr = m_[addr_reg];
    m_[dst] = memory_.read8(addr);
    emit(MicroKind::MemRead8, {dst, addr_reg, addr});
  }
  void mem_write(int addr_reg, int src) {
    int64_t addr = m_[addr_reg];
    memory_.write8(addr, static_cast<uint8_t>(m_[src] & 0xff));
    emit(MicroKind::MemWrite8, {addr_reg, src, addr});
  }

  // Values ------------------------------------------------------------------

  std::pair<int64_t, int64_t> materialize_input(const Value &v) {
    switch (v.tag) {
    case Tag::Int:
    case Tag::Bool:
      return {v.num, 0};
    case Tag::Null:
      return {0, 0};
    case Tag::Str:
      if (v.str.size() > options_.max_string_len)
        throw Error("input string longer than the configured maximum");
      return {memory_.allocate(v.str.size(), RegionClass::StringData, v.str), static_cast<int64_t>(v.str.size())};
    }
    return {0, 0};
  }

  int64_t constant_string(const std::string &s) {
    auto it = const_strings_.find(s);
    if (it != const_strings_.end())
      return it->second;
    int64_t base = memory_.allocate(s.size(), RegionClass::StringData, s);
    const_strings_.emplace(s, base);
    return base;
  }

  Value to_value(Tag tag, int64_t a, int64_t b) const {
    switch (tag) {
    case Tag::Int:
      return Value::integer(a);
    case Tag::Bool:
      return Value::boolean(a != 0);
    case Tag::Null:
      return Value::null();
    case Tag::Str:
      return Value::string(memory_.read_string(a, b));
    }
    return Value::null();
  }

  Value slot_value(int64_t slot, Tag tag) const { return to_value(tag, memory_.read64(slot), memory_.read64(slot + 8)); }

  void report_frame() {
    const TFrame &f = frames_.back();
    std::vector<Value> regs;
    regs.reserve(f.reg_tags.size());
    for (int r = 0; r < static_cast<int>(f.reg_tags.size()); ++r)
      regs.push_back(slot_value(f.reg_slot(r), f.reg_tags[r]));
    Value acc = to_value(acc_tag_, m_[kAccA], m_[kAccB]);
    FrameView view{static_cast<int>(frames_.size()) - 1, f.fn->index, pc_, regs, &acc};
    options_.on_dispatch(view);
  }

  TFrame make_frame(const BytecodeFunction &fn) {
    TFrame f;
    f.fn = &fn;
    f.base = memory_.allocate(16 * static_cast<std::size_t>(fn.param_count + fn.frame_size), RegionClass::Scratch);
    f.param_tags.assign(static_cast<std::size_t>(fn.param_count), Tag::Null);
    f.reg_tags.assign(static_cast<std::size_t>(fn.frame_size), Tag::Null);
    return f;
  }

  Span current_span() const {
    const TFrame &f = frames_.back();
    return static_cast<std::size_t>(f.pc) < f.fn->statement_map.size() ? f.fn->statement_map[f.pc] : Span{};
  }

  // Exceptions --------------------------------------------------------------

  [[noreturn]] void raise_message(const std::string &message) {
    int64_t base = constant_string(message);
    load_const(kAccA, kAccB, base, static_cast<int64_t>(message.size()));
    throw TraceThrow{Tag::Str, kAccA, kAccB};
  }

  void unwind(const TraceThrow &t) {
    Span throw_span = current_span();
    Value thrown = to_value(t.tag, m_[t.reg_a], m_[t.reg_b]);
    std::size_t k = frames_.size();
    while (k > 0 && frames_[k - 1].tries.empty())
      --k;
    if (k == 0) {
      emit(MicroKind::ThrowOp, {static_cast<int64_t>(t.tag), t.reg_a, t.reg_b, 0, -1});
      auto &o = trace_.outcome;
      o.kind = OutcomeKind::UnhandledException;
      o.message = thrown.to_display();
      o.span = throw_span;
      throw TraceDone{};
    }
    TFrame &target = frames_[k - 1];
    TryRecord rec = target.tries.back();
    emit(MicroKind::ThrowOp, {static_cast<int64_t>(t.tag), t.reg_a, t.reg_b, 1, target.fn->code_base + rec.handler});
    while (frames_.size() > k) {
      emit(MicroKind::CallEnd, {frames_.back().fn->index});
      frames_.pop_back();
    }
    TFrame &f = frames_.back();
    f.tries.pop_back();
    store_reg(f.reg_slot(rec.catch_reg), t.reg_a, t.reg_b);
    f.reg_tags[rec.catch_reg] = t.tag;
    f.pc = rec.handler;
    trace_.outcome.handled.push_back({thrown.to_display(), throw_span, rec.span});
  }

  // String helpers ------------------------------------------------------------

  // Converts the value in (a, b) with `tag` into a string held in (a, b).
  // Data-dependent scalars are pinned to their traced value by a guard.
  void to_string_value(Tag tag, int a, int b) {
    if (tag == Tag::Str)
      return;
    std::string text = to_value(tag, m_[a], m_[b]).to_display();
    if (tag == Tag::Int || tag == Tag::Bool) {
      load_imm(kConvA, m_[a]);
      cmp(MicroKind::CmpEq, kConvC, a, kConvA);
      guard(kConvC);
    }
    load_const(a, b, constant_string(text), static_cast<int64_t>(text.size()));
  }

  // Copies `count_reg` bytes from (src_reg) to (dst_reg), one guarded iteration per byte.
  void copy_bytes(int src_reg, int count_reg, int dst_reg) {
    for (int64_t i = 0;; ++i) {
      load_imm(kIdx, i);
      cmp(MicroKind::CmpLt, kCond, kIdx, count_reg);
      if (!guard(kCond))
        return;
      arith(MicroKind::ArithAdd, kSrcAddr, src_reg, kIdx);
      mem_read(kByte, kSrcAddr);
      arith(MicroKind::ArithAdd, kDstAddr, dst_reg, kIdx);
      mem_write(kDstAddr, kByte);
    }
  }

  // acc = (la, lb) ++ (ra, rb)
  void concat(Op op, int la, int lb, int ra, int rb) {
    emit(MicroKind::StrOpBegin, {static_cast<int64_t>(op)});
    arith(MicroKind::ArithAdd, kLen, lb, rb);
    load_imm(kLimit, static_cast<int64_t>(options_.max_string_len));
    cmp(MicroKind::CmpLe, kCond, kLen, kLimit);
    if (!guard(kCond)) {
      emit(MicroKind::StrOpEnd, {static_cast<int64_t>(op)});
      raise_message(messages::kStringLength);
    }
    load_imm(kDst, memory_.allocate(static_cast<std::size_t>(m_[kLen]), RegionClass::StringData));
    copy_bytes(la, lb, kDst);
    arith(MicroKind::ArithAdd, kDst2, kDst, lb);
    copy_bytes(ra, rb, kDst2);
    move(kAccA, kDst);
    move(kAccB, kLen);
    acc_tag_ = Tag::Str;
    emit(MicroKind::StrOpEnd, {static_cast<int64_t>(op)});
  }

  // Writes 1 into `out` when (a, b) with `tag` is truthy.
  void truthiness(Tag tag, int a, int b, int out) {
    switch (tag) {
    case Tag::Bool:
      move(out, a);
      return;
    case Tag::Null:
      load_imm(out, 0);
      return;
    case Tag::Int:
    case Tag::Str:
      load_imm(kZero, 0);
      cmp(MicroKind::CmpEq, kProbe, tag == Tag::Int ? a : b, kZero);
      cmp(MicroKind::CmpEq, out, kProbe, kZero);
      return;
    }
  }

  void set_bool_acc(bool v) {
    load_imm(kAccA, v ? 1 : 0);
    load_imm(kAccB, 0);
    acc_tag_ = Tag::Bool;
  }

  void require_receiver(Tag tag, std::string_view member) {
    if (tag != Tag::Str)
      raise_message(messages::member_receiver(member, tag));
  }
  void require_arg(Tag tag, Tag want, std::string_view member) {
    if (tag != want)
      raise_message(messages::member_argument(member, want, tag));
  }

  // Handlers ------------------------------------------------------------------

  void handle(const Bytecode &bc) {
    TFrame &f = frames_.back();
    const int a = bc.operands[0];
    const int b = bc.operands[1];
    switch (bc.op) {
    case Op::LdaConst: {
      const Value &v = f.fn->constants[a];
      if (v.tag == Tag::Str)
        load_const(kAccA, kAccB, constant_string(v.str), static_cast<int64_t>(v.str.size()));
      else
        load_const(kAccA, kAccB, v.tag == Tag::Null ? 0 : v.num, 0);
      acc_tag_ = v.tag;
      break;
    }
    case Op::LdaParam:
      load_reg(kAccA, kAccB, f.param_slot(a));
      acc_tag_ = f.param_tags[a];
      break;
    case Op::Ldar:
      load_reg(kAccA, kAccB, f.reg_slot(a));
      acc_tag_ = f.reg_tags[a];
      break;
    case Op::Star:
      store_reg(f.reg_slot(a), kAccA, kAccB);
      f.reg_tags[a] = acc_tag_;
      break;
    case Op::Add: {
      load_reg(kLhsA, kLhsB, f.reg_slot(a));
      Tag lt = f.reg_tags[a];
      if (lt == Tag::Int && acc_tag_ == Tag::Int) {
        arith(MicroKind::ArithAdd, kAccA, kLhsA, kAccA);
      } else if (lt == Tag::Str || acc_tag_ == Tag::Str) {
        to_string_value(lt, kLhsA, kLhsB);
        to_string_value(acc_tag_, kAccA, kAccB);
        concat(bc.op, kLhsA, kLhsB, kAccA, kAccB);
      } else {
        raise_message(messages::operands("+", lt, acc_tag_));
      }
      break;
    }
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Mod: {
      static constexpr std::string_view kNames[] = {"-", "*", "/", "%"};
      std::string_view name = kNames[static_cast<int>(bc.op) - static_cast<int>(Op::Sub)];
      load_reg(kLhsA, kLhsB, f.reg_slot(a));
      Tag lt = f.reg_tags[a];
      if (lt != Tag::Int || acc_tag_ != Tag::Int)
        raise_message(messages::operands(name, lt, acc_tag_));
      if (bc.op == Op::Div || bc.op == Op::Mod) {
        load_imm(kZero, 0);
        cmp(MicroKind::CmpEq, kCond, kAccA, kZero);
        if (branch(kCond, true, pc_))
          raise_message(messages::kDivisionByZero);
      }
      MicroKind k = bc.op == Op::Sub   ? MicroKind::ArithSub
                    : bc.op == Op::Mul ? MicroKind::ArithMul
                    : bc.op == Op::Div ? MicroKind::ArithDiv
                                       : MicroKind::ArithMod;
      arith(k, kAccA, kLhsA, kAccA);
      break;
    }
    case Op::Neg:
      if (acc_tag_ != Tag::Int)
        raise_message(messages::operand("-", acc_tag_));
      load_imm(kLhsA, 0);
      arith(MicroKind::ArithSub, kAccA, kLhsA, kAccA);
      break;
    case Op::Not:
      truthiness(acc_tag_, kAccA, kAccB, kTruth);
      load_imm(kZero, 0);
      cmp(MicroKind::CmpEq, kAccA, kTruth, kZero);
      load_imm(kAccB, 0);
      acc_tag_ = Tag::Bool;
      break;
    case Op::TestEqual:
      test_equal(f, a);
      break;
    case Op::TestLess:
    case Op::TestLessEq:
      test_order(f, a, bc.op == Op::TestLess);
      break;
    case Op::Jump:
      f.pc = a;
      return;
    case Op::JumpIfFalse:
    case Op::JumpIfTrue: {
      truthiness(acc_tag_, kAccA, kAccB, kTruth);
      if (branch(kTruth, bc.op == Op::JumpIfTrue, f.fn->code_base + a)) {
        f.pc = a;
        return;
      }
      break;
    }
    case Op::StrLen:
      require_receiver(acc_tag_, "length");
      move(kAccA, kAccB);
      load_imm(kAccB, 0);
      acc_tag_ = Tag::Int;
      break;
    case Op::StrCharAt:
    case Op::StrCharCode:
      char_access(f, bc.op, a);
      break;
    case Op::StrIndexOf:
      index_of(f, a);
      break;
    case Op::StrSubstring:
      substring(f, a, b);
      break;
    case Op::StrConcat: {
      load_reg(kLhsA, kLhsB, f.reg_slot(a));
      require_receiver(f.reg_tags[a], "concat");
      to_string_value(acc_tag_, kAccA, kAccB);
      concat(bc.op, kLhsA, kLhsB, kAccA, kAccB);
      break;
    }
    case Op::CallFunc: {
      const BytecodeFunction &callee = program_.functions[a];
      if (static_cast<int>(frames_.size()) >= kMaxCallDepth)
        raise_message(messages::kStackOverflow);
      TFrame nf = make_frame(callee);
      int argc = bc.operands[2];
      emit(MicroKind::CallBegin, {a, nf.base, argc});
      for (int i = 0; i < argc; ++i) {
        load_reg(kLhsA, kLhsB, f.reg_slot(b + i));
        store_reg(nf.param_slot(i), kLhsA, kLhsB);
        nf.param_tags[i] = f.reg_tags[b + i];
      }
      frames_.push_back(std::move(nf));
      return;
    }
    case Op::Return: {
      emit(MicroKind::Ret, {static_cast<int64_t>(acc_tag_), kAccA, kAccB});
      if (frames_.size() == 1) {
        trace_.outcome.value = to_value(acc_tag_, m_[kAccA], m_[kAccB]);
        throw TraceDone{};
      }
      emit(MicroKind::CallEnd, {f.fn->index});
      frames_.pop_back();
      frames_.back().pc++;
      return;
    }
    case Op::Throw:
      throw TraceThrow{acc_tag_, kAccA, kAccB};
    case Op::EnterTry:
      f.tries.push_back({a, b, current_span()});
      break;
    case Op::LeaveTry:
      if (!f.tries.empty())
        f.tries.pop_back();
      break;
    case Op::PinSymbolic:
      if (frames_.size() == 1 && symbolic_.count(b) && f.reg_tags[a] == Tag::Str) {
        int64_t slot = f.reg_slot(a);
        int64_t base = memory_.read64(slot), len = memory_.read64(slot + 8);
        emit(MicroKind::SymbolicPin, {b, base, len, slot});
        trace_.symbols[b] = {f.fn->param_names.at(static_cast<std::size_t>(b)), base, len};
      }
      break;
    }
    f.pc++;
  }

  void test_equal(TFrame &f, int reg) {
    load_reg(kLhsA, kLhsB, f.reg_slot(reg));
    Tag lt = f.reg_tags[reg];
    if (lt != acc_tag_) {
      set_bool_acc(false);
      return;
    }
    switch (lt) {
    case Tag::Null:
      set_bool_acc(true);
      return;
    case Tag::Int:
    case Tag::Bool:
      cmp(MicroKind::CmpEq, kAccA, kLhsA, kAccA);
      load_imm(kAccB, 0);
      acc_tag_ = Tag::Bool;
      return;
    case Tag::Str:
      break;
    }
    emit(MicroKind::StrOpBegin, {static_cast<int64_t>(Op::TestEqual)});
    bool equal = true;
    cmp(MicroKind::CmpEq, kCond, kLhsB, kAccB);
    if (!guard(kCond)) {
      equal = false;
    } else {
      for (int64_t i = 0;; ++i) {
        load_imm(kIdx, i);
        cmp(MicroKind::CmpLt, kCond, kIdx, kLhsB);
        if (!guard(kCond))
          break;
        arith(MicroKind::ArithAdd, kSrcAddr, kLhsA, kIdx);
        mem_read(kByteL, kSrcAddr);
        arith(MicroKind::ArithAdd, kDstAddr, kAccA, kIdx);
        mem_read(kByteR, kDstAddr);
        cmp(MicroKind::CmpEq, kCond, kByteL, kByteR);
        if (!guard(kCond)) {
          equal = false;
          break;
        }
      }
    }
    set_bool_acc(equal);
    emit(MicroKind::StrOpEnd, {static_cast<int64_t>(Op::TestEqual)});
  }

  void test_order(TFrame &f, int reg, bool strict) {
    load_reg(kLhsA, kLhsB, f.reg_slot(reg));
    Tag lt = f.reg_tags[reg];
    MicroKind k = strict ? MicroKind::CmpLt : MicroKind::CmpLe;
    if (lt == Tag::Int && acc_tag_ == Tag::Int) {
      cmp(k, kAccA, kLhsA, kAccA);
      load_imm(kAccB, 0);
      acc_tag_ = Tag::Bool;
      return;
    }
    if (lt != Tag::Str || acc_tag_ != Tag::Str) {
      set_bool_acc(false);
      return;
    }
    Op op = strict ? Op::TestLess : Op::TestLessEq;
    emit(MicroKind::StrOpBegin, {static_cast<int64_t>(op)});
    for (int64_t i = 0;; ++i) {
      load_imm(kIdx, i);
      cmp(MicroKind::CmpLt, kCond, kIdx, kLhsB);
      bool left_more = guard(kCond);
      bool right_more = false;
      if (left_more) {
        cmp(MicroKind::CmpLt, kCond, kIdx, kAccB);
        right_more = guard(kCond);
      }
      if (!left_more || !right_more) {
        // One side exhausted: order by length.
        cmp(k, kAccA, kLhsB, kAccB);
        break;
      }
      arith(MicroKind::ArithAdd, kSrcAddr, kLhsA, kIdx);
      mem_read(kByteL, kSrcAddr);
      arith(MicroKind::ArithAdd, kDstAddr, kAccA, kIdx);
      mem_read(kByteR, kDstAddr);
      cmp(MicroKind::CmpEq, kCond, kByteL, kByteR);
      if (!guard(kCond)) {
        cmp(MicroKind::CmpLt, kAccA, kByteL, kByteR);
        break;
      }
    }
    load_imm(kAccB, 0);
    acc_tag_ = Tag::Bool;
    emit(MicroKind::StrOpEnd, {static_cast<int64_t>(op)});
  }

  void char_access(TFrame &f, Op op, int reg) {
    bool code = op == Op::StrCharCode;
    const char *member = code ? "charCodeAt" : "charAt";
    load_reg(kLhsA, kLhsB, f.reg_slot(reg));
    require_receiver(f.reg_tags[reg], member);
    require_arg(acc_tag_, Tag::Int, member);
    emit(MicroKind::StrOpBegin, {static_cast<int64_t>(op)});
    load_imm(kZero, 0);
    cmp(MicroKind::CmpLe, kCond, kZero, kAccA);
    bool in_range = guard(kCond);
    if (in_range) {
      cmp(MicroKind::CmpLt, kCond, kAccA, kLhsB);
      in_range = guard(kCond);
    }
    if (in_range) {
      arith(MicroKind::ArithAdd, kSrcAddr, kLhsA, kAccA);
      if (code) {
        mem_read(kAccA, kSrcAddr);
        load_imm(kAccB, 0);
        acc_tag_ = Tag::Int;
      } else {
        mem_read(kByte, kSrcAddr);
        load_imm(kDst, memory_.allocate(1, RegionClass::StringData));
        mem_write(kDst, kByte);
        move(kAccA, kDst);
        load_imm(kAccB, 1);
        acc_tag_ = Tag::Str;
      }
    } else if (code) {
      load_imm(kAccA, -1);
      load_imm(kAccB, 0);
      acc_tag_ = Tag::Int;
    } else {
      load_const(kAccA, kAccB, constant_string(""), 0);
      acc_tag_ = Tag::Str;
    }
    emit(MicroKind::StrOpEnd, {static_cast<int64_t>(op)});
  }

  void index_of(TFrame &f, int reg) {
    load_reg(kLhsA, kLhsB, f.reg_slot(reg));
    require_receiver(f.reg_tags[reg], "indexOf");
    require_arg(acc_tag_, Tag::Str, "indexOf");
    emit(MicroKind::StrOpBegin, {static_cast<int64_t>(Op::StrIndexOf)});
    int64_t found = -1;
    for (int64_t k = 0; found < 0; ++k) {
      load_imm(kStart, k);
      arith(MicroKind::ArithAdd, kEnd, kStart, kAccB);
      cmp(MicroKind::CmpLe, kCond, kEnd, kLhsB);
      if (!guard(kCond))
        break;
      bool match = true;
      for (int64_t j = 0;; ++j) {
        load_imm(kInner, j);
        cmp(MicroKind::CmpLt, kCond, kInner, kAccB);
        if (!guard(kCond))
          break;
        arith(MicroKind::ArithAdd, kOffset, kStart, kInner);
        arith(MicroKind::ArithAdd, kSrcAddr, kLhsA, kOffset);
        mem_read(kByteL, kSrcAddr);
        arith(MicroKind::ArithAdd, kDstAddr, kAccA, kInner);
        mem_read(kByteR, kDstAddr);
        cmp(MicroKind::CmpEq, kCond, kByteL, kByteR);
        if (!guard(kCond)) {
          match = false;
          break;
        }
      }
      if (match)
        found = k;
    }
    load_imm(kAccA, found);
    load_imm(kAccB, 0);
    acc_tag_ = Tag::Int;
    emit(MicroKind::StrOpEnd, {static_cast<int64_t>(Op::StrIndexOf)});
  }

  // Clamps the Int in `src` to [0, len] into `dst`.
  void clamp_index(int src, int dst) {
    load_imm(kZero, 0);
    cmp(MicroKind::CmpLt, kCond, src, kZero);
    if (branch(kCond, true, pc_)) {
      load_imm(dst, 0);
      return;
    }
    cmp(MicroKind::CmpLt, kCond, kLhsB, src);
    if (branch(kCond, true, pc_)) {
      move(dst, kLhsB);
      return;
    }
    move(dst, src);
  }

  void substring(TFrame &f, int reg, int start_reg) {
    load_reg(kLhsA, kLhsB, f.reg_slot(reg));
    require_receiver(f.reg_tags[reg], "substring");
    load_reg(kAuxA, kAuxB, f.reg_slot(start_reg));
    require_arg(f.reg_tags[start_reg], Tag::Int, "substring");
    require_arg(acc_tag_, Tag::Int, "substring");
    emit(MicroKind::StrOpBegin, {static_cast<int64_t>(Op::StrSubstring)});
    clamp_index(kAuxA, kStart);
    clamp_index(kAccA, kEnd);
    int lo = kStart, hi = kEnd;
    cmp(MicroKind::CmpLt, kCond, kEnd, kStart);
    if (branch(kCond, true, pc_))
      std::swap(lo, hi);
    arith(MicroKind::ArithSub, kCount, hi, lo);
    load_imm(kDst, memory_.allocate(static_cast<std::size_t>(m_[kCount]), RegionClass::StringData));
    arith(MicroKind::ArithAdd, kConvB, kLhsA, lo);
    copy_bytes(kConvB, kCount, kDst);
    move(kAccA, kDst);
    move(kAccB, kCount);
    acc_tag_ = Tag::Str;
    emit(MicroKind::StrOpEnd, {static_cast<int64_t>(Op::StrSubstring)});
  }

  const Program &program_;
  const TraceOptions &options_;
  std::set<int> symbolic_;
  MicroTrace trace_;
  TraceMemory memory_;
  std::vector<TFrame> frames_;
  std::map<std::string, int64_t> const_strings_;
  std::array<int64_t, kMachineRegs> m_{};
  Tag acc_tag_ = Tag::Null;
  int64_t pc_ = 0;
};

}  // namespace

MicroTrace baseline_trace(const Program &program, const BytecodeFunction &fn, std::span<const Value> args,
                          const std::set<int> &symbolic_params, const TraceOptions &options) {
  return Tracer(program, options).run(fn, args, symbolic_params);
}

MicroTrace extract_function_instr(const MicroTrace &trace) {
  MicroTrace out;
  out.function_name = trace.function_name;
  out.inputs = trace.inputs;
  out.symbols = trace.symbols;
  out.memory = trace.memory;
  out.outcome = trace.outcome;
  out.ops.reserve(trace.ops.size());
  std::copy_if(trace.ops.begin(), trace.ops.end(), std::back_inserter(out.ops),
               [](const MicroOp &op) { return op.tag == MicroTag::ControlFlow; });
  return out;
}

// Text format ---------------------------------------------------------------

std::string hex_encode(const std::vector<uint8_t> &bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  if (bytes.empty())
    return "-";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 15]);
  }
  return s;
}

std::vector<uint8_t> hex_decode(std::string_view text) {
  if (text == "-")
    return {};
  if (text.size() % 2)
    throw Error("odd-length hex string");
  auto digit = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(std::string("bad hex digit '") + c + "'");
  };
  std::vector<uint8_t> out(text.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<uint8_t>(digit(text[2 * i]) * 16 + digit(text[2 * i + 1]));
  return out;
}

namespace {

std::string_view region_class_name(RegionClass c) { return c == RegionClass::StringData ? "StringData" : "Scratch"; }

int64_t parse_int(const std::string &s, int line) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw TraceParseError(line, "expected integer, got '" + s + "'");
  return v;
}

}  // namespace

std::string dump_trace(const MicroTrace &trace) {
  std::ostringstream os;
  os << "TRACE v1\n";
  os << "func " << trace.function_name << "\n";
  for (std::size_t i = 0; i < trace.inputs.size(); ++i)
    os << "arg " << i << " " << trace.inputs[i].encode() << "\n";
  for (const auto &[id, sym] : trace.symbols)
    os << "sym " << id << " " << sym.base << " " << sym.length << " " << sym.name << "\n";
  for (const MemRegion &r : trace.memory)
    os << "mem " << r.base << " " << region_class_name(r.cls) << " " << hex_encode(r.bytes) << "\n";
  const ExecOutcome &o = trace.outcome;
  os << "outcome " << outcome_kind_name(o.kind) << " ";
  if (o.kind == OutcomeKind::UnhandledException)
    os << quote_bytes(o.message) << " " << o.span.str() << "\n";
  else
    os << o.value.encode() << "\n";
  for (const HandledEvent &h : o.handled)
    os << "handled " << quote_bytes(h.message) << " " << h.throw_span.str() << " " << h.catch_span.str() << "\n";
  for (std::size_t i = 0; i < trace.ops.size(); ++i) {
    const MicroOp &op = trace.ops[i];
    os << i << " " << micro_tag_name(op.tag) << " " << op.origin_pc << " " << micro_kind_name(op.kind);
    for (int k = 0; k < micro_arity(op.kind); ++k)
      os << " " << op.operands[k];
    os << "\n";
  }
  return os.str();
}

MicroTrace load_trace(const std::string &text) {
  MicroTrace t;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    auto w = split_ws(line);
    if (w.empty())
      continue;
    try {
      if (!header) {
        if (w.size() != 2 || w[0] != "TRACE" || w[1] != "v1")
          throw TraceParseError(lineno, "missing 'TRACE v1' header");
        header = true;
      } else if (w[0] == "func" && w.size() == 2) {
        t.function_name = w[1];
      } else if (w[0] == "arg" && w.size() == 4) {
        if (parse_int(w[1], lineno) != static_cast<int64_t>(t.inputs.size()))
          throw TraceParseError(lineno, "arguments out of order");
        t.inputs.push_back(Value::decode(w[2], w[3]));
      } else if (w[0] == "sym" && w.size() == 5) {
        t.symbols[static_cast<int>(parse_int(w[1], lineno))] = {w[4], parse_int(w[2], lineno),
                                                                parse_int(w[3], lineno)};
      } else if (w[0] == "mem" && w.size() == 4) {
        MemRegion r;
        r.base = parse_int(w[1], lineno);
        if (w[2] == "StringData")
          r.cls = RegionClass::StringData;
        else if (w[2] == "Scratch")
          r.cls = RegionClass::Scratch;
        else
          throw TraceParseError(lineno, "unknown region class '" + w[2] + "'");
        r.bytes = hex_decode(w[3]);
        t.memory.push_back(std::move(r));
      } else if (w[0] == "outcome" && w.size() == 4) {
        t.outcome.kind = outcome_kind_from_name(w[1]);
        if (t.outcome.kind == OutcomeKind::UnhandledException) {
          t.outcome.message = unquote_bytes(w[2]);
          t.outcome.span = Span::parse(w[3]);
        } else {
          t.outcome.value = Value::decode(w[2], w[3]);
        }
      } else if (w[0] == "handled" && w.size() == 4) {
        t.outcome.handled.push_back({unquote_bytes(w[1]), Span::parse(w[2]), Span::parse(w[3])});
      } else if (w.size() >= 4 && std::isdigit(static_cast<unsigned char>(w[0][0]))) {
        if (parse_int(w[0], lineno) != static_cast<int64_t>(t.ops.size()))
          throw TraceParseError(lineno, "op sequence numbers out of order");
        MicroOp op;
        if (w[1] == "ControlFlow")
          op.tag = MicroTag::ControlFlow;
        else if (w[1] == "Verification")
          op.tag = MicroTag::Verification;
        else
          throw TraceParseError(lineno, "unknown op tag '" + w[1] + "'");
        op.origin_pc = parse_int(w[2], lineno);
        auto kind = micro_kind_from_name(w[3]);
        if (!kind)
          throw TraceParseError(lineno, "unknown micro-op '" + w[3] + "'");
        op.kind = *kind;
        if (static_cast<int>(w.size()) != 4 + micro_arity(op.kind))
          throw TraceParseError(lineno, "wrong operand count for " + w[3]);
        for (int k = 0; k < micro_arity(op.kind); ++k)
          op.operands[k] = parse_int(w[4 + k], lineno);
        t.ops.push_back(op);
      } else {
        throw TraceParseError(lineno, "unrecognized line");
      }
    } catch (TraceParseError &) {
      throw;
    } catch (Error &e) {
      throw TraceParseError(lineno, e.what());
    }
  }
  if (!header)
    throw TraceParseError(lineno, "missing 'TRACE v1' header");
  return t;
}

}  // namespace sparktrace
