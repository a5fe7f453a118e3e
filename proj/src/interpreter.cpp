#include "sparktrace/interpreter.hpp"

#include <algorithm>
#include <limits>

namespace sparktrace {

std::string_view outcome_kind_name(OutcomeKind k) {
  switch (k) {
  case OutcomeKind::Returned:
    return "Returned";
  case OutcomeKind::HandledException:
    return "HandledException";
  case OutcomeKind::UnhandledException:
    return "UnhandledException";
  }
  return "?";
}

OutcomeKind outcome_kind_from_name(std::string_view name) {
  if (name == "Returned")
    return OutcomeKind::Returned;
  if (name == "HandledException")
    return OutcomeKind::HandledException;
  if (name == "UnhandledException")
    return OutcomeKind::UnhandledException;
  throw Error("unknown outcome kind '" + std::string(name) + "'");
}

std::string ExecOutcome::summary() const {
  std::string s(outcome_kind_name(kind));
  if (kind == OutcomeKind::UnhandledException)
    return s + " " + quote_bytes(message) + " at " + span.str();
  s += " " + value.debug();
  for (const HandledEvent &h : handled)
    s += " [caught " + quote_bytes(h.message) + " at " + h.throw_span.str() + "]";
  return s;
}

namespace messages {

std::string member_receiver(std::string_view member, Tag receiver) {
  if (receiver == Tag::Null)
    return "TypeError: Cannot read properties of null (reading '" + std::string(member) + "')";
  return "TypeError: '" + std::string(member) + "' requires a string receiver, got " +
         std::string(tag_name(receiver));
}

std::string member_argument(std::string_view member, Tag expected, Tag got) {
  return "TypeError: '" + std::string(member) + "' expects " + std::string(tag_name(expected)) +
         " argument, got " + std::string(tag_name(got));
}

std::string operands(std::string_view op, Tag lhs, Tag rhs) {
  return "TypeError: invalid operands to '" + std::string(op) + "' (" + std::string(tag_name(lhs)) + ", " +
         std::string(tag_name(rhs)) + ")";
}

std::string operand(std::string_view op, Tag t) {
  return "TypeError: invalid operand to unary '" + std::string(op) + "' (" + std::string(tag_name(t)) + ")";
}

}  // namespace messages

namespace {

int64_t wrap_add(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) + static_cast<uint64_t>(b));
}
int64_t wrap_sub(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) - static_cast<uint64_t>(b));
}
int64_t wrap_mul(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) * static_cast<uint64_t>(b));
}
int64_t safe_div(int64_t a, int64_t b) {
  if (a == std::numeric_limits<int64_t>::min() && b == -1)
    return a;
  return a / b;
}
int64_t safe_mod(int64_t a, int64_t b) {
  if (b == -1)
    return 0;
  return a % b;
}

int compare_bytes(const std::string &a, const std::string &b) {
  std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto x = static_cast<unsigned char>(a[i]);
    auto y = static_cast<unsigned char>(b[i]);
    if (x != y)
      return x < y ? -1 : 1;
  }
  if (a.size() == b.size())
    return 0;
  return a.size() < b.size() ? -1 : 1;
}

struct TryRecord {
  int handler = 0;
  int catch_reg = 0;
  Span span;
};

struct Frame {
  const BytecodeFunction *fn = nullptr;
  std::vector<Value> registers;
  std::vector<Value> args;
  Value acc;
  int pc = 0;
  std::vector<TryRecord> tries;
};

// Thrown inside a handler; unwound by the dispatch loop.
struct ScriptThrow {
  Value value;
};

class Interpreter {
public:
  Interpreter(const Program &program, const RunOptions &options) : program_(program), options_(options) {}

  ExecOutcome run(const BytecodeFunction &fn, std::span<const Value> args) {
    if (static_cast<int>(args.size()) != fn.param_count)
      throw Error("function '" + fn.name + "' expects " + std::to_string(fn.param_count) + " arguments, got " +
                  std::to_string(args.size()));
    push_frame(fn, std::vector<Value>(args.begin(), args.end()));
    int64_t steps = 0;
    for (;;) {
      Frame &f = frames_.back();
      const Bytecode &bc = f.fn->code[f.pc];
      out_.dispatch_log.push_back({f.fn->code_base + f.pc, bc.op});
      if (options_.on_dispatch) {
        FrameView view{static_cast<int>(frames_.size()) - 1, f.fn->index, f.fn->code_base + f.pc, f.registers,
                       &f.acc};
        options_.on_dispatch(view);
      }
      if (++steps > options_.max_steps)
        throw ExecutionLimit("dispatch budget of " + std::to_string(options_.max_steps) + " exceeded");
      try {
        if (step(bc))
          break;
      } catch (ScriptThrow &t) {
        if (unwind(std::move(t.value)))
          break;
      }
    }
    out_.kind = out_.kind == OutcomeKind::UnhandledException
                    ? OutcomeKind::UnhandledException
                    : (out_.handled.empty() ? OutcomeKind::Returned : OutcomeKind::HandledException);
    return std::move(out_);
  }

private:
  void push_frame(const BytecodeFunction &fn, std::vector<Value> args) {
    Frame f;
    f.fn = &fn;
    f.registers.assign(static_cast<std::size_t>(fn.frame_size), Value::null());
    f.args = std::move(args);
    frames_.push_back(std::move(f));
  }

  [[noreturn]] static void raise(std::string message) { throw ScriptThrow{Value::string(std::move(message))}; }

  Value checked_string(std::string s) const {
    if (s.size() > options_.max_string_len)
      raise(messages::kStringLength);
    return Value::string(std::move(s));
  }

  Span current_span() const {
    const Frame &f = frames_.back();
    return static_cast<std::size_t>(f.pc) < f.fn->statement_map.size() ? f.fn->statement_map[f.pc] : Span{};
  }

  // Returns true when the exception escapes the entry function.
  bool unwind(Value thrown) {
    Span throw_span = current_span();
    while (!frames_.empty()) {
      Frame &f = frames_.back();
      if (!f.tries.empty()) {
        TryRecord t = f.tries.back();
        f.tries.pop_back();
        out_.handled.push_back({thrown.to_display(), throw_span, t.span});
        f.registers[t.catch_reg] = std::move(thrown);
        f.pc = t.handler;
        return false;
      }
      if (frames_.size() == 1)
        break;
      frames_.pop_back();
    }
    out_.kind = OutcomeKind::UnhandledException;
    out_.message = thrown.to_display();
    out_.span = throw_span;
    return true;
  }

  const Value &receiver(const Frame &f, int reg, std::string_view member) {
    const Value &v = f.registers[reg];
    if (v.tag != Tag::Str)
      raise(messages::member_receiver(member, v.tag));
    return v;
  }

  int64_t int_arg(const Value &v, std::string_view member) {
    if (v.tag != Tag::Int)
      raise(messages::member_argument(member, Tag::Int, v.tag));
    return v.num;
  }

  // Executes one bytecode. Returns true when the entry function returned.
  bool step(const Bytecode &bc) {
    Frame &f = frames_.back();
    const int a = bc.operands[0];
    const int b = bc.operands[1];
    switch (bc.op) {
    case Op::LdaConst:
      f.acc = f.fn->constants[a];
      break;
    case Op::LdaParam:
      f.acc = f.args[a];
      break;
    case Op::Ldar:
      f.acc = f.registers[a];
      break;
    case Op::Star:
      f.registers[a] = f.acc;
      break;
    case Op::Add: {
      const Value &l = f.registers[a];
      if (l.tag == Tag::Int && f.acc.tag == Tag::Int)
        f.acc = Value::integer(wrap_add(l.num, f.acc.num));
      else if (l.tag == Tag::Str || f.acc.tag == Tag::Str)
        f.acc = checked_string(l.to_display() + f.acc.to_display());
      else
        raise(messages::operands("+", l.tag, f.acc.tag));
      break;
    }
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Mod: {
      const Value &l = f.registers[a];
      static constexpr std::string_view kNames[] = {"-", "*", "/", "%"};
      std::string_view name = kNames[static_cast<int>(bc.op) - static_cast<int>(Op::Sub)];
      if (l.tag != Tag::Int || f.acc.tag != Tag::Int)
        raise(messages::operands(name, l.tag, f.acc.tag));
      int64_t x = l.num, y = f.acc.num;
      if ((bc.op == Op::Div || bc.op == Op::Mod) && y == 0)
        raise(messages::kDivisionByZero);
      int64_t r = bc.op == Op::Sub   ? wrap_sub(x, y)
                  : bc.op == Op::Mul ? wrap_mul(x, y)
                  : bc.op == Op::Div ? safe_div(x, y)
                                     : safe_mod(x, y);
      f.acc = Value::integer(r);
      break;
    }
    case Op::Neg:
      if (f.acc.tag != Tag::Int)
        raise(messages::operand("-", f.acc.tag));
      f.acc = Value::integer(wrap_sub(0, f.acc.num));
      break;
    case Op::Not:
      f.acc = Value::boolean(!f.acc.truthy());
      break;
    case Op::TestEqual:
      f.acc = Value::boolean(f.registers[a] == f.acc);
      break;
    case Op::TestLess:
    case Op::TestLessEq: {
      const Value &l = f.registers[a];
      bool strict = bc.op == Op::TestLess;
      bool r = false;
      if (l.tag == Tag::Int && f.acc.tag == Tag::Int)
        r = strict ? l.num < f.acc.num : l.num <= f.acc.num;
      else if (l.tag == Tag::Str && f.acc.tag == Tag::Str) {
        int c = compare_bytes(l.str, f.acc.str);
        r = strict ? c < 0 : c <= 0;
      }
      f.acc = Value::boolean(r);
      break;
    }
    case Op::Jump:
      f.pc = a;
      return false;
    case Op::JumpIfFalse:
      if (!f.acc.truthy()) {
        f.pc = a;
        return false;
      }
      break;
    case Op::JumpIfTrue:
      if (f.acc.truthy()) {
        f.pc = a;
        return false;
      }
      break;
    case Op::StrLen:
      if (f.acc.tag != Tag::Str)
        raise(messages::member_receiver("length", f.acc.tag));
      f.acc = Value::integer(static_cast<int64_t>(f.acc.str.size()));
      break;
    case Op::StrCharAt:
    case Op::StrCharCode: {
      bool code = bc.op == Op::StrCharCode;
      const char *member = code ? "charCodeAt" : "charAt";
      const std::string &s = receiver(f, a, member).str;
      int64_t i = int_arg(f.acc, member);
      bool in = i >= 0 && i < static_cast<int64_t>(s.size());
      if (code)
        f.acc = Value::integer(in ? static_cast<unsigned char>(s[static_cast<std::size_t>(i)]) : -1);
      else
        f.acc = Value::string(in ? std::string(1, s[static_cast<std::size_t>(i)]) : std::string());
      break;
    }
    case Op::StrIndexOf: {
      const std::string &s = receiver(f, a, "indexOf").str;
      if (f.acc.tag != Tag::Str)
        raise(messages::member_argument("indexOf", Tag::Str, f.acc.tag));
      auto pos = s.find(f.acc.str);
      f.acc = Value::integer(pos == std::string::npos ? -1 : static_cast<int64_t>(pos));
      break;
    }
    case Op::StrSubstring: {
      const std::string &s = receiver(f, a, "substring").str;
      int64_t start = int_arg(f.registers[b], "substring");
      int64_t end = int_arg(f.acc, "substring");
      auto len = static_cast<int64_t>(s.size());
      start = std::clamp<int64_t>(start, 0, len);
      end = std::clamp<int64_t>(end, 0, len);
      if (start > end)
        std::swap(start, end);
      f.acc = Value::string(s.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(end - start)));
      break;
    }
    case Op::StrConcat: {
      const std::string &s = receiver(f, a, "concat").str;
      f.acc = checked_string(s + f.acc.to_display());
      break;
    }
    case Op::CallFunc: {
      const BytecodeFunction &callee = program_.functions[a];
      if (static_cast<int>(frames_.size()) >= kMaxCallDepth)
        raise(messages::kStackOverflow);
      std::vector<Value> args(f.registers.begin() + b, f.registers.begin() + b + bc.operands[2]);
      Value acc = f.acc;
      push_frame(callee, std::move(args));
      // One accumulator shared by every frame, as in the baseline tier.
      frames_.back().acc = std::move(acc);
      return false;
    }
    case Op::Return: {
      Value v = std::move(f.acc);
      frames_.pop_back();
      if (frames_.empty()) {
        out_.value = std::move(v);
        return true;
      }
      frames_.back().acc = std::move(v);
      frames_.back().pc++;
      return false;
    }
    case Op::Throw:
      throw ScriptThrow{f.acc};
    case Op::EnterTry:
      f.tries.push_back({a, b, current_span()});
      break;
    case Op::LeaveTry:
      if (!f.tries.empty())
        f.tries.pop_back();
      break;
    case Op::PinSymbolic:
      break;
    }
    f.pc++;
    return false;
  }

  const Program &program_;
  const RunOptions &options_;
  std::vector<Frame> frames_;
  ExecOutcome out_;
};

}  // namespace

ExecOutcome interpret(const Program &program, const BytecodeFunction &fn, std::span<const Value> args,
                      const RunOptions &options) {
  return Interpreter(program, options).run(fn, args);
}

}  // namespace sparktrace
