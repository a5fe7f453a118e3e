#include "sparktrace/bytecode.hpp"

#include <limits>
#include <map>
#include <sstream>

namespace sparktrace {

namespace {

struct OpInfo {
  Op op;
  std::string_view name;
  std::vector<OperandKind> operands;
};

using K = OperandKind;

const std::vector<OpInfo> &op_table() {
  static const std::vector<OpInfo> table = {
      {Op::LdaConst, "LdaConst", {K::Const}},
      {Op::LdaParam, "LdaParam", {K::Param}},
      {Op::Ldar, "Ldar", {K::Reg}},
      {Op::Star, "Star", {K::Reg}},
      {Op::Add, "Add", {K::Reg}},
      {Op::Sub, "Sub", {K::Reg}},
      {Op::Mul, "Mul", {K::Reg}},
      {Op::Div, "Div", {K::Reg}},
      {Op::Mod, "Mod", {K::Reg}},
      {Op::Neg, "Neg", {}},
      {Op::Not, "Not", {}},
      {Op::TestEqual, "TestEqual", {K::Reg}},
      {Op::TestLess, "TestLess", {K::Reg}},
      {Op::TestLessEq, "TestLessEq", {K::Reg}},
      {Op::Jump, "Jump", {K::Target}},
      {Op::JumpIfFalse, "JumpIfFalse", {K::Target}},
      {Op::JumpIfTrue, "JumpIfTrue", {K::Target}},
      {Op::StrLen, "StrLen", {}},
      {Op::StrCharAt, "StrCharAt", {K::Reg}},
      {Op::StrCharCode, "StrCharCode", {K::Reg}},
      {Op::StrIndexOf, "StrIndexOf", {K::Reg}},
      {Op::StrSubstring, "StrSubstring", {K::Reg, K::Reg}},
      {Op::StrConcat, "StrConcat", {K::Reg}},
      {Op::CallFunc, "CallFunc", {K::Func, K::Reg, K::Count}},
      {Op::Return, "Return", {}},
      {Op::Throw, "Throw", {}},
      {Op::EnterTry, "EnterTry", {K::Target, K::Reg}},
      {Op::LeaveTry, "LeaveTry", {}},
      {Op::PinSymbolic, "PinSymbolic", {K::Reg, K::Symbol}},
  };
  return table;
}

}  // namespace

std::string_view op_name(Op op) { return op_table()[static_cast<int>(op)].name; }

std::optional<Op> op_from_name(std::string_view name) {
  for (const OpInfo &info : op_table())
    if (info.name == name)
      return info.op;
  return std::nullopt;
}

const std::vector<OperandKind> &op_operands(Op op) { return op_table()[static_cast<int>(op)].operands; }

bool op_falls_through(Op op) {
  return op != Op::Jump && op != Op::Return && op != Op::Throw;
}

const BytecodeFunction *Program::find(std::string_view name) const {
  for (const BytecodeFunction &fn : functions)
    if (fn.name == name)
      return &fn;
  return nullptr;
}

const BytecodeFunction &Program::at_address(int64_t global_pc) const {
  for (const BytecodeFunction &fn : functions)
    if (global_pc >= fn.code_base && global_pc < fn.code_base + static_cast<int64_t>(fn.code.size()))
      return fn;
  throw Error("no function at code address " + std::to_string(global_pc));
}

int64_t Program::code_size() const {
  int64_t n = 0;
  for (const BytecodeFunction &fn : functions)
    n += static_cast<int64_t>(fn.code.size());
  return n;
}

// Compiler ------------------------------------------------------------

namespace {

class FunctionCompiler {
public:
  FunctionCompiler(const AstNode &decl, const std::map<std::string, std::pair<int, int>> &functions,
                   BytecodeFunction &out)
      : decl_(decl), functions_(functions), fn_(out) {}

  void run() {
    fn_.name = decl_.text;
    fn_.span = decl_.span;
    fn_.param_count = static_cast<int>(decl_.children.size()) - 1;
    span_stack_.push_back(decl_.span);

    for (int i = 0; i < fn_.param_count; ++i) {
      fn_.param_names.push_back(decl_.children[i].text);
      declare(decl_.children[i].text);
    }
    const AstNode &body = decl_.children.back();
    hoist(body);
    next_temp_ = static_cast<int>(locals_.size());
    fn_.frame_size = next_temp_;

    for (int i = 0; i < fn_.param_count; ++i) {
      emit(Op::LdaParam, i);
      emit(Op::Star, i);
      emit(Op::PinSymbolic, i, i);
    }
    block(body);
    // Implicit `return null` when control reaches the end.
    if (fn_.code.empty() || op_falls_through(fn_.code.back().op) || has_pending_targets()) {
      emit(Op::LdaConst, constant(Value::null()));
      emit(Op::Return);
    }
  }

private:
  void declare(const std::string &name) {
    if (locals_.count(name))
      return;
    int reg = static_cast<int>(locals_.size());
    locals_[name] = reg;
  }

  void hoist(const AstNode &n) {
    if (n.kind == NodeKind::VarDecl || n.kind == NodeKind::TryCatch)
      declare(n.text);
    for (const AstNode &c : n.children)
      hoist(c);
  }

  int lookup(const AstNode &ident) const {
    auto it = locals_.find(ident.text);
    if (it == locals_.end())
      throw CompileError(ident.span, "undeclared identifier '" + ident.text + "'");
    return it->second;
  }

  int temp() {
    int r = next_temp_++;
    fn_.frame_size = std::max(fn_.frame_size, next_temp_);
    return r;
  }
  void release(int count = 1) { next_temp_ -= count; }

  int here() const { return static_cast<int>(fn_.code.size()); }

  int emit(Op op, int a = 0, int b = 0, int c = 0) {
    fn_.code.push_back({op, {a, b, c}});
    fn_.statement_map.push_back(span_stack_.back());
    return here() - 1;
  }

  void patch(int at, int target) {
    fn_.code[at].operands[0] = target;
    targets_.push_back(target);
  }

  bool has_pending_targets() const {
    for (int t : targets_)
      if (t >= here())
        return true;
    return false;
  }

  int constant(const Value &v) {
    for (std::size_t i = 0; i < fn_.constants.size(); ++i)
      if (fn_.constants[i] == v)
        return static_cast<int>(i);
    fn_.constants.push_back(v);
    return static_cast<int>(fn_.constants.size()) - 1;
  }

  void block(const AstNode &b) {
    for (const AstNode &s : b.children)
      statement(s);
  }

  void statement(const AstNode &s) {
    bool counted = is_statement(s.kind);
    if (counted) {
      span_stack_.push_back(s.span);
      fn_.statements.push_back(s.span);
    }
    switch (s.kind) {
    case NodeKind::Block:
      block(s);
      break;
    case NodeKind::VarDecl:
    case NodeKind::ExprStmt:
      simple(s);
      break;
    case NodeKind::If: {
      expression(s.children[0]);
      int jf = emit(Op::JumpIfFalse, -1);
      statement(s.children[1]);
      if (s.children.size() > 2) {
        int jend = emit(Op::Jump, -1);
        patch(jf, here());
        statement(s.children[2]);
        patch(jend, here());
      } else {
        patch(jf, here());
      }
      break;
    }
    case NodeKind::While: {
      int top = here();
      expression(s.children[0]);
      int jf = emit(Op::JumpIfFalse, -1);
      statement(s.children[1]);
      patch(emit(Op::Jump, -1), top);
      patch(jf, here());
      break;
    }
    case NodeKind::For: {
      if (s.children[0].kind != NodeKind::Block)
        simple(s.children[0]);
      int top = here();
      expression(s.children[1]);
      int jf = emit(Op::JumpIfFalse, -1);
      statement(s.children[3]);
      if (s.children[2].kind != NodeKind::Block)
        simple(s.children[2]);
      patch(emit(Op::Jump, -1), top);
      patch(jf, here());
      break;
    }
    case NodeKind::Return:
      if (s.children.empty())
        emit(Op::LdaConst, constant(Value::null()));
      else
        expression(s.children[0]);
      emit(Op::Return);
      break;
    case NodeKind::Throw:
      expression(s.children[0]);
      emit(Op::Throw);
      break;
    case NodeKind::TryCatch: {
      int catch_reg = locals_.at(s.text);
      int enter = emit(Op::EnterTry, -1, catch_reg);
      block(s.children[0]);
      emit(Op::LeaveTry);
      int jend = emit(Op::Jump, -1);
      patch(enter, here());
      block(s.children[1]);
      patch(jend, here());
      break;
    }
    default:
      throw CompileError(s.span, "unexpected node in statement position");
    }
    if (counted)
      span_stack_.pop_back();
  }

  // VarDecl / ExprStmt, also used for `for` clauses.
  void simple(const AstNode &s) {
    if (s.kind == NodeKind::VarDecl) {
      if (s.children.empty())
        emit(Op::LdaConst, constant(Value::null()));
      else
        expression(s.children[0]);
      emit(Op::Star, locals_.at(s.text));
      return;
    }
    const AstNode &e = s.children[0];
    if (e.kind == NodeKind::Assign) {
      auto it = locals_.find(e.text);
      if (it == locals_.end())
        throw CompileError(e.span, "assignment to undeclared identifier '" + e.text + "'");
      expression(e.children[0]);
      emit(Op::Star, it->second);
    } else {
      expression(e);
    }
  }

  void binary_reg(const AstNode &lhs, const AstNode &rhs, Op op) {
    expression(lhs);
    int t = temp();
    emit(Op::Star, t);
    expression(rhs);
    emit(op, t);
    release();
  }

  // a > b  ==>  b < a, keeping left-to-right evaluation.
  void swapped_compare(const AstNode &lhs, const AstNode &rhs, Op op) {
    expression(lhs);
    int t1 = temp();
    emit(Op::Star, t1);
    expression(rhs);
    int t2 = temp();
    emit(Op::Star, t2);
    emit(Op::Ldar, t1);
    emit(op, t2);
    release(2);
  }

  void expression(const AstNode &e) {
    switch (e.kind) {
    case NodeKind::Literal:
      emit(Op::LdaConst, constant(e.literal));
      return;
    case NodeKind::Identifier:
      emit(Op::Ldar, lookup(e));
      return;
    case NodeKind::BinaryOp: {
      const std::string &op = e.text;
      const AstNode &l = e.children[0];
      const AstNode &r = e.children[1];
      if (op == "+") return binary_reg(l, r, Op::Add);
      if (op == "-") return binary_reg(l, r, Op::Sub);
      if (op == "*") return binary_reg(l, r, Op::Mul);
      if (op == "/") return binary_reg(l, r, Op::Div);
      if (op == "%") return binary_reg(l, r, Op::Mod);
      if (op == "==") return binary_reg(l, r, Op::TestEqual);
      if (op == "!=") {
        binary_reg(l, r, Op::TestEqual);
        emit(Op::Not);
        return;
      }
      if (op == "<") return binary_reg(l, r, Op::TestLess);
      if (op == "<=") return binary_reg(l, r, Op::TestLessEq);
      if (op == ">") return swapped_compare(l, r, Op::TestLess);
      if (op == ">=") return swapped_compare(l, r, Op::TestLessEq);
      if (op == "&&" || op == "||") {
        expression(l);
        int j = emit(op == "&&" ? Op::JumpIfFalse : Op::JumpIfTrue, -1);
        expression(r);
        patch(j, here());
        return;
      }
      throw CompileError(e.span, "unknown operator '" + op + "'");
    }
    case NodeKind::UnaryOp:
      expression(e.children[0]);
      emit(e.text == "-" ? Op::Neg : Op::Not);
      return;
    case NodeKind::Call:
      call(e);
      return;
    case NodeKind::MethodCall:
      method(e);
      return;
    case NodeKind::Index: {
      expression(e.children[0]);
      int t = temp();
      emit(Op::Star, t);
      expression(e.children[1]);
      emit(Op::StrCharAt, t);
      release();
      return;
    }
    default:
      throw CompileError(e.span, "unexpected node in expression position");
    }
  }

  void call(const AstNode &e) {
    auto it = functions_.find(e.text);
    if (it == functions_.end())
      throw CompileError(e.span, "call to undeclared function '" + e.text + "'");
    auto [index, params] = it->second;
    int argc = static_cast<int>(e.children.size());
    int first = next_temp_;
    for (int i = 0; i < params; ++i)
      temp();
    for (int i = 0; i < argc; ++i) {
      expression(e.children[i]);
      if (i < params) {
        emit(Op::Star, first + i);
      }
    }
    for (int i = argc; i < params; ++i) {
      emit(Op::LdaConst, constant(Value::null()));
      emit(Op::Star, first + i);
    }
    emit(Op::CallFunc, index, params > 0 ? first : 0, params);
    release(params);
  }

  void method(const AstNode &e) {
    const std::string &m = e.text;
    std::size_t argc = e.children.size() - 1;
    auto want = [&](std::size_t lo, std::size_t hi) {
      if (argc < lo || argc > hi)
        throw CompileError(e.span, "wrong number of arguments to '" + m + "'");
    };
    if (m == "length") {
      want(0, 0);
      expression(e.children[0]);
      emit(Op::StrLen);
      return;
    }
    Op op;
    if (m == "charAt") op = Op::StrCharAt;
    else if (m == "charCodeAt") op = Op::StrCharCode;
    else if (m == "indexOf") op = Op::StrIndexOf;
    else if (m == "concat") op = Op::StrConcat;
    else if (m == "substring") op = Op::StrSubstring;
    else throw CompileError(e.span, "unsupported member '" + m + "'");

    expression(e.children[0]);
    int recv = temp();
    emit(Op::Star, recv);
    if (op == Op::StrSubstring) {
      want(1, 2);
      expression(e.children[1]);
      int start = temp();
      emit(Op::Star, start);
      if (argc == 2) {
        expression(e.children[2]);
      } else {
        // Clamped to the receiver's length at run time.
        emit(Op::LdaConst, constant(Value::integer(std::numeric_limits<int64_t>::max())));
      }
      emit(Op::StrSubstring, recv, start);
      release(2);
      return;
    }
    if (op == Op::StrCharAt || op == Op::StrCharCode) {
      want(0, 1);
      if (argc == 0)
        emit(Op::LdaConst, constant(Value::integer(0)));
      else
        expression(e.children[1]);
    } else {
      want(1, 1);
      expression(e.children[1]);
    }
    emit(op, recv);
    release();
  }

  const AstNode &decl_;
  const std::map<std::string, std::pair<int, int>> &functions_;
  BytecodeFunction &fn_;
  std::map<std::string, int> locals_;
  std::vector<Span> span_stack_;
  std::vector<int> targets_;
  int next_temp_ = 0;
};

}  // namespace

Program compile(const AstNode &program) {
  if (program.kind != NodeKind::Program)
    throw CompileError(program.span, "expected a Program node");
  std::map<std::string, std::pair<int, int>> functions;
  for (std::size_t i = 0; i < program.children.size(); ++i) {
    const AstNode &fn = program.children[i];
    functions[fn.text] = {static_cast<int>(i), static_cast<int>(fn.children.size()) - 1};
  }
  Program out;
  int64_t base = 0;
  for (std::size_t i = 0; i < program.children.size(); ++i) {
    BytecodeFunction fn;
    FunctionCompiler(program.children[i], functions, fn).run();
    fn.index = static_cast<int>(i);
    fn.code_base = base;
    base += static_cast<int64_t>(fn.code.size());
    out.functions.push_back(std::move(fn));
  }
  for (const BytecodeFunction &fn : out.functions)
    verify(fn, &out);
  return out;
}

Program compile_source(const std::string &text, const std::string &path) {
  SourceProgram src{path, text, {}};
  Program p = compile(parse(src));
  p.path = path;
  return p;
}

// Verification ----------------------------------------------------------

void verify(const BytecodeFunction &fn, const Program *program) {
  const int n = static_cast<int>(fn.code.size());
  if (n == 0)
    throw VerifyError(0, "empty function");
  if (fn.frame_size < 0 || fn.param_count < 0)
    throw VerifyError(0, "negative frame size or parameter count");
  if (!fn.statement_map.empty() && static_cast<int>(fn.statement_map.size()) != n)
    throw VerifyError(0, "statement map does not cover the code");
  for (int i = 0; i < n; ++i) {
    const Bytecode &bc = fn.code[i];
    if (static_cast<int>(bc.op) >= kOpCount)
      throw VerifyError(i, "invalid opcode");
    const auto &kinds = op_operands(bc.op);
    for (std::size_t k = kinds.size(); k < bc.operands.size(); ++k)
      if (bc.operands[k] != 0)
        throw VerifyError(i, "unexpected extra operand");
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      int v = bc.operands[k];
      switch (kinds[k]) {
      case OperandKind::Reg:
        if (v < 0 || v >= fn.frame_size)
          throw VerifyError(i, "register r" + std::to_string(v) + " outside frame of size " +
                                   std::to_string(fn.frame_size));
        break;
      case OperandKind::Const:
        if (v < 0 || v >= static_cast<int>(fn.constants.size()))
          throw VerifyError(i, "constant index out of range");
        break;
      case OperandKind::Target:
        if (v < 0 || v >= n)
          throw VerifyError(i, "jump target " + std::to_string(v) + " out of range");
        break;
      case OperandKind::Param:
      case OperandKind::Symbol:
        if (v < 0 || v >= fn.param_count)
          throw VerifyError(i, "parameter index out of range");
        break;
      case OperandKind::Func:
        if (v < 0 || (program && v >= static_cast<int>(program->functions.size())))
          throw VerifyError(i, "call to unknown function");
        break;
      case OperandKind::Count:
        if (v < 0)
          throw VerifyError(i, "negative count");
        break;
      }
    }
    if (bc.op == Op::CallFunc) {
      int first = bc.operands[1], argc = bc.operands[2];
      if (argc > 0 && first + argc > fn.frame_size)
        throw VerifyError(i, "argument registers outside frame");
      if (program && argc != program->functions[bc.operands[0]].param_count)
        throw VerifyError(i, "argument count does not match callee");
    }
    if (op_falls_through(bc.op) && i + 1 >= n)
      throw VerifyError(i, "control falls off the end of the function");
  }
}

// Disassembly -----------------------------------------------------------

namespace {
std::string constant_text(const Value &v) {
  switch (v.tag) {
  case Tag::Int:
    return std::to_string(v.num);
  case Tag::Bool:
    return v.num ? "true" : "false";
  case Tag::Null:
    return "null";
  case Tag::Str:
    return quote_bytes(v.str);
  }
  return {};
}
}  // namespace

std::string disassemble(const BytecodeFunction &fn) {
  std::ostringstream os;
  for (std::size_t i = 0; i < fn.code.size(); ++i) {
    const Bytecode &bc = fn.code[i];
    os << i << ": " << op_name(bc.op);
    const auto &kinds = op_operands(bc.op);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      int v = bc.operands[k];
      os << (k == 0 ? " " : ", ");
      switch (kinds[k]) {
      case OperandKind::Reg: os << 'r' << v; break;
      case OperandKind::Const:
        os << '#' << v << '(' << (v >= 0 && v < static_cast<int>(fn.constants.size()) ? constant_text(fn.constants[v]) : "?")
           << ')';
        break;
      case OperandKind::Target: os << '@' << v; break;
      case OperandKind::Param: os << 'a' << v; break;
      case OperandKind::Func: os << 'f' << v; break;
      case OperandKind::Count: os << v; break;
      case OperandKind::Symbol: os << 's' << v; break;
      }
    }
    if (i < fn.statement_map.size() && fn.statement_map[i].valid())
      os << "  ; " << fn.statement_map[i].str();
    os << '\n';
  }
  return os.str();
}

}  // namespace sparktrace
