#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sparktrace/common.hpp"
#include "sparktrace/frontend.hpp"

namespace sparktrace {

class CompileError : public Error {
public:
  CompileError(Span span, const std::string &message)
      : Error("compile error at " + span.str() + ": " + message), span(span) {}
  Span span;
};

class VerifyError : public Error {
public:
  VerifyError(int index, const std::string &reason)
      : Error("verify error at bytecode " + std::to_string(index) + ": " + reason), index(index),
        reason(reason) {}
  int index;
  std::string reason;
};

// Accumulator machine. Unless noted, binary ops compute `acc = reg <op> acc`.
enum class Op : uint8_t {
  LdaConst,      // #c
  LdaParam,      // param index
  Ldar,          // r
  Star,          // r
  Add,           // r
  Sub,           // r
  Mul,           // r
  Div,           // r
  Mod,           // r
  Neg,           //
  Not,           //
  TestEqual,     // r
  TestLess,      // r        acc = r < acc
  TestLessEq,    // r        acc = r <= acc
  Jump,          // target
  JumpIfFalse,   // target
  JumpIfTrue,    // target
  StrLen,        //          acc = acc.length
  StrCharAt,     // r        acc = r.charAt(acc)
  StrCharCode,   // r        acc = r.charCodeAt(acc)
  StrIndexOf,    // r        acc = r.indexOf(acc)
  StrSubstring,  // r, a     acc = r.substring(a, acc)
  StrConcat,     // r        acc = r.concat(acc)
  CallFunc,      // f, first arg register, arg count
  Return,        //
  Throw,         //
  EnterTry,      // handler target, catch register
  LeaveTry,      //
  PinSymbolic,   // r, symbol id
};

inline constexpr int kOpCount = static_cast<int>(Op::PinSymbolic) + 1;

enum class OperandKind : uint8_t { Reg, Const, Target, Param, Func, Count, Symbol };

std::string_view op_name(Op op);
std::optional<Op> op_from_name(std::string_view name);
const std::vector<OperandKind> &op_operands(Op op);
bool op_falls_through(Op op);

struct Bytecode {
  Op op = Op::Return;
  std::array<int32_t, 3> operands{};

  bool operator==(const Bytecode &) const = default;
};

struct BytecodeFunction {
  std::string name;
  int index = 0;          // position in the program
  int64_t code_base = 0;  // global address of code[0]
  int param_count = 0;
  std::vector<std::string> param_names;
  int frame_size = 0;
  std::vector<Value> constants;
  std::vector<Bytecode> code;
  std::vector<Span> statement_map;  // per bytecode; invalid span when unmapped
  std::vector<Span> statements;     // every source statement in this function
  Span span;

  bool operator==(const BytecodeFunction &o) const {
    return name == o.name && param_count == o.param_count && frame_size == o.frame_size &&
           constants == o.constants && code == o.code && statement_map == o.statement_map;
  }
};

struct Program {
  std::string path;
  std::vector<BytecodeFunction> functions;

  const BytecodeFunction *find(std::string_view name) const;
  const BytecodeFunction &at_address(int64_t global_pc) const;
  int64_t code_size() const;
};

Program compile(const AstNode &program);
Program compile_source(const std::string &text, const std::string &path = "<text>");

// Throws VerifyError. With a program, call targets and arities are checked too.
void verify(const BytecodeFunction &fn, const Program *program = nullptr);

std::string disassemble(const BytecodeFunction &fn);

}  // namespace sparktrace
