#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparktrace/tracer.hpp"

namespace sparktrace {

class LiftError : public Error {
public:
  LiftError(int64_t seq, const std::string &reason)
      : Error("lift error at op " + std::to_string(seq) + ": " + reason), seq(seq), reason(reason) {}
  int64_t seq;
  std::string reason;
};

class EvalError : public Error {
public:
  using Error::Error;
};

class IrParseError : public Error {
public:
  IrParseError(int line, const std::string &message)
      : Error("ir line " + std::to_string(line) + ": " + message), line(line) {}
  int line;
};

enum class IrKind : uint8_t {
  Const,            // imm
  Add,              // %l %r
  Sub,
  Mul,
  Div,
  Mod,
  CmpEq,
  CmpLt,
  CmpLe,
  Not,              // %x
  Select,           // %c %t %f
  ReadMem8,         // %addr
  WriteMem8,        // %addr %value              (no result)
  MakeSymbolic,     // symbolId base capacity    (result: symbolic length)
  AssertPathTaken,  // %v expected originPc targetPc  (no result)
  LogError,         // tag %a %b handled originPc     (no result)
};

std::string_view ir_kind_name(IrKind k);
std::optional<IrKind> ir_kind_from_name(std::string_view name);
bool ir_has_result(IrKind k);

struct IrInstr {
  IrKind kind = IrKind::Const;
  int result = -1;
  std::vector<int> args;      // value ids
  std::vector<int64_t> imms;  // immediates

  bool operator==(const IrInstr &) const = default;
};

struct IrTerminator {
  enum class Kind : uint8_t { Goto, Halt };
  Kind kind = Kind::Halt;
  std::string target;                        // Goto
  OutcomeKind outcome = OutcomeKind::Returned;  // Halt
  Tag tag = Tag::Null;                       // Halt: tag of the returned / thrown value
  int a = -1;
  int b = -1;

  bool operator==(const IrTerminator &) const = default;
};

struct IrBlock {
  std::string label;
  std::vector<IrInstr> instrs;
  IrTerminator term;

  bool operator==(const IrBlock &) const = default;
};

struct SymbolDecl {
  std::string name;
  int64_t base = 0;
  int64_t capacity = 0;  // bytes reserved at base; traced length
  int length_value = -1; // value id defined by MakeSymbolic

  bool operator==(const SymbolDecl &) const = default;
};

struct PathAssertion {
  int value = -1;
  bool expected = false;
  int64_t origin_pc = 0;
  int64_t target_pc = 0;

  bool operator==(const PathAssertion &) const = default;
};

struct IrModule {
  std::string function_name;
  std::string entry;  // empty until build_entry
  std::map<int, SymbolDecl> symbols;
  std::vector<MemRegion> memory;
  std::vector<IrBlock> blocks;
  int value_count = 0;

  bool operator==(const IrModule &) const = default;

  const IrBlock *find_block(std::string_view label) const;
  // Every AssertPathTaken, in block order.
  std::vector<PathAssertion> assertions() const;
};

IrModule lift(const MicroTrace &extracted);
IrModule build_entry(const IrModule &module);

// Concrete bytes per symbol. A binding may be shorter than the symbol's capacity;
// bytes past its end read as zero.
using Bindings = std::map<int, std::string>;

Bindings bindings_from_trace(const MicroTrace &trace);

struct LoggedError {
  Tag tag = Tag::Null;
  Value value;
  bool handled = false;
  int64_t origin_pc = 0;
};

struct EvalResult {
  // Diverged when an assertion failed; evaluation stops there.
  bool diverged = false;
  OutcomeKind outcome = OutcomeKind::Returned;
  Value value;  // returned value, or the thrown value when unhandled
  std::vector<bool> assertion_results;
  std::vector<LoggedError> errors;

  std::string outcome_name() const;
  int first_failed() const;
};

// Hook for consumers that shadow the concrete evaluation (the concolic engine).
class IrObserver {
public:
  virtual ~IrObserver() = default;
  // Called after each instruction executed; `values` holds the value of every id so far.
  virtual void after(const IrInstr &instr, std::span<const int64_t> values) = 0;
};

EvalResult eval_ir(const IrModule &module, const Bindings &bindings, IrObserver *observer = nullptr);

// True when `r` reproduces the traced outcome (kind, value or message).
bool matches_outcome(const EvalResult &r, const ExecOutcome &o);

std::string dump_ir(const IrModule &module);
IrModule load_ir(const std::string &text);

}  // namespace sparktrace
