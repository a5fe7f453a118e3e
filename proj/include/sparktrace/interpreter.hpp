#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sparktrace/bytecode.hpp"

namespace sparktrace {

// Raised when a run exceeds its dispatch budget. Not a script exception.
class ExecutionLimit : public Error {
public:
  using Error::Error;
};

enum class OutcomeKind : uint8_t { Returned, HandledException, UnhandledException };

std::string_view outcome_kind_name(OutcomeKind k);
OutcomeKind outcome_kind_from_name(std::string_view name);

struct HandledEvent {
  std::string message;
  Span throw_span;
  Span catch_span;

  bool operator==(const HandledEvent &) const = default;
};

struct DispatchEntry {
  int64_t pc = 0;  // global code address
  Op op = Op::Return;

  bool operator==(const DispatchEntry &) const = default;
};

// Result of one run. HandledException means the function returned normally
// after catching at least one exception; `handled` lists every catch.
struct ExecOutcome {
  OutcomeKind kind = OutcomeKind::Returned;
  Value value;          // returned value (Returned / HandledException)
  std::string message;  // UnhandledException
  Span span;            // UnhandledException: throwing statement
  std::vector<HandledEvent> handled;
  std::vector<DispatchEntry> dispatch_log;

  bool same_result(const ExecOutcome &o) const {
    return kind == o.kind && value == o.value && message == o.message && span == o.span &&
           handled == o.handled;
  }
  std::string summary() const;
};

// Register state visible at a bytecode boundary (debug hook).
struct FrameView {
  int depth = 0;
  int function = 0;
  int64_t pc = 0;  // global
  std::span<const Value> registers;
  const Value *accumulator = nullptr;
};

struct RunOptions {
  std::size_t max_string_len = kDefaultMaxStringLen;
  int64_t max_steps = 1'000'000;
  std::function<void(const FrameView &)> on_dispatch;
};

// Messages shared by every engine that implements MiniScript semantics.
namespace messages {
std::string member_receiver(std::string_view member, Tag receiver);
std::string member_argument(std::string_view member, Tag expected, Tag got);
std::string operands(std::string_view op, Tag lhs, Tag rhs);
std::string operand(std::string_view op, Tag t);
inline const char *kDivisionByZero = "RangeError: Division by zero";
inline const char *kStringLength = "RangeError: Invalid string length";
inline const char *kStackOverflow = "RangeError: Maximum call stack size exceeded";
}  // namespace messages

ExecOutcome interpret(const Program &program, const BytecodeFunction &fn, std::span<const Value> args,
                      const RunOptions &options = {});

}  // namespace sparktrace
