#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sparktrace/interpreter.hpp"

namespace sparktrace {

class TraceOverflow : public Error {
public:
  using Error::Error;
};

class TraceParseError : public Error {
public:
  TraceParseError(int line, const std::string &message)
      : Error("trace line " + std::to_string(line) + ": " + message), line(line) {}
  int line;
};

enum class MicroKind : uint8_t {
  LoadReg,               // dstA, dstB, slot
  StoreReg,              // slot, srcA, srcB
  LoadConst,             // dstA, dstB, a, b
  LoadImm,               // dst, imm
  ArithAdd,              // dst, lhs, rhs
  ArithSub,
  ArithMul,
  ArithDiv,
  ArithMod,
  CmpEq,                 // dst, lhs, rhs
  CmpLt,
  CmpLe,
  BranchTaken,           // cond, sense, branchPc, targetPc; jump fires when (cond != 0) == sense
  BranchNotTaken,
  MemRead8,              // dst, addrReg, addr
  MemWrite8,             // addrReg, src, addr
  StrOpBegin,            // bytecode op
  StrOpEnd,              // bytecode op
  CallBegin,             // function, frameBase, argc
  CallEnd,               // function
  Ret,                   // tag, srcA, srcB
  ThrowOp,               // tag, srcA, srcB, handled, handlerPc
  SymbolicPin,           // symbolId, memBase, length, slot
  VerifyFrameSize,       // frameSize
  VerifyFeedbackVector,  // function
};

inline constexpr int kMicroKindCount = static_cast<int>(MicroKind::VerifyFeedbackVector) + 1;

enum class MicroTag : uint8_t { ControlFlow, Verification };

std::string_view micro_kind_name(MicroKind k);
std::optional<MicroKind> micro_kind_from_name(std::string_view name);
int micro_arity(MicroKind k);
std::string_view micro_tag_name(MicroTag t);

// Machine registers the handlers compute in.
inline constexpr int kMachineRegs = 32;

struct MicroOp {
  MicroKind kind = MicroKind::LoadImm;
  MicroTag tag = MicroTag::ControlFlow;
  int64_t origin_pc = 0;
  std::array<int64_t, 5> operands{};

  bool operator==(const MicroOp &) const = default;
};

enum class RegionClass : uint8_t { StringData, Scratch };

struct MemRegion {
  int64_t base = 0;
  RegionClass cls = RegionClass::StringData;
  std::vector<uint8_t> bytes;

  int64_t end() const { return base + static_cast<int64_t>(bytes.size()); }
  bool operator==(const MemRegion &) const = default;
};

// Flat byte-addressed memory used while tracing. Keeps both the live bytes
// and the image each region had when it was created.
class TraceMemory {
public:
  static constexpr int64_t kBase = 0x1000;

  int64_t allocate(std::size_t length, RegionClass cls, std::string_view init = {});
  uint8_t read8(int64_t addr) const;
  void write8(int64_t addr, uint8_t v);
  int64_t read64(int64_t addr) const;
  void write64(int64_t addr, int64_t v);
  // Writes into both the live and the initial image (pre-run materialization).
  void seed64(int64_t addr, int64_t v);
  std::string read_string(int64_t base, int64_t length) const;

  bool contains(int64_t addr, int64_t length = 1) const;
  std::vector<MemRegion> initial_image() const;

private:
  struct Region {
    int64_t base;
    int64_t length;
    RegionClass cls;
  };
  std::size_t index(int64_t addr) const;

  std::vector<Region> regions_;
  std::vector<uint8_t> live_;
  std::vector<uint8_t> initial_;
};

struct SymbolInfo {
  std::string name;
  int64_t base = 0;
  int64_t length = 0;

  bool operator==(const SymbolInfo &) const = default;
};

struct MicroTrace {
  std::string function_name;
  std::vector<Value> inputs;
  std::map<int, SymbolInfo> symbols;
  std::vector<MemRegion> memory;
  ExecOutcome outcome;
  std::vector<MicroOp> ops;

  bool operator==(const MicroTrace &o) const {
    return function_name == o.function_name && inputs == o.inputs && symbols == o.symbols &&
           memory == o.memory && outcome.same_result(o.outcome) && ops == o.ops;
  }

  // Global pc of each bytecode dispatch, read off the verification prologues.
  std::vector<int64_t> dispatch_pcs() const;
};

struct TraceOptions {
  std::size_t max_string_len = kDefaultMaxStringLen;
  std::size_t op_cap = 1'000'000;
  std::function<void(const FrameView &)> on_dispatch;
};

MicroTrace baseline_trace(const Program &program, const BytecodeFunction &fn, std::span<const Value> args,
                          const std::set<int> &symbolic_params, const TraceOptions &options = {});

// Keeps only ControlFlow ops; everything else is carried over unchanged.
MicroTrace extract_function_instr(const MicroTrace &trace);

std::string dump_trace(const MicroTrace &trace);
MicroTrace load_trace(const std::string &text);

std::string hex_encode(const std::vector<uint8_t> &bytes);
std::vector<uint8_t> hex_decode(std::string_view text);

}  // namespace sparktrace
