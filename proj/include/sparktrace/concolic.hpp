#pragma once

#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sparktrace/config.hpp"
#include "sparktrace/lifter.hpp"

namespace sparktrace {

class DivergenceError : public Error {
public:
  DivergenceError(int index, const std::string &message) : Error(message), index(index) {}
  int index;  // first failed path assertion
};

// Symbolic expressions -------------------------------------------------------

enum class SymKind : uint8_t { Byte, Len, ConstInt, ConstBool, Add, Sub, Mul, Div, Mod, Eq, Lt, Le, Not, And, Or };

struct SymNode;
using SymExpr = std::shared_ptr<const SymNode>;

struct SymNode {
  SymKind kind = SymKind::ConstInt;
  int64_t a = 0;  // constant value, or symbol id for Byte / Len
  int64_t b = 0;  // byte offset for Byte
  SymExpr l, r;
};

namespace sym {
SymExpr byte(int symbol, int64_t offset);
SymExpr len(int symbol);
SymExpr integer(int64_t v);
SymExpr boolean(bool v);
// Builds a node, folding constants and trivial identities.
SymExpr make(SymKind kind, SymExpr l, SymExpr r = nullptr);
SymExpr negate(const SymExpr &e);
// Boolean view of an integer-valued expression (nonzero test).
SymExpr truth(const SymExpr &e);

bool is_bool(const SymExpr &e);
bool is_const(const SymExpr &e);
// Integers evaluate as 64-bit two's complement; booleans as 0/1; x/0 and x%0 as 0.
// Bytes past a binding's end read as 0.
int64_t eval(const SymExpr &e, const Bindings &model);
std::string to_string(const SymExpr &e);

struct Var {
  int symbol = 0;
  int64_t offset = -1;  // -1 for the length
  auto operator<=>(const Var &) const = default;
};
void collect_vars(const SymExpr &e, std::set<Var> &out);
}  // namespace sym

// Path conditions -------------------------------------------------------------

struct PathEntry {
  SymExpr expr;          // boolean
  bool taken = false;    // truth value of the branch condition on this run
  int64_t origin_pc = 0;
  int64_t target_pc = 0;
};

using PathCondition = std::vector<PathEntry>;

uint64_t path_signature(const PathCondition &pc);

struct ReplayResult {
  EvalResult eval;
  PathCondition path;
};

// Concrete evaluation shadowed by symbolic expressions. Throws DivergenceError
// when a path assertion fails.
ReplayResult symbolic_replay(const IrModule &module, const Bindings &bindings);

// Solver -------------------------------------------------------------------------

enum class SolveStatus { Sat, Unsat, Unknown };
std::string_view solve_status_name(SolveStatus s);

struct SolverOptions {
  std::string alphabet = default_alphabet();
  int max_len = 8;
  int64_t node_budget = 100'000;
};

struct SolveResult {
  SolveStatus status = SolveStatus::Unsat;
  Bindings model;
};

struct Constraint {
  SymExpr expr;
  bool want = true;
};

// Finds strings (one per symbol in `symbols`) satisfying every constraint. Lengths are
// tried nearest to the hint first; unconstrained bytes keep the hint's bytes.
SolveResult solve(const std::vector<Constraint> &constraints, const std::set<int> &symbols, const Bindings &hint,
                  const SolverOptions &options);

// Keeps pc[0..k) as observed and flips pc[k].
SolveResult negate_and_solve(const PathCondition &pc, std::size_t k, const std::map<int, SymbolDecl> &decls,
                             const Bindings &hint, const SolverOptions &options);

// Generation ----------------------------------------------------------------------

enum class Provenance { RandomSeed, NegatedBranch };

struct TestCase {
  int id = 0;
  std::string function;
  std::vector<Value> args;
  int generation = 0;
  Provenance provenance = Provenance::RandomSeed;
  int parent = -1;
  int branch = -1;
};

std::string test_case_to_json(const TestCase &tc);
TestCase test_case_from_json(const std::string &text);

struct ExceptionRecord {
  OutcomeKind kind = OutcomeKind::UnhandledException;
  std::string message;
  Span span;
  int test_case = 0;
};

struct GenerateReport {
  std::string function;
  int iterations = 0;
  std::vector<TestCase> test_cases;  // one per unique path, in execution order
  int unique_paths = 0;
  std::vector<ExceptionRecord> exceptions;
  int divergences = 0;
  int solver_calls = 0;
  int unknown = 0;
  int trace_overflows = 0;
  std::vector<double> iteration_ms;
  double wall_time_ms = 0;

  double mean_iteration_ms() const;
  std::string to_json(bool timing = true) const;
};

struct GenerateArtifacts {
  // Filled for each executed iteration when requested.
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

// Indices of parameters that get symbolized under `config`.
std::set<int> symbolic_params(const ExportInfo &info, const Config &config);

// Random-seed arguments for one call: every parameter gets a string.
std::vector<Value> random_arguments(int param_count, std::mt19937_64 &rng, const Config &config);

// Without `seed`, iteration 0 runs on random arguments drawn from config.rng_seed.
GenerateReport generate(const Program &program, const ExportInfo &info, const Config &config,
                        const std::vector<Value> *seed = nullptr, GenerateArtifacts *artifacts = nullptr);

}  // namespace sparktrace
