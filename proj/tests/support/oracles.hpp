#pragma once

#include <random>
#include <set>
#include <string>
#include <vector>

#include "sparktrace/concolic.hpp"

namespace sparktrace::support {

// Every string over `alphabet` with length 0..max_len, shortest first.
std::vector<std::string> all_strings(const std::string &alphabet, int max_len);

// Evaluates a symbolic expression by hand; independent of sym::eval.
int64_t oracle_eval(const SymExpr &e, const Bindings &model);

// True when the model keeps pc[0..k) as observed and flips pc[k].
bool satisfies_negation(const PathCondition &pc, std::size_t k, const Bindings &model);

// Searches every binding of `symbols` to strings in `domain`.
bool brute_force_sat(const PathCondition &pc, std::size_t k, const std::set<int> &symbols,
                     const std::vector<std::string> &domain);

struct RandomPathOptions {
  std::string alphabet = "ab";
  int max_len = 3;
  int symbols = 1;
  int max_entries = 4;
  int max_depth = 3;
};

// A path condition whose `taken` flags come from a concrete binding drawn
// from the same domain, so the prefix is always satisfiable.
PathCondition random_path(std::mt19937_64 &rng, const RandomPathOptions &options, Bindings *observed = nullptr);

struct CoverageOracle {
  std::size_t total = 0;
  std::size_t covered = 0;
  double percent() const { return total ? 100.0 * static_cast<double>(covered) / static_cast<double>(total) : 0; }
};

// Runs every string-taking export on every combination of strings in `domain`
// through the reference evaluator and counts library statements entered.
CoverageOracle exhaustive_coverage(const AstNode &program, const std::vector<std::string> &domain);

}  // namespace sparktrace::support
