#pragma once

#include <cstdint>
#include <string>

#include "sparktrace/common.hpp"

namespace sparktrace {

// Printable ASCII: lowercase, uppercase, digits, then the rest.
std::string default_alphabet();

struct Config {
  std::string alphabet = default_alphabet();
  std::size_t max_string_len = kDefaultMaxStringLen;
  int max_solve_len = 8;
  int max_seed_len = 8;
  int max_iterations = 50;
  int64_t per_function_time_budget_ms = 60'000;
  std::size_t trace_op_cap = 1'000'000;
  uint64_t rng_seed = 1;
  bool symbolize_all_strings = true;
  std::string output_dir = "out";
  int64_t solver_node_budget = 100'000;
  int max_solver_calls = 5'000;
  // When false, wall-clock fields in reports are written as 0.
  bool timing = true;

  // Throws Error on unknown keys or bad values.
  void set(const std::string &key, const std::string &value);
  void validate() const;
};

// key = value lines; '#' starts a comment. Later keys override earlier ones.
void load_config_file(const std::string &path, Config &config);

}  // namespace sparktrace
