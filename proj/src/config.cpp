#include "sparktrace/config.hpp"

#include <charconv>
#include <fstream>

namespace sparktrace {

std::string default_alphabet() {
  std::string s;
  for (char c = 'a'; c <= 'z'; ++c)
    s.push_back(c);
  for (char c = 'A'; c <= 'Z'; ++c)
    s.push_back(c);
  for (char c = '0'; c <= '9'; ++c)
    s.push_back(c);
  for (int c = 32; c < 127; ++c)
    if (!std::isalnum(c))
      s.push_back(static_cast<char>(c));
  return s;
}

namespace {

template <typename T> T parse_number(const std::string &key, const std::string &value) {
  T v{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size())
    throw Error("config: bad value for " + key + ": '" + value + "'");
  return v;
}

bool parse_bool(const std::string &key, const std::string &value) {
  if (value == "true" || value == "1")
    return true;
  if (value == "false" || value == "0")
    return false;
  throw Error("config: bad boolean for " + key + ": '" + value + "'");
}

std::string trim(const std::string &s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void Config::set(const std::string &key, const std::string &value) {
  if (key == "alphabet")
    alphabet = value == "default" ? default_alphabet() : percent_decode(value);
  else if (key == "maxStringLen")
    max_string_len = parse_number<std::size_t>(key, value);
  else if (key == "maxSolveLen")
    max_solve_len = parse_number<int>(key, value);
  else if (key == "maxSeedLen")
    max_seed_len = parse_number<int>(key, value);
  else if (key == "maxIterations")
    max_iterations = parse_number<int>(key, value);
  else if (key == "perFunctionTimeBudgetMs")
    per_function_time_budget_ms = parse_number<int64_t>(key, value);
  else if (key == "traceOpCap")
    trace_op_cap = parse_number<std::size_t>(key, value);
  else if (key == "rngSeed")
    rng_seed = parse_number<uint64_t>(key, value);
  else if (key == "symbolizeAllStrings")
    symbolize_all_strings = parse_bool(key, value);
  else if (key == "outputDir")
    output_dir = value;
  else if (key == "solverNodeBudget")
    solver_node_budget = parse_number<int64_t>(key, value);
  else if (key == "maxSolverCalls")
    max_solver_calls = parse_number<int>(key, value);
  else if (key == "timing")
    timing = parse_bool(key, value);
  else
    throw Error("config: unknown key '" + key + "'");
}

void Config::validate() const {
  if (alphabet.empty())
    throw Error("config: alphabet must be nonempty");
  if (max_string_len == 0 || max_solve_len < 0 || max_seed_len < 0 || max_iterations <= 0 ||
      per_function_time_budget_ms <= 0 || trace_op_cap == 0 || solver_node_budget <= 0 || max_solver_calls <= 0)
    throw Error("config: bounds must be positive");
}

void load_config_file(const std::string &path, Config &config) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    line = trim(line);
    if (line.empty())
      continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    config.set(trim(line.substr(0, eq)), value);
  }
}

}  // namespace sparktrace
