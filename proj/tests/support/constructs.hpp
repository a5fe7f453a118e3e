#pragma once

#include <string>
#include <vector>

#include "sparktrace/common.hpp"

namespace sparktrace::support {

// One small program per instruction combination, with an input that drives
// it through its interesting path.
struct Construct {
  std::string name;
  std::string source;
  std::vector<Value> args;
};

const std::vector<Construct> &construct_matrix();

}  // namespace sparktrace::support
