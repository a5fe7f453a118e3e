#include "assembler.hpp"

#include <sstream>

namespace sparktrace::support {

namespace {

Value parse_constant(const std::string &text) {
  if (text == "null")
    return Value::null();
  if (text == "true" || text == "false")
    return Value::boolean(text == "true");
  if (!text.empty() && text.front() == '"')
    return Value::string(unquote_bytes(text));
  return Value::integer(std::stoll(text));
}

std::string trim(const std::string &s) {
  auto b = s.find_first_not_of(' ');
  auto e = s.find_last_not_of(' ');
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

BytecodeFunction assemble(const std::string &listing, const std::string &name, int param_count, int frame_size) {
  BytecodeFunction fn;
  fn.name = name;
  fn.param_count = param_count;
  fn.frame_size = frame_size;
  std::istringstream in(listing);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty())
      continue;
    Span span;
    auto semi = line.find("  ; ");
    if (semi != std::string::npos) {
      span = Span::parse(trim(line.substr(semi + 4)));
      line.resize(semi);
    }
    auto colon = line.find(": ");
    if (colon == std::string::npos || std::stoul(line.substr(0, colon)) != fn.code.size())
      throw Error("assemble: bad line '" + line + "'");
    std::string rest = line.substr(colon + 2);
    auto space = rest.find(' ');
    std::string mnemonic = rest.substr(0, space);
    auto op = op_from_name(mnemonic);
    if (!op)
      throw Error("assemble: unknown op '" + mnemonic + "'");
    Bytecode bc{*op, {}};
    std::vector<std::string> fields;
    if (space != std::string::npos) {
      std::string ops = rest.substr(space + 1);
      std::size_t start = 0;
      int depth = 0;
      for (std::size_t i = 0; i <= ops.size(); ++i) {
        if (i < ops.size() && ops[i] == '(')
          ++depth;
        if (i < ops.size() && ops[i] == ')')
          --depth;
        if (i == ops.size() || (ops[i] == ',' && depth == 0)) {
          fields.push_back(trim(ops.substr(start, i - start)));
          start = i + 1;
        }
      }
    }
    if (fields.size() != op_operands(*op).size())
      throw Error("assemble: wrong operand count in '" + line + "'");
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const std::string &f = fields[k];
      if (op_operands(*op)[k] == OperandKind::Count) {
        bc.operands[k] = std::stoi(f);
        continue;
      }
      bc.operands[k] = std::stoi(f.substr(1));
      if (f[0] == '#') {
        auto open = f.find('(');
        auto index = static_cast<std::size_t>(bc.operands[k]);
        if (fn.constants.size() <= index)
          fn.constants.resize(index + 1);
        fn.constants[index] = parse_constant(f.substr(open + 1, f.size() - open - 2));
      }
    }
    fn.code.push_back(bc);
    fn.statement_map.push_back(span);
  }
  return fn;
}

}  // namespace sparktrace::support
