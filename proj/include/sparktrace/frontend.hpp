#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sparktrace/common.hpp"

namespace sparktrace {

class ParseError : public Error {
public:
  ParseError(int line, int column, const std::string &message)
      : Error("parse error at " + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line(line), column(column), message(message) {}
  int line;
  int column;
  std::string message;
};

struct SourceProgram {
  std::string path;
  std::string text;
  std::vector<std::string> exports;  // filled by parse()
};

enum class NodeKind : uint8_t {
  Program,
  FunctionDecl,
  Param,
  Block,
  If,
  While,
  For,
  Return,
  Throw,
  TryCatch,
  ExprStmt,
  VarDecl,
  Assign,
  BinaryOp,
  UnaryOp,
  Call,
  MethodCall,
  Literal,
  Identifier,
  Index,
};

std::string_view node_kind_name(NodeKind k);

// Children layout per kind:
//   Program       functions...
//   FunctionDecl  text=name, params..., Block       (exported flag)
//   If            cond, then [, else]
//   While         cond, body
//   For           init, cond, update, body   (init/update may be empty Blocks)
//   Return        [expr]
//   Throw         expr
//   TryCatch      text=catch name, try Block, catch Block
//   VarDecl       text=name [, init]
//   Assign        text=name, expr
//   BinaryOp      text=op, lhs, rhs
//   UnaryOp       text=op, operand
//   Call          text=callee, args...
//   MethodCall    text=member, receiver, args...   (`s.length` has no args)
//   Index         object, index
//   Literal       value
struct AstNode {
  NodeKind kind = NodeKind::Program;
  std::string text;
  Value literal;
  bool exported = false;
  Span span;
  std::size_t offset = 0;  // byte offset of span start
  std::vector<AstNode> children;

  // Equality ignoring spans.
  bool same_structure(const AstNode &o) const;
};

AstNode parse(SourceProgram &source);
AstNode parse_text(const std::string &text);

// Reprints source that reparses to a structurally equal tree.
std::string pretty_print(const AstNode &program);

bool is_statement(NodeKind k);
bool is_string_member(const std::string &name);

enum class ParamType : uint8_t { String, Unknown };

struct ExportInfo {
  std::string name;
  int param_count = 0;
  std::vector<ParamType> param_types;
  std::vector<std::string> param_names;
};

std::vector<ExportInfo> list_exports(const AstNode &program);

}  // namespace sparktrace
