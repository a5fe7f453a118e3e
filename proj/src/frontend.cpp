#include "sparktrace/frontend.hpp"

#include <charconv>
#include <functional>
#include <set>

namespace sparktrace {

std::string_view node_kind_name(NodeKind k) {
  switch (k) {
  case NodeKind::Program: return "Program";
  case NodeKind::FunctionDecl: return "FunctionDecl";
  case NodeKind::Param: return "Param";
  case NodeKind::Block: return "Block";
  case NodeKind::If: return "If";
  case NodeKind::While: return "While";
  case NodeKind::For: return "For";
  case NodeKind::Return: return "Return";
  case NodeKind::Throw: return "Throw";
  case NodeKind::TryCatch: return "TryCatch";
  case NodeKind::ExprStmt: return "ExprStmt";
  case NodeKind::VarDecl: return "VarDecl";
  case NodeKind::Assign: return "Assign";
  case NodeKind::BinaryOp: return "BinaryOp";
  case NodeKind::UnaryOp: return "UnaryOp";
  case NodeKind::Call: return "Call";
  case NodeKind::MethodCall: return "MethodCall";
  case NodeKind::Literal: return "Literal";
  case NodeKind::Identifier: return "Identifier";
  case NodeKind::Index: return "Index";
  }
  return "?";
}

bool AstNode::same_structure(const AstNode &o) const {
  if (kind != o.kind || text != o.text || exported != o.exported || children.size() != o.children.size())
    return false;
  if (kind == NodeKind::Literal && !(literal == o.literal))
    return false;
  for (std::size_t i = 0; i < children.size(); ++i)
    if (!children[i].same_structure(o.children[i]))
      return false;
  return true;
}

bool is_statement(NodeKind k) {
  switch (k) {
  case NodeKind::If:
  case NodeKind::While:
  case NodeKind::For:
  case NodeKind::Return:
  case NodeKind::Throw:
  case NodeKind::TryCatch:
  case NodeKind::ExprStmt:
  case NodeKind::VarDecl:
    return true;
  default:
    return false;
  }
}

bool is_string_member(const std::string &name) {
  return name == "length" || name == "charAt" || name == "charCodeAt" || name == "indexOf" ||
         name == "substring" || name == "concat";
}

namespace {

enum class TokKind { Ident, Keyword, Number, String, Punct, End };

struct Token {
  TokKind kind = TokKind::End;
  std::string text;  // identifier/keyword/punct text, or decoded string literal
  int64_t number = 0;
  int line = 1;
  int column = 1;
  std::size_t offset = 0;
  std::size_t end = 0;
};

const std::set<std::string> kKeywords = {"function", "export", "var",  "if",    "else", "while", "for",
                                         "return",   "throw",  "try",  "catch", "true", "false", "null"};

class Lexer {
public:
  explicit Lexer(const std::string &text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = col_;
      t.offset = pos_;
      if (pos_ >= text_.size()) {
        t.kind = TokKind::End;
        t.end = pos_;
        out.push_back(t);
        return out;
      }
      char c = text_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$') {
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                       text_[pos_] == '_' || text_[pos_] == '$'))
          advance();
        t.text = text_.substr(t.offset, pos_ - t.offset);
        t.kind = kKeywords.count(t.text) ? TokKind::Keyword : TokKind::Ident;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
          advance();
        t.text = text_.substr(t.offset, pos_ - t.offset);
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
        if (ec != std::errc())
          throw ParseError(t.line, t.column, "integer literal out of range");
        t.kind = TokKind::Number;
      } else if (c == '"' || c == '\'') {
        t.kind = TokKind::String;
        t.text = lex_string(c, t);
      } else {
        static const char *kTwo[] = {"==", "!=", "<=", ">=", "&&", "||"};
        t.kind = TokKind::Punct;
        bool matched = false;
        for (const char *op : kTwo) {
          if (text_.compare(pos_, 2, op) == 0) {
            t.text = op;
            advance();
            advance();
            matched = true;
            break;
          }
        }
        if (!matched) {
          if (std::string("+-*/%<>!=(){}[];,.").find(c) == std::string::npos)
            throw ParseError(line_, col_, std::string("unexpected character '") + c + "'");
          t.text = std::string(1, c);
          advance();
        }
      }
      t.end = pos_;
      out.push_back(t);
    }
  }

private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n')
          advance();
      } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '*') {
        int l = line_, co = col_;
        advance();
        advance();
        while (pos_ + 1 < text_.size() && !(text_[pos_] == '*' && text_[pos_ + 1] == '/'))
          advance();
        if (pos_ + 1 >= text_.size())
          throw ParseError(l, co, "unterminated comment");
        advance();
        advance();
      } else {
        break;
      }
    }
  }

  std::string lex_string(char quote, const Token &t) {
    std::string out;
    advance();
    for (;;) {
      if (pos_ >= text_.size() || text_[pos_] == '\n')
        throw ParseError(t.line, t.column, "unterminated string literal");
      char c = text_[pos_];
      if (c == quote) {
        advance();
        return out;
      }
      if (c != '\\') {
        out.push_back(c);
        advance();
        continue;
      }
      advance();
      if (pos_ >= text_.size())
        throw ParseError(t.line, t.column, "unterminated string literal");
      char e = text_[pos_];
      advance();
      switch (e) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '0': out.push_back('\0'); break;
      case '\\': out.push_back('\\'); break;
      case '\'': out.push_back('\''); break;
      case '"': out.push_back('"'); break;
      case 'x': {
        auto hex = [&](char h) -> int {
          if (h >= '0' && h <= '9') return h - '0';
          if (h >= 'a' && h <= 'f') return h - 'a' + 10;
          if (h >= 'A' && h <= 'F') return h - 'A' + 10;
          return -1;
        };
        if (pos_ + 1 >= text_.size() || hex(text_[pos_]) < 0 || hex(text_[pos_ + 1]) < 0)
          throw ParseError(line_, col_, "bad \\x escape");
        out.push_back(static_cast<char>(hex(text_[pos_]) * 16 + hex(text_[pos_ + 1])));
        advance();
        advance();
        break;
      }
      default:
        throw ParseError(line_, col_, std::string("unknown escape '\\") + e + "'");
      }
    }
  }

  const std::string &text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  AstNode program() {
    AstNode prog;
    prog.kind = NodeKind::Program;
    while (peek().kind != TokKind::End)
      prog.children.push_back(function_decl());
    prog.span = {1, 1, static_cast<int>(toks_.back().offset)};
    return prog;
  }

private:
  const Token &peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token &prev() const { return toks_[pos_ - 1]; }
  const Token &take() { return toks_[pos_++]; }

  bool is_punct(const char *p) const { return peek().kind == TokKind::Punct && peek().text == p; }
  bool is_kw(const char *k) const { return peek().kind == TokKind::Keyword && peek().text == k; }

  [[noreturn]] void fail(const std::string &msg) const {
    const Token &t = peek();
    std::string near = t.kind == TokKind::End ? "end of input" : "'" + t.text + "'";
    throw ParseError(t.line, t.column, msg + " near " + near);
  }

  void expect_punct(const char *p) {
    if (!is_punct(p))
      fail(std::string("expected '") + p + "'");
    take();
  }

  std::string expect_ident() {
    if (peek().kind != TokKind::Ident)
      fail("expected identifier");
    return take().text;
  }

  static AstNode open(NodeKind kind, const Token &at) {
    AstNode n;
    n.kind = kind;
    n.span = {at.line, at.column, 0};
    n.offset = at.offset;
    return n;
  }

  static AstNode open_at(NodeKind kind, const AstNode &first) {
    AstNode n;
    n.kind = kind;
    n.span = {first.span.line, first.span.column, 0};
    n.offset = first.offset;
    return n;
  }

  AstNode close(AstNode n) const {
    n.span.length = static_cast<int>(prev().end - n.offset);
    return n;
  }

  AstNode function_decl() {
    AstNode fn = open(NodeKind::FunctionDecl, peek());
    if (is_kw("export")) {
      take();
      fn.exported = true;
    }
    if (!is_kw("function"))
      fail("expected function declaration");
    take();
    fn.text = expect_ident();
    expect_punct("(");
    if (!is_punct(")")) {
      for (;;) {
        AstNode p = open(NodeKind::Param, peek());
        p.text = expect_ident();
        fn.children.push_back(close(std::move(p)));
        if (!is_punct(","))
          break;
        take();
      }
    }
    expect_punct(")");
    fn.children.push_back(block());
    return close(std::move(fn));
  }

  AstNode block() {
    if (!is_punct("{"))
      fail("expected '{'");
    AstNode b = open(NodeKind::Block, take());
    while (!is_punct("}")) {
      if (peek().kind == TokKind::End)
        fail("expected '}'");
      b.children.push_back(statement());
    }
    take();
    return close(std::move(b));
  }

  AstNode empty_block() const { return open(NodeKind::Block, peek()); }

  AstNode statement() {
    if (is_punct("{"))
      return block();
    if (is_kw("var")) {
      AstNode v = var_decl();
      expect_punct(";");
      return close(std::move(v));
    }
    if (is_kw("if")) {
      AstNode n = open(NodeKind::If, take());
      expect_punct("(");
      n.children.push_back(expression());
      expect_punct(")");
      n.children.push_back(statement());
      if (is_kw("else")) {
        take();
        n.children.push_back(statement());
      }
      return close(std::move(n));
    }
    if (is_kw("while")) {
      AstNode n = open(NodeKind::While, take());
      expect_punct("(");
      n.children.push_back(expression());
      expect_punct(")");
      n.children.push_back(statement());
      return close(std::move(n));
    }
    if (is_kw("for"))
      return for_stmt();
    if (is_kw("return")) {
      AstNode n = open(NodeKind::Return, take());
      if (!is_punct(";"))
        n.children.push_back(expression());
      expect_punct(";");
      return close(std::move(n));
    }
    if (is_kw("throw")) {
      AstNode n = open(NodeKind::Throw, take());
      n.children.push_back(expression());
      expect_punct(";");
      return close(std::move(n));
    }
    if (is_kw("try")) {
      AstNode n = open(NodeKind::TryCatch, take());
      n.children.push_back(block());
      if (!is_kw("catch"))
        fail("expected 'catch'");
      take();
      expect_punct("(");
      n.text = expect_ident();
      expect_punct(")");
      n.children.push_back(block());
      return close(std::move(n));
    }
    if (is_kw("function") || is_kw("export"))
      fail("nested function declarations are not supported");
    AstNode e = expr_stmt();
    expect_punct(";");
    return close(std::move(e));
  }

  AstNode var_decl() {
    AstNode v = open(NodeKind::VarDecl, take());
    v.text = expect_ident();
    if (is_punct("=")) {
      take();
      v.children.push_back(expression());
    }
    return close(std::move(v));
  }

  AstNode expr_stmt() {
    AstNode s = open(NodeKind::ExprStmt, peek());
    if (peek().kind == TokKind::Ident && peek(1).kind == TokKind::Punct && peek(1).text == "=") {
      AstNode a = open(NodeKind::Assign, peek());
      a.text = take().text;
      take();
      a.children.push_back(expression());
      s.children.push_back(close(std::move(a)));
    } else {
      s.children.push_back(expression());
    }
    return close(std::move(s));
  }

  AstNode for_stmt() {
    AstNode n = open(NodeKind::For, take());
    expect_punct("(");
    if (is_punct(";"))
      n.children.push_back(empty_block());
    else if (is_kw("var"))
      n.children.push_back(var_decl());
    else
      n.children.push_back(expr_stmt());
    expect_punct(";");
    if (is_punct(";")) {
      AstNode t = open(NodeKind::Literal, peek());
      t.literal = Value::boolean(true);
      n.children.push_back(t);
    } else {
      n.children.push_back(expression());
    }
    expect_punct(";");
    if (is_punct(")"))
      n.children.push_back(empty_block());
    else
      n.children.push_back(expr_stmt());
    expect_punct(")");
    n.children.push_back(statement());
    return close(std::move(n));
  }

  AstNode expression() { return logical_or(); }

  using Level = AstNode (Parser::*)();

  AstNode left_assoc(std::initializer_list<const char *> ops, Level next) {
    AstNode lhs = (this->*next)();
    for (;;) {
      const char *hit = nullptr;
      for (const char *op : ops)
        if (is_punct(op))
          hit = op;
      if (!hit)
        return lhs;
      take();
      AstNode rhs = (this->*next)();
      AstNode n = open_at(NodeKind::BinaryOp, lhs);
      n.text = hit;
      n.children.push_back(std::move(lhs));
      n.children.push_back(std::move(rhs));
      lhs = close(std::move(n));
    }
  }

  AstNode logical_or() { return left_assoc({"||"}, &Parser::logical_and); }
  AstNode logical_and() { return left_assoc({"&&"}, &Parser::equality); }
  AstNode equality() { return left_assoc({"==", "!="}, &Parser::relational); }
  AstNode relational() { return left_assoc({"<", "<=", ">", ">="}, &Parser::additive); }
  AstNode additive() { return left_assoc({"+", "-"}, &Parser::multiplicative); }
  AstNode multiplicative() { return left_assoc({"*", "/", "%"}, &Parser::unary); }

  AstNode unary() {
    if (is_punct("!") || is_punct("-")) {
      AstNode n = open(NodeKind::UnaryOp, peek());
      n.text = take().text;
      n.children.push_back(unary());
      return close(std::move(n));
    }
    return postfix();
  }

  AstNode postfix() {
    AstNode e = primary();
    for (;;) {
      if (is_punct(".")) {
        take();
        AstNode m = open_at(NodeKind::MethodCall, e);
        m.text = expect_ident();
        m.children.push_back(std::move(e));
        if (is_punct("(")) {
          take();
          args_into(m);
        }
        e = close(std::move(m));
      } else if (is_punct("[")) {
        take();
        AstNode ix = open_at(NodeKind::Index, e);
        ix.children.push_back(std::move(e));
        ix.children.push_back(expression());
        expect_punct("]");
        e = close(std::move(ix));
      } else {
        return e;
      }
    }
  }

  void args_into(AstNode &n) {
    if (!is_punct(")")) {
      for (;;) {
        n.children.push_back(expression());
        if (!is_punct(","))
          break;
        take();
      }
    }
    expect_punct(")");
  }

  AstNode primary() {
    const Token &t = peek();
    switch (t.kind) {
    case TokKind::Number: {
      AstNode n = open(NodeKind::Literal, take());
      n.literal = Value::integer(t.number);
      return close(std::move(n));
    }
    case TokKind::String: {
      AstNode n = open(NodeKind::Literal, take());
      n.literal = Value::string(t.text);
      return close(std::move(n));
    }
    case TokKind::Keyword:
      if (t.text == "true" || t.text == "false" || t.text == "null") {
        AstNode n = open(NodeKind::Literal, take());
        n.literal = t.text == "null" ? Value::null() : Value::boolean(t.text == "true");
        return close(std::move(n));
      }
      fail("unexpected keyword");
    case TokKind::Ident: {
      if (peek(1).kind == TokKind::Punct && peek(1).text == "(") {
        AstNode n = open(NodeKind::Call, take());
        n.text = t.text;
        take();
        args_into(n);
        return close(std::move(n));
      }
      AstNode n = open(NodeKind::Identifier, take());
      n.text = t.text;
      return close(std::move(n));
    }
    case TokKind::Punct:
      if (t.text == "(") {
        take();
        AstNode e = expression();
        expect_punct(")");
        return e;
      }
      fail("unexpected token");
    case TokKind::End:
      break;
    }
    fail("unexpected end of input");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// Printing --------------------------------------------------------------

std::string literal_source(const Value &v) {
  switch (v.tag) {
  case Tag::Int:
    return std::to_string(v.num);
  case Tag::Bool:
    return v.num ? "true" : "false";
  case Tag::Null:
    return "null";
  case Tag::Str: {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out = "\"";
    for (unsigned char c : v.str) {
      if (c == '"' || c == '\\') {
        out.push_back('\\');
        out.push_back(static_cast<char>(c));
      } else if (c >= 0x20 && c < 0x7f) {
        out.push_back(static_cast<char>(c));
      } else {
        out += "\\x";
        out.push_back(kHex[c >> 4]);
        out.push_back(kHex[c & 15]);
      }
    }
    return out + "\"";
  }
  }
  return {};
}

class Printer {
public:
  std::string out;

  void program(const AstNode &p) {
    for (const AstNode &fn : p.children) {
      if (fn.exported)
        out += "export ";
      out += "function " + fn.text + "(";
      for (std::size_t i = 0; i + 1 < fn.children.size(); ++i) {
        if (i)
          out += ", ";
        out += fn.children[i].text;
      }
      out += ") ";
      stmt(fn.children.back(), 0);
      out += "\n";
    }
  }

private:
  void indent(int depth) { out.append(static_cast<std::size_t>(depth) * 2, ' '); }

  void stmt(const AstNode &n, int depth) {
    switch (n.kind) {
    case NodeKind::Block:
      out += "{\n";
      for (const AstNode &c : n.children) {
        indent(depth + 1);
        stmt(c, depth + 1);
        out += "\n";
      }
      indent(depth);
      out += "}";
      break;
    case NodeKind::VarDecl:
      simple(n);
      out += ";";
      break;
    case NodeKind::ExprStmt:
      simple(n);
      out += ";";
      break;
    case NodeKind::If:
      out += "if (" + expr(n.children[0]) + ") ";
      stmt(n.children[1], depth);
      if (n.children.size() > 2) {
        out += " else ";
        stmt(n.children[2], depth);
      }
      break;
    case NodeKind::While:
      out += "while (" + expr(n.children[0]) + ") ";
      stmt(n.children[1], depth);
      break;
    case NodeKind::For: {
      out += "for (";
      if (n.children[0].kind != NodeKind::Block)
        simple(n.children[0]);
      out += "; " + expr(n.children[1]) + "; ";
      if (n.children[2].kind != NodeKind::Block)
        simple(n.children[2]);
      out += ") ";
      stmt(n.children[3], depth);
      break;
    }
    case NodeKind::Return:
      out += n.children.empty() ? "return;" : "return " + expr(n.children[0]) + ";";
      break;
    case NodeKind::Throw:
      out += "throw " + expr(n.children[0]) + ";";
      break;
    case NodeKind::TryCatch:
      out += "try ";
      stmt(n.children[0], depth);
      out += " catch (" + n.text + ") ";
      stmt(n.children[1], depth);
      break;
    default:
      out += expr(n) + ";";
      break;
    }
  }

  // VarDecl or ExprStmt without the trailing ';'.
  void simple(const AstNode &n) {
    if (n.kind == NodeKind::VarDecl) {
      out += "var " + n.text;
      if (!n.children.empty())
        out += " = " + expr(n.children[0]);
      return;
    }
    const AstNode &e = n.children[0];
    if (e.kind == NodeKind::Assign)
      out += e.text + " = " + expr(e.children[0]);
    else
      out += expr(e);
  }

  std::string expr(const AstNode &n) {
    switch (n.kind) {
    case NodeKind::Literal:
      return literal_source(n.literal);
    case NodeKind::Identifier:
      return n.text;
    case NodeKind::BinaryOp:
      return "(" + expr(n.children[0]) + " " + n.text + " " + expr(n.children[1]) + ")";
    case NodeKind::UnaryOp:
      return "(" + n.text + expr(n.children[0]) + ")";
    case NodeKind::Call:
      return n.text + "(" + args(n, 0) + ")";
    case NodeKind::MethodCall:
      if (n.children.size() == 1 && n.text == "length")
        return expr(n.children[0]) + ".length";
      return expr(n.children[0]) + "." + n.text + "(" + args(n, 1) + ")";
    case NodeKind::Index:
      return expr(n.children[0]) + "[" + expr(n.children[1]) + "]";
    default:
      return "/*" + std::string(node_kind_name(n.kind)) + "*/";
    }
  }

  std::string args(const AstNode &n, std::size_t from) {
    std::string s;
    for (std::size_t i = from; i < n.children.size(); ++i) {
      if (i > from)
        s += ", ";
      s += expr(n.children[i]);
    }
    return s;
  }
};

// Parameter type inference --------------------------------------------

void collect_string_uses(const AstNode &n, std::set<std::string> &names) {
  if (n.kind == NodeKind::MethodCall && is_string_member(n.text)) {
    if (n.children[0].kind == NodeKind::Identifier)
      names.insert(n.children[0].text);
    if ((n.text == "concat" || n.text == "indexOf") && n.children.size() > 1 &&
        n.children[1].kind == NodeKind::Identifier)
      names.insert(n.children[1].text);
  }
  if (n.kind == NodeKind::Index && n.children[0].kind == NodeKind::Identifier)
    names.insert(n.children[0].text);
  for (const AstNode &c : n.children)
    collect_string_uses(c, names);
}

}  // namespace

AstNode parse(SourceProgram &source) {
  AstNode prog = Parser(Lexer(source.text).run()).program();
  source.exports.clear();
  std::set<std::string> seen;
  for (const AstNode &fn : prog.children) {
    if (!seen.insert(fn.text).second)
      throw ParseError(fn.span.line, fn.span.column, "duplicate function '" + fn.text + "'");
    if (fn.exported)
      source.exports.push_back(fn.text);
  }
  return prog;
}

AstNode parse_text(const std::string &text) {
  SourceProgram src{"<text>", text, {}};
  return parse(src);
}

std::string pretty_print(const AstNode &program) {
  Printer p;
  p.program(program);
  return p.out;
}

std::vector<ExportInfo> list_exports(const AstNode &program) {
  std::vector<ExportInfo> out;
  for (const AstNode &fn : program.children) {
    if (fn.kind != NodeKind::FunctionDecl || !fn.exported)
      continue;
    std::set<std::string> uses;
    collect_string_uses(fn.children.back(), uses);
    ExportInfo info;
    info.name = fn.text;
    for (std::size_t i = 0; i + 1 < fn.children.size(); ++i) {
      const std::string &p = fn.children[i].text;
      info.param_names.push_back(p);
      info.param_types.push_back(uses.count(p) ? ParamType::String : ParamType::Unknown);
    }
    info.param_count = static_cast<int>(info.param_names.size());
    out.push_back(std::move(info));
  }
  return out;
}

}  // namespace sparktrace
