#include "sparktrace/common.hpp"

#include <charconv>

namespace sparktrace {

std::string Span::str() const {
  return std::to_string(line) + ":" + std::to_string(column) + "+" + std::to_string(length);
}

Span Span::parse(std::string_view text) {
  Span s;
  auto colon = text.find(':');
  auto plus = text.find('+');
  if (colon == std::string_view::npos || plus == std::string_view::npos || plus < colon)
    throw Error("malformed span '" + std::string(text) + "'");
  auto num = [&](std::string_view part) {
    int v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || p != part.data() + part.size())
      throw Error("malformed span '" + std::string(text) + "'");
    return v;
  };
  s.line = num(text.substr(0, colon));
  s.column = num(text.substr(colon + 1, plus - colon - 1));
  s.length = num(text.substr(plus + 1));
  return s;
}

std::string_view tag_name(Tag t) {
  switch (t) {
  case Tag::Int:
    return "Int";
  case Tag::Str:
    return "Str";
  case Tag::Bool:
    return "Bool";
  case Tag::Null:
    return "Null";
  }
  return "?";
}

Tag tag_from_name(std::string_view name) {
  if (name == "Int")
    return Tag::Int;
  if (name == "Str")
    return Tag::Str;
  if (name == "Bool")
    return Tag::Bool;
  if (name == "Null")
    return Tag::Null;
  throw Error("unknown value tag '" + std::string(name) + "'");
}

bool Value::truthy() const {
  switch (tag) {
  case Tag::Int:
  case Tag::Bool:
    return num != 0;
  case Tag::Str:
    return !str.empty();
  case Tag::Null:
    return false;
  }
  return false;
}

std::string Value::to_display() const {
  switch (tag) {
  case Tag::Int:
    return std::to_string(num);
  case Tag::Bool:
    return num ? "true" : "false";
  case Tag::Str:
    return str;
  case Tag::Null:
    return "null";
  }
  return {};
}

std::string Value::debug() const {
  switch (tag) {
  case Tag::Str:
    return "Str " + quote_bytes(str);
  case Tag::Null:
    return "Null";
  default:
    return std::string(tag_name(tag)) + " " + std::to_string(num);
  }
}

std::string Value::encode() const {
  switch (tag) {
  case Tag::Int:
  case Tag::Bool:
    return std::string(tag_name(tag)) + " " + std::to_string(num);
  case Tag::Str:
    return "Str " + quote_bytes(str);
  case Tag::Null:
    return "Null -";
  }
  return {};
}

Value Value::decode(std::string_view tag, std::string_view payload) {
  Tag t = tag_from_name(tag);
  switch (t) {
  case Tag::Int:
  case Tag::Bool: {
    int64_t v = 0;
    auto [p, ec] = std::from_chars(payload.data(), payload.data() + payload.size(), v);
    if (ec != std::errc() || p != payload.data() + payload.size())
      throw Error("malformed integer '" + std::string(payload) + "'");
    return t == Tag::Int ? integer(v) : boolean(v != 0);
  }
  case Tag::Str:
    return string(unquote_bytes(payload));
  case Tag::Null:
    return null();
  }
  return null();
}

namespace {
bool unreserved(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
         c == '_' || c == '.' || c == '~';
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9')
    return c - '0';
  if (c >= 'a' && c <= 'f')
    return c - 'a' + 10;
  if (c >= 'A' && c <= 'F')
    return c - 'A' + 10;
  return -1;
}
}  // namespace

std::string percent_encode(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(bytes.size());
  for (unsigned char c : bytes) {
    if (unreserved(c)) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

std::string percent_decode(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '%') {
      out.push_back(text[i]);
      continue;
    }
    int hi = i + 1 < text.size() ? hex_digit(text[i + 1]) : -1;
    int lo = i + 2 < text.size() ? hex_digit(text[i + 2]) : -1;
    if (hi < 0 || lo < 0)
      throw Error("bad percent escape in '" + std::string(text) + "'");
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 2;
  }
  return out;
}

std::string quote_bytes(std::string_view bytes) { return "\"" + percent_encode(bytes) + "\""; }

std::string unquote_bytes(std::string_view token) {
  if (token.size() < 2 || token.front() != '"' || token.back() != '"')
    throw Error("expected quoted string, got '" + std::string(token) + "'");
  return percent_decode(token.substr(1, token.size() - 2));
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
      ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r')
      ++i;
    if (i > start)
      out.emplace_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace sparktrace
