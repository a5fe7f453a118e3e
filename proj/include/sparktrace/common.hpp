#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sparktrace {

// Base for every error raised by the pipeline stages.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Source location of an AST node: 1-based line/column, length in bytes.
struct Span {
  int line = 0;
  int column = 0;
  int length = 0;

  bool operator==(const Span &) const = default;
  auto operator<=>(const Span &) const = default;

  bool valid() const { return line > 0; }
  std::string str() const;
  static Span parse(std::string_view text);
};

enum class Tag : uint8_t { Int, Str, Bool, Null };

std::string_view tag_name(Tag t);
Tag tag_from_name(std::string_view name);

// Runtime value. Strings are byte strings.
struct Value {
  Tag tag = Tag::Null;
  int64_t num = 0;
  std::string str;

  static Value integer(int64_t v) { return {Tag::Int, v, {}}; }
  static Value boolean(bool b) { return {Tag::Bool, b ? 1 : 0, {}}; }
  static Value null() { return {}; }
  static Value string(std::string s) { return {Tag::Str, 0, std::move(s)}; }

  bool operator==(const Value &o) const {
    if (tag != o.tag)
      return false;
    switch (tag) {
    case Tag::Int:
    case Tag::Bool:
      return num == o.num;
    case Tag::Str:
      return str == o.str;
    case Tag::Null:
      return true;
    }
    return false;
  }

  bool truthy() const;
  std::string to_display() const;  // JS-style string conversion
  std::string debug() const;        // e.g. Int 3, Str "ab"

  // "<Tag> <payload>" with strings percent-encoded and quoted.
  std::string encode() const;
  static Value decode(std::string_view tag, std::string_view payload);
};

// Percent-encoding of arbitrary bytes; unreserved characters pass through.
std::string percent_encode(std::string_view bytes);
std::string percent_decode(std::string_view text);

// Quoted form used in line-oriented text files: "<percent-encoded>".
std::string quote_bytes(std::string_view bytes);
std::string unquote_bytes(std::string_view token);

std::vector<std::string> split_ws(std::string_view line);

inline constexpr std::size_t kDefaultMaxStringLen = 4096;
inline constexpr int kMaxCallDepth = 200;

}  // namespace sparktrace
