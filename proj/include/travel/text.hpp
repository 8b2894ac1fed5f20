#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Small text helpers shared by extraction, detection and postprocessing.
// Everything is byte-oriented UTF-8; only ASCII is case-folded.
namespace travel::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string collapse_whitespace(std::string_view s);
bool is_blank(std::string_view s);

// Replaces typographic apostrophes (U+2019) with '\''.
std::string normalize_apostrophes(std::string_view s);

struct Word {
  std::string lower;   // ASCII-lowercased token
  std::size_t begin;   // byte offset into the source text
  std::size_t end;     // one past the last byte
  bool capitalized;    // first character is an ASCII uppercase letter
};

// Splits into maximal runs of letters, digits, apostrophes and hyphens.
// Non-ASCII bytes are treated as letters so that non-Latin words survive.
std::vector<Word> words(std::string_view s);

struct CharCounts {
  std::size_t alphabetic = 0;      // code points: ASCII letters or any non-ASCII
  std::size_t non_whitespace = 0;  // code points that are not ASCII whitespace
};
CharCounts count_chars(std::string_view s);

// Length in bytes of the longest common substring.
std::size_t longest_common_substring(std::string_view a, std::string_view b);

// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view s);

// Largest prefix length <= max_bytes that does not split a code point.
std::size_t utf8_floor(std::string_view s, std::size_t max_bytes);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Replaces every "{key}" occurrence.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace travel::text
