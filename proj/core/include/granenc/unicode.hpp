#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace granenc::unicode {

// One decoded code point with its byte span in the source string.
struct CodePoint {
  char32_t value;
  std::size_t byte_begin;
  std::size_t byte_end;
};

// Lenient UTF-8 decoding: invalid bytes decode to U+FFFD, one byte each.
std::vector<CodePoint> decode(std::string_view utf8);
void append_utf8(std::string& out, char32_t cp);

bool is_punctuation(char32_t cp);  // general category P*
bool is_whitespace(char32_t cp);   // Python str.isspace()
bool is_word_char(char32_t cp);    // Python \w: alphanumeric or underscore
char32_t to_lower(char32_t cp);    // single-code-point lowercase mapping

std::string to_lower(std::string_view utf8);

}  // namespace granenc::unicode
