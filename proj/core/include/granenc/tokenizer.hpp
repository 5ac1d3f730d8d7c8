#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace granenc {

// A token with its location in the source text, both in bytes and in code
// points (SQuAD answer offsets count code points).
struct Token {
  std::string text;
  std::size_t byte_begin;
  std::size_t byte_end;
  std::size_t char_begin;
  std::size_t char_end;
};

// Splits on Unicode whitespace and emits every punctuation code point as a
// token of its own.
std::vector<Token> tokenize(std::string_view text);

std::vector<std::string> token_texts(const std::vector<Token>& tokens);

}  // namespace granenc
