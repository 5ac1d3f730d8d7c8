#include "granenc/tokenizer.hpp"

#include "granenc/unicode.hpp"

namespace granenc {

std::vector<Token> tokenize(std::string_view text) {
  const auto cps = unicode::decode(text);
  std::vector<Token> out;
  std::size_t start = 0;
  bool open = false;
  auto close = [&](std::size_t end) {
    if (!open) return;
    const std::size_t b = cps[start].byte_begin;
    const std::size_t e = cps[end - 1].byte_end;
    out.push_back({std::string(text.substr(b, e - b)), b, e, start, end});
    open = false;
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t cp = cps[i].value;
    if (unicode::is_whitespace(cp)) {
      close(i);
    } else if (unicode::is_punctuation(cp)) {
      close(i);
      const std::size_t b = cps[i].byte_begin;
      const std::size_t e = cps[i].byte_end;
      out.push_back({std::string(text.substr(b, e - b)), b, e, i, i + 1});
    } else if (!open) {
      open = true;
      start = i;
    }
  }
  close(cps.size());
  return out;
}

std::vector<std::string> token_texts(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const Token& t : tokens) out.push_back(t.text);
  return out;
}

}  // namespace granenc
