#include "agqr/tokenize.hpp"

#include <cstdint>

namespace agqr {
namespace {

struct CodePoint {
  char32_t value;
  std::size_t length;  // bytes consumed
};

// Lenient decoder: malformed sequences decode as a single byte.
CodePoint decode(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {b0, 1};
  }
  if (pos + len > s.size()) return {b0, 1};
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return {b0, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

bool is_space(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
           (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
  }
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
      return true;
    default:
      break;
  }
  return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011) ||
         (c >= 0xFF01 && c <= 0xFF0F);
}

void emit(std::string_view piece, std::vector<std::string>& out) {
  // Trim punctuation code points from both ends.
  std::size_t begin = 0;
  std::size_t end = piece.size();
  while (begin < end) {
    const CodePoint cp = decode(piece, begin);
    if (!is_punct(cp.value)) break;
    begin += cp.length;
  }
  while (end > begin) {
    // Walk back to the start of the last code point.
    std::size_t start = end - 1;
    while (start > begin && (static_cast<unsigned char>(piece[start]) & 0xC0) == 0x80) --start;
    const CodePoint cp = decode(piece, start);
    if (start + cp.length != end) {
      // Stray continuation bytes: treat the final byte as a word character.
      break;
    }
    if (!is_punct(cp.value)) break;
    end = start;
  }
  if (begin == end) return;
  std::string token(piece.substr(begin, end - begin));
  for (char& c : token) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  out.push_back(std::move(token));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t piece_start = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const CodePoint cp = decode(text, pos);
    if (is_space(cp.value)) {
      if (pos > piece_start) emit(text.substr(piece_start, pos - piece_start), tokens);
      piece_start = pos + cp.length;
    }
    pos += cp.length;
  }
  if (pos > piece_start) emit(text.substr(piece_start, pos - piece_start), tokens);
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace agqr
