#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace agqr {

/// Word-level tokenizer shared by documents, queries and rewrites.
///
/// Lowercases ASCII letters, splits on Unicode whitespace, strips leading and
/// trailing punctuation (ASCII and the common Unicode punctuation blocks) from
/// each piece and drops pieces that end up empty. Internal punctuation such as
/// hyphens and apostrophes is kept, so "self-driving" stays one token.
/// Invalid UTF-8 bytes are treated as ordinary word characters.
std::vector<std::string> tokenize(std::string_view text);

/// Joins tokens with single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace agqr
