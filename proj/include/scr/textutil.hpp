#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace scr {

std::string trim(std::string_view s);

// Trim plus collapse of internal whitespace runs into single spaces.
std::string collapse_whitespace(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

// ASCII-only lowering; bytes >= 0x80 pass through untouched.
std::string to_lower_ascii(std::string_view s);

// Lowercased tokens split on whitespace and punctuation boundaries.
// Punctuation characters are separators, not tokens.
std::vector<std::string> word_tokenize(std::string_view text);

bool is_stopword(std::string_view lowercase_token);

}  // namespace scr
