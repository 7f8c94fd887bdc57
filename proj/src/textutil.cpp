#include "scr/textutil.hpp"

#include <cctype>
#include <unordered_set>

namespace scr {
namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

const std::unordered_set<std::string>& stopword_set() {
  static const std::unordered_set<std::string> words = {
      "a",    "an",   "and",  "are",  "as",   "at",    "be",    "but",  "by",
      "for",  "from", "had",  "has",  "have", "he",    "her",   "his",  "i",
      "if",   "in",   "into", "is",   "it",   "its",   "not",   "of",   "on",
      "or",   "s",    "she",  "so",   "t",    "that",  "the",   "their",
      "then", "there", "they", "this", "to",  "was",   "we",    "were", "while",
      "will", "with", "you"};
  return words;
}

}  // namespace

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = true;  // leading whitespace dropped
  for (const char ch : s) {
    if (is_space(static_cast<unsigned char>(ch))) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(ch);
      in_space = false;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(static_cast<unsigned char>(s[i]))) ++i;
    const size_t start = i;
    while (i < s.size() && !is_space(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (is_space(u) || is_punct(u)) {
      if (!cur.empty()) {
        out.push_back(to_lower_ascii(cur));
        cur.clear();
      }
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(to_lower_ascii(cur));
  return out;
}

bool is_stopword(std::string_view lowercase_token) {
  return stopword_set().count(std::string(lowercase_token)) > 0;
}

}  // namespace scr
