#pragma once

// Tokenization shared by corpus word counting, BM25 indexing and answer
// matching. Words are whitespace-delimited with punctuation left attached;
// normalized tokens additionally lowercase and strip ASCII punctuation.

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dhr {

inline bool is_space_byte(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

/// Whitespace-delimited words, punctuation left attached.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    while (i < n && is_space_byte(text[i])) ++i;
    size_t start = i;
    while (i < n && !is_space_byte(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

inline size_t count_words(std::string_view text) {
  size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space_byte(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

/// Trim and collapse runs of whitespace to single spaces.
inline std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space_byte(c)) {
      if (!out.empty()) pending_space = true;
    } else {
      if (pending_space) {
        out.push_back(' ');
        pending_space = false;
      }
      out.push_back(c);
    }
  }
  return out;
}

/// Lowercase a token and strip ASCII punctuation. Bytes outside ASCII are
/// kept verbatim, so UTF-8 text passes through deterministically.
inline std::string normalize_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (char c : token) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u < 128 && std::ispunct(u)) continue;
    out.push_back(u < 128 ? static_cast<char>(std::tolower(u)) : c);
  }
  return out;
}

/// Normalized token sequence: lowercase, punctuation stripped, empty tokens
/// dropped (so whitespace is implicitly collapsed).
inline std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    while (i < n && is_space_byte(text[i])) ++i;
    size_t start = i;
    while (i < n && !is_space_byte(text[i])) ++i;
    if (i > start) {
      std::string norm = normalize_token(text.substr(start, i - start));
      if (!norm.empty()) out.push_back(std::move(norm));
    }
  }
  return out;
}

/// True iff `needle` occurs as a contiguous run inside `haystack`.
inline bool contains_subsequence(const std::vector<std::string>& haystack,
                                 const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  const size_t last = haystack.size() - needle.size();
  for (size_t i = 0; i <= last; ++i) {
    size_t j = 0;
    while (j < needle.size() && haystack[i + j] == needle[j]) ++j;
    if (j == needle.size()) return true;
  }
  return false;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

// --- seeded hashing -------------------------------------------------------

inline uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 14695981039346656037ull) {
  uint64_t h = seed;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Named sub-seed so every random stream hangs off the single run seed.
inline uint64_t sub_seed(uint64_t seed, std::string_view name) {
  return splitmix64(seed ^ fnv1a64(name));
}

}  // namespace dhr
