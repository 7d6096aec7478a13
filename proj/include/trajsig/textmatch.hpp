// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trajsig {

/// Lowercase, NFC, punctuation and symbols replaced by spaces, whitespace
/// collapsed and trimmed. Idempotent.
std::string normalize(std::string_view text);

struct LexiconEntry {
  std::string phrase;     // normalized
  std::string phrase_id;  // stable across entry order; defaults to the phrase
};

struct Lexicon {
  std::string id;
  std::vector<LexiconEntry> entries;
  double tolerance = 0.2;
};

class LexiconError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds a lexicon from raw phrases. Phrases are normalized and deduplicated;
/// throws LexiconError on an empty phrase or a tolerance outside [0, 0.5].
Lexicon make_lexicon(std::string id, const std::vector<std::string>& phrases, double tolerance);

/// Reads the lexicon file format: `tolerance=<float>` header, `#` comments,
/// one phrase per line. The lexicon id is the file stem.
Lexicon parse_lexicon(std::string_view content, std::string id);
Lexicon load_lexicon(const std::filesystem::path& path);

struct MatchSpan {
  std::size_t message_index = 0;
  std::size_t char_start = 0;  // code point offsets into the normalized text
  std::size_t char_end = 0;
  std::string phrase_id;
  double distance = 0.0;  // edit distance / phrase length

  bool operator==(const MatchSpan&) const = default;
};

/// Finds lexicon phrases in an already-normalized haystack. Candidate windows
/// are whole-token runs; a window matches when its Levenshtein distance to a
/// phrase, divided by the phrase length, is within the lexicon tolerance.
/// Overlapping windows of one phrase keep the closest (then leftmost, then
/// longest); overlaps across phrases resolve leftmost-longest. Results are
/// ordered by char_start.
std::vector<MatchSpan> fuzzy_find(std::string_view haystack, const Lexicon& lex,
                                  std::size_t message_index = 0);

/// Token 3-shingle Jaccard similarity of two normalized strings. Inputs with
/// fewer than three tokens compare by exact token-sequence equality.
double near_duplicate(std::string_view a, std::string_view b);

/// Jaccard similarity over token sets; 0 when both are empty.
double token_jaccard(std::string_view a, std::string_view b);

std::vector<std::string> tokens(std::string_view normalized);

/// Levenshtein distance over code points.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view text);

/// First `max_chars` code points of `text`, with "..." appended when cut.
std::string excerpt(std::string_view text, std::size_t max_chars);

}  // namespace trajsig
