// SPDX-License-Identifier: Apache-2.0
#include "trajsig/textmatch.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

namespace trajsig {

namespace {

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw std::runtime_error("ICU NFC normalizer unavailable");
  return *n;
}

bool is_word_code_point(UChar32 c) {
  return (U_GET_GC_MASK(c) & (U_GC_L_MASK | U_GC_N_MASK | U_GC_M_MASK)) != 0;
}

struct TokenSpan {
  std::size_t start;
  std::size_t end;
};

std::vector<TokenSpan> token_spans(std::u32string_view s) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == U' ') ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && s[j] != U' ') ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

// Banded Levenshtein that gives up once every cell in a row exceeds `limit`.
std::size_t bounded_levenshtein(std::u32string_view a, std::u32string_view b, std::size_t limit) {
  const std::size_t n = a.size(), m = b.size();
  const std::size_t diff = n > m ? n - m : m - n;
  if (diff > limit) return limit + 1;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    std::size_t row_min = cur[0];
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min > limit) return limit + 1;
    std::swap(prev, cur);
  }
  return prev[m];
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::u32string to_u32(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  const auto* s = reinterpret_cast<const uint8_t*>(utf8.data());
  const auto length = static_cast<int32_t>(utf8.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    out.push_back(c < 0 ? U'\uFFFD' : static_cast<char32_t>(c));
  }
  return out;
}

std::string to_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) {
    uint8_t buf[U8_MAX_LENGTH];
    int32_t len = 0;
    UBool error = false;
    U8_APPEND(buf, len, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
    if (error) {
      out += "\xEF\xBF\xBD";
    } else {
      out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
    }
  }
  return out;
}

std::string normalize(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  us.toLower(icu::Locale::getRoot());
  us = nfc().normalize(us, status);
  if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");

  icu::UnicodeString filtered;
  bool pending_space = false;
  for (int32_t i = 0; i < us.length();) {
    const UChar32 c = us.char32At(i);
    i += U16_LENGTH(c);
    if (is_word_code_point(c)) {
      if (pending_space && !filtered.isEmpty()) filtered.append(static_cast<UChar>(u' '));
      pending_space = false;
      filtered.append(c);
    } else {
      pending_space = true;
    }
  }
  filtered = nfc().normalize(filtered, status);
  if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");
  std::string out;
  filtered.toUTF8String(out);
  return out;
}

Lexicon make_lexicon(std::string id, const std::vector<std::string>& phrases, double tolerance) {
  if (!(tolerance >= 0.0 && tolerance <= 0.5))
    throw LexiconError("lexicon '" + id + "': tolerance must lie in [0, 0.5]");
  Lexicon lex;
  lex.id = std::move(id);
  lex.tolerance = tolerance;
  std::set<std::string> seen;
  for (const auto& raw : phrases) {
    auto phrase = normalize(raw);
    if (phrase.empty())
      throw LexiconError("lexicon '" + lex.id + "': phrase '" + raw + "' is empty after normalization");
    if (seen.insert(phrase).second) lex.entries.push_back({phrase, phrase});
  }
  return lex;
}

Lexicon parse_lexicon(std::string_view content, std::string id) {
  std::istringstream in{std::string(content)};
  std::string line;
  std::vector<std::string> phrases;
  double tolerance = 0.2;
  bool saw_header = false;
  while (std::getline(in, line)) {
    const auto stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    if (!saw_header && stripped.rfind("tolerance=", 0) == 0) {
      try {
        tolerance = std::stod(stripped.substr(10));
      } catch (const std::exception&) {
        throw LexiconError("lexicon '" + id + "': bad tolerance header '" + stripped + "'");
      }
      saw_header = true;
      continue;
    }
    phrases.push_back(stripped);
  }
  if (!saw_header) throw LexiconError("lexicon '" + id + "': missing tolerance= header");
  return make_lexicon(std::move(id), phrases, tolerance);
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LexiconError("cannot read lexicon " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_lexicon(buf.str(), path.stem().string());
}

std::vector<MatchSpan> fuzzy_find(std::string_view haystack, const Lexicon& lex,
                                  std::size_t message_index) {
  const auto hay = to_u32(haystack);
  const auto spans = token_spans(hay);
  std::vector<MatchSpan> candidates;

  for (const auto& entry : lex.entries) {
    std::vector<MatchSpan> own;
    const auto phrase = to_u32(entry.phrase);
    const std::size_t plen = phrase.size();
    if (plen == 0) continue;
    const auto max_edits =
        static_cast<std::size_t>(lex.tolerance * static_cast<double>(plen) + 1e-9);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      for (std::size_t j = i; j < spans.size(); ++j) {
        const std::size_t wlen = spans[j].end - spans[i].start;
        if (wlen + max_edits < plen) continue;
        if (wlen > plen + max_edits) break;
        const auto window = std::u32string_view(hay).substr(spans[i].start, wlen);
        const std::size_t d = bounded_levenshtein(window, phrase, max_edits);
        if (d > max_edits) continue;
        const double distance = static_cast<double>(d) / static_cast<double>(plen);
        if (distance > lex.tolerance + 1e-12) continue;
        own.push_back({message_index, spans[i].start, spans[j].end, entry.phrase_id, distance});
      }
    }
    // Overlapping windows of one phrase collapse to the closest one, so a
    // neighbouring word is not absorbed into an otherwise exact hit.
    std::sort(own.begin(), own.end(), [](const MatchSpan& a, const MatchSpan& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      if (a.char_start != b.char_start) return a.char_start < b.char_start;
      return a.char_end > b.char_end;
    });
    std::vector<MatchSpan> kept;
    for (auto& c : own) {
      const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const MatchSpan& k) {
        return c.char_start < k.char_end && k.char_start < c.char_end;
      });
      if (!overlaps) kept.push_back(std::move(c));
    }
    candidates.insert(candidates.end(), kept.begin(), kept.end());
  }

  std::sort(candidates.begin(), candidates.end(), [](const MatchSpan& a, const MatchSpan& b) {
    if (a.char_start != b.char_start) return a.char_start < b.char_start;
    if (a.char_end != b.char_end) return a.char_end > b.char_end;
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.phrase_id < b.phrase_id;
  });

  std::vector<MatchSpan> out;
  std::size_t covered_until = 0;
  for (auto& c : candidates) {
    if (!out.empty() && c.char_start < covered_until) continue;
    covered_until = c.char_end;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::string> tokens(std::string_view normalized) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < normalized.size()) {
    while (i < normalized.size() && normalized[i] == ' ') ++i;
    if (i >= normalized.size()) break;
    const auto j = std::min(normalized.find(' ', i), normalized.size());
    out.emplace_back(normalized.substr(i, j - i));
    i = j;
  }
  return out;
}

double near_duplicate(std::string_view a, std::string_view b) {
  const auto ta = tokens(a), tb = tokens(b);
  if (ta.size() < 3 || tb.size() < 3) return ta == tb ? 1.0 : 0.0;
  auto shingles = [](const std::vector<std::string>& t) {
    std::set<std::string> out;
    for (std::size_t i = 0; i + 2 < t.size(); ++i) out.insert(t[i] + ' ' + t[i + 1] + ' ' + t[i + 2]);
    return out;
  };
  const auto sa = shingles(ta), sb = shingles(tb);
  std::size_t shared = 0;
  for (const auto& s : sa) shared += sb.count(s);
  const std::size_t uni = sa.size() + sb.size() - shared;
  return static_cast<double>(shared) / static_cast<double>(uni);
}

double token_jaccard(std::string_view a, std::string_view b) {
  const auto va = tokens(a), vb = tokens(b);
  const std::set<std::string> sa(va.begin(), va.end()), sb(vb.begin(), vb.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t shared = 0;
  for (const auto& s : sa) shared += sb.count(s);
  return static_cast<double>(shared) / static_cast<double>(sa.size() + sb.size() - shared);
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  return bounded_levenshtein(a, b, std::max(a.size(), b.size()));
}

std::string excerpt(std::string_view text, std::size_t max_chars) {
  const auto u = to_u32(text);
  if (u.size() <= max_chars) return std::string(text);
  return to_utf8(std::u32string_view(u).substr(0, max_chars)) + "...";
}

}  // namespace trajsig
