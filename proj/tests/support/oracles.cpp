// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <tuple>

namespace trajsig::oracle {

namespace {

std::u32string decode(const std::string& s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += len;
  }
  return out;
}

struct Tok {
  std::size_t start, end;  // code points
};

std::vector<Tok> split(const std::u32string& s) {
  std::vector<Tok> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == U' ') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && s[j] != U' ') ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool overlap(const MatchSpan& a, const MatchSpan& b) { return a.char_start < b.char_end && b.char_start < a.char_end; }

// Binomial pmf via logs.
double log_choose(std::size_t n, std::size_t k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double upper_tail(std::size_t k, std::size_t n, double p) {  // P(X >= k)
  double s = 0;
  for (std::size_t i = k; i <= n; ++i)
    s += std::exp(log_choose(n, i) + i * std::log(p) + (n - i) * std::log1p(-p));
  return s;
}

double lower_tail(std::size_t k, std::size_t n, double p) {  // P(X <= k)
  double s = 0;
  for (std::size_t i = 0; i <= k; ++i)
    s += std::exp(log_choose(n, i) + i * std::log(p) + (n - i) * std::log1p(-p));
  return s;
}

}  // namespace

std::size_t levenshtein_dp(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

std::vector<MatchSpan> fuzzy_find(const std::string& normalized, const Lexicon& lex, std::size_t message_index) {
  const auto hay = decode(normalized);
  const auto toks = split(hay);
  std::vector<MatchSpan> all;
  for (const auto& e : lex.entries) {
    const auto phrase = decode(e.phrase);
    std::vector<MatchSpan> mine;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      for (std::size_t j = i; j < toks.size(); ++j) {
        const auto window = hay.substr(toks[i].start, toks[j].end - toks[i].start);
        const double dist = static_cast<double>(levenshtein_dp(window, phrase)) / phrase.size();
        if (dist <= lex.tolerance + 1e-12) mine.push_back({message_index, toks[i].start, toks[j].end, e.phrase_id, dist});
      }
    }
    std::sort(mine.begin(), mine.end(), [](const MatchSpan& a, const MatchSpan& b) {
      return std::make_tuple(a.distance, a.char_start, -static_cast<long long>(a.char_end)) <
             std::make_tuple(b.distance, b.char_start, -static_cast<long long>(b.char_end));
    });
    std::vector<MatchSpan> kept;
    for (const auto& m : mine)
      if (std::none_of(kept.begin(), kept.end(), [&](const MatchSpan& k) { return overlap(k, m); })) kept.push_back(m);
    all.insert(all.end(), kept.begin(), kept.end());
  }
  std::sort(all.begin(), all.end(), [](const MatchSpan& a, const MatchSpan& b) {
    return std::make_tuple(a.char_start, -static_cast<long long>(a.char_end), a.distance, a.phrase_id) <
           std::make_tuple(b.char_start, -static_cast<long long>(b.char_end), b.distance, b.phrase_id);
  });
  std::vector<MatchSpan> out;
  for (const auto& m : all)
    if (std::none_of(out.begin(), out.end(), [&](const MatchSpan& k) { return overlap(k, m); })) out.push_back(m);
  return out;
}

std::vector<LoopRun> loop_runs(const std::vector<CallView>& calls, const ExecutionConfig& cfg) {
  const std::size_t n = calls.size();
  struct Win {
    std::size_t i, j;
    std::string_view kind;
    std::size_t period;
    std::string key;
  };
  std::vector<Win> wins;

  auto differing_keys = [](const nlohmann::json& a, const nlohmann::json& b) -> std::optional<std::set<std::string>> {
    if (!a.is_object() || !b.is_object()) return std::nullopt;
    std::set<std::string> ka, kb, diff;
    for (auto it = a.begin(); it != a.end(); ++it) ka.insert(it.key());
    for (auto it = b.begin(); it != b.end(); ++it) kb.insert(it.key());
    if (ka != kb) return std::nullopt;
    for (const auto& k : ka)
      if (a[k] != b[k]) diff.insert(k);
    return diff;
  };

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t len = j - i + 1;

      bool same = true;
      for (std::size_t k = i; k <= j; ++k)
        same = same && calls[k].tool_name == calls[i].tool_name && calls[k].arguments == calls[i].arguments;
      if (same && len >= cfg.identical_retry_min) wins.push_back({i, j, subkind::kIdenticalRetry, 0, {}});

      std::optional<std::string> key;
      bool drift = true;
      for (std::size_t k = i; k < j && drift; ++k) {
        if (calls[k].tool_name != calls[k + 1].tool_name) {
          drift = false;
          break;
        }
        const auto d = differing_keys(calls[k].arguments, calls[k + 1].arguments);
        if (!d || d->size() != 1) {
          drift = false;
          break;
        }
        if (key && *key != *d->begin()) drift = false;
        key = *d->begin();
      }
      if (drift && len >= cfg.drift_min_run) wins.push_back({i, j, subkind::kParameterDrift, 0, *key});

      for (std::size_t p = 2; p <= cfg.cycle_period_max; ++p) {
        if (len < p * cfg.cycle_repeats_min) continue;
        bool periodic = true;
        for (std::size_t k = i; k + p <= j; ++k) periodic = periodic && calls[k].tool_name == calls[k + p].tool_name;
        if (!periodic) continue;
        // Primitive: the block is not a repetition of a shorter block.
        std::vector<std::string> block;
        for (std::size_t k = i; k < i + p; ++k) block.push_back(calls[k].tool_name);
        bool primitive = true;
        for (std::size_t d = 1; d < p; ++d) {
          if (p % d) continue;
          bool rep = true;
          for (std::size_t k = 0; k < p; ++k) rep = rep && block[k] == block[k % d];
          if (rep) primitive = false;
        }
        if (primitive) wins.push_back({i, j, subkind::kMultiToolCycle, p, {}});
      }
    }
  }

  std::vector<LoopRun> out;
  for (const auto& w : wins) {
    bool contained = false;
    for (const auto& o : wins) {
      if (&o == &w || o.kind != w.kind || o.period != w.period || o.key != w.key) continue;
      if (o.i <= w.i && w.j <= o.j && (o.i != w.i || o.j != w.j)) contained = true;
    }
    if (!contained) out.push_back({w.kind, w.i, w.j, w.period, w.key});
  }
  return out;
}

stats::Interval clopper_pearson(std::size_t k, std::size_t n, double alpha) {
  stats::Interval iv{0.0, 1.0};
  if (k > 0) {
    double lo = 0, hi = 1;
    for (int it = 0; it < 200; ++it) {
      const double mid = (lo + hi) / 2;
      (upper_tail(k, n, mid) < alpha / 2 ? lo : hi) = mid;
    }
    iv.lo = (lo + hi) / 2;
  }
  if (k < n) {
    double lo = 0, hi = 1;
    for (int it = 0; it < 200; ++it) {
      const double mid = (lo + hi) / 2;
      (lower_tail(k, n, mid) > alpha / 2 ? lo : hi) = mid;
    }
    iv.hi = (lo + hi) / 2;
  }
  return iv;
}

double fisher_two_sided(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  const std::size_t r1 = a + b, r2 = c + d, c1 = a + c, n = r1 + r2;
  auto prob = [&](std::size_t x) {
    return std::exp(log_choose(r1, x) + log_choose(r2, c1 - x) - log_choose(n, c1));
  };
  const double observed = prob(a);
  double p = 0;
  const std::size_t lo = c1 > r2 ? c1 - r2 : 0, hi = std::min(r1, c1);
  for (std::size_t x = lo; x <= hi; ++x) {
    const double px = prob(x);
    if (px <= observed * (1 + 1e-9)) p += px;
  }
  return std::min(p, 1.0);
}

double gwet_ac1(const std::vector<std::vector<std::size_t>>& ratings, std::size_t q) {
  const double n = ratings.size();
  double pa = 0;
  std::vector<double> pi(q, 0.0);
  for (const auto& row : ratings) {
    const double r = row.size();
    std::vector<double> cnt(q, 0.0);
    for (auto c : row) cnt[c] += 1;
    double agree = 0;
    for (std::size_t k = 0; k < q; ++k) {
      agree += cnt[k] * (cnt[k] - 1);
      pi[k] += cnt[k] / r / n;
    }
    pa += agree / (r * (r - 1)) / n;
  }
  double pe = 0;
  for (double p : pi) pe += p * (1 - p);
  pe /= (q - 1.0);
  return (pa - pe) / (1 - pe);
}

double fleiss_kappa(const std::vector<std::vector<std::size_t>>& ratings, std::size_t q) {
  const double n = ratings.size();
  double pbar = 0;
  std::vector<double> pj(q, 0.0);
  for (const auto& row : ratings) {
    const double r = row.size();
    std::vector<double> cnt(q, 0.0);
    for (auto c : row) cnt[c] += 1;
    double s = 0;
    for (std::size_t k = 0; k < q; ++k) {
      s += cnt[k] * cnt[k];
      pj[k] += cnt[k] / (n * r);
    }
    pbar += (s - r) / (r * (r - 1)) / n;
  }
  double pe = 0;
  for (double p : pj) pe += p * p;
  return (pbar - pe) / (1 - pe);
}

double shingle_jaccard(const std::string& a, const std::string& b) {
  const auto wa = words(a), wb = words(b);
  if (wa.size() < 3 || wb.size() < 3) return wa == wb ? 1.0 : 0.0;
  std::set<std::vector<std::string>> sa, sb;
  for (std::size_t i = 0; i + 3 <= wa.size(); ++i) sa.insert({wa[i], wa[i + 1], wa[i + 2]});
  for (std::size_t i = 0; i + 3 <= wb.size(); ++i) sb.insert({wb[i], wb[i + 1], wb[i + 2]});
  std::size_t inter = 0;
  for (const auto& s : sa) inter += sb.count(s);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

std::vector<std::string> clean_violations(const Trajectory& t, const DetectorConfig& cfg) {
  std::vector<std::string> why;
  std::vector<std::string> user, assistant;
  for (const auto& m : t.messages) {
    const auto norm = normalize(m.text);
    if (m.role == Role::User) {
      user.push_back(norm);
      for (const Lexicon* lex : {&cfg.interaction.misalignment, &cfg.interaction.disengagement,
                                 &cfg.interaction.satisfaction})
        if (!fuzzy_find(norm, *lex).empty()) why.push_back("cue in message " + std::to_string(m.index));
    }
    if (m.role == Role::Assistant && !norm.empty()) assistant.push_back(norm);
    if (m.observation) {
      const auto& o = *m.observation;
      const auto pn = normalize(o.payload);
      std::string trimmed = o.payload;
      trimmed.erase(0, trimmed.find_first_not_of(" \t\r\n"));
      trimmed.erase(trimmed.find_last_not_of(" \t\r\n") + 1);
      if (o.status == ObservationStatus::Error) why.push_back("error status");
      if (pn.empty() || trimmed == "[]" || trimmed == "{}" || trimmed == "null" || trimmed == "None" ||
          trimmed == "\"\"" || trimmed == "''")
        why.push_back("empty payload");
      if (!fuzzy_find(pn, cfg.execution.empty_result_markers).empty()) why.push_back("not-found marker");
      if (o.status == ObservationStatus::Unknown && words(pn).size() > 0 && words(pn)[0] == "error")
        why.push_back("error payload");
      for (const auto& [name, lex] : cfg.exhaustion.groups)
        if (!fuzzy_find(pn, lex).empty()) why.push_back("exhaustion marker " + name);
    }
  }
  for (std::size_t i = 0; i < user.size(); ++i)
    for (std::size_t j = i + 1; j < user.size(); ++j) {
      const auto a = words(user[i]), b = words(user[j]);
      std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end()), u = sa;
      u.insert(sb.begin(), sb.end());
      std::size_t inter = 0;
      for (const auto& w : sa) inter += sb.count(w);
      if (!u.empty() && static_cast<double>(inter) / u.size() >= cfg.interaction.rephrase_similarity_threshold)
        why.push_back("similar user turns");
    }
  for (std::size_t i = 0; i < assistant.size(); ++i)
    for (std::size_t j = i + 1; j < assistant.size(); ++j)
      if (shingle_jaccard(assistant[i], assistant[j]) >= cfg.interaction.duplicate_threshold)
        why.push_back("duplicate assistant turns");
  if (static_cast<double>(user.size()) > cfg.interaction.prolonged_factor * cfg.interaction.baseline_user_turns)
    why.push_back("prolonged");
  if (auto it = t.meta.find("session_end"); it != t.meta.end() && it->second == "abandoned")
    why.push_back("abandoned");

  std::vector<CallView> calls;
  for (const auto& m : t.messages)
    for (const auto& inv : m.tool_calls) calls.push_back({inv.tool_name, canonical_arguments(inv.arguments), m.index});
  if (!loop_runs(calls, cfg.execution).empty()) why.push_back("loop");
  return why;
}

}  // namespace trajsig::oracle
