#pragma once

// BM25 over documents (abstract or full text) or passages, plus the
// answer-containment test used for accuracy metrics and negative filtering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dhr/corpus.hpp"
#include "dhr/error.hpp"
#include "dhr/text.hpp"
#include "dhr/types.hpp"

namespace dhr {

enum class Bm25Field { passage_text, doc_abstract, doc_fulltext };

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Inverted index over lowercase, punctuation-stripped, whitespace-tokenized
/// terms. Immutable after build; concurrent searches are safe.
class Bm25Index {
 public:
  Bm25Field field = Bm25Field::passage_text;
  Bm25Params params;
  std::unordered_map<std::string, std::vector<std::pair<uint32_t, uint32_t>>>
      postings;                       // term -> (unit index, term frequency)
  std::vector<std::string> unit_ids;  // index -> id
  std::vector<uint32_t> lengths;      // index -> token count
  double avg_length = 0.0;

  size_t size() const { return unit_ids.size(); }
};

inline Bm25Index build_bm25(const std::vector<std::pair<std::string, std::string>>& units,
                            Bm25Params params = {}, Bm25Field field = Bm25Field::passage_text) {
  if (params.k1 <= 0.0 || params.b < 0.0 || params.b > 1.0)
    throw DhrError(Err::config, "bm25 requires k1 > 0 and 0 <= b <= 1");

  Bm25Index index;
  index.field = field;
  index.params = params;

  std::unordered_map<std::string, uint32_t> seen;
  uint64_t total_len = 0;
  for (const auto& [unit_id, text] : units) {
    if (!seen.emplace(unit_id, 0).second)
      throw DhrError(Err::duplicate_unit_id, "duplicate unit_id '" + unit_id + "'");
    uint32_t idx = static_cast<uint32_t>(index.unit_ids.size());
    index.unit_ids.push_back(unit_id);

    std::vector<std::string> terms = normalize_tokens(text);
    index.lengths.push_back(static_cast<uint32_t>(terms.size()));
    total_len += terms.size();

    std::unordered_map<std::string, uint32_t> tf;
    for (const auto& t : terms) ++tf[t];
    for (const auto& [term, freq] : tf) index.postings[term].emplace_back(idx, freq);
  }
  index.avg_length = index.unit_ids.empty() ? 0.0
                                            : static_cast<double>(total_len) / index.unit_ids.size();
  return index;
}

/// Top-k by BM25 with IDF = ln(1 + (N - df + 0.5)/(df + 0.5)); query terms
/// contribute with multiplicity, ties break by ascending unit_id, zero-score
/// units are omitted.
inline std::vector<ScoredHit> bm25_search(const Bm25Index& index, std::string_view query,
                                          size_t k) {
  if (k < 1) throw DhrError(Err::config, "bm25_search requires k >= 1");
  const double n_units = static_cast<double>(index.size());
  if (n_units == 0.0) return {};

  std::unordered_map<uint32_t, double> acc;
  for (const std::string& term : normalize_tokens(query)) {
    auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;
    const auto& plist = it->second;
    const double df = static_cast<double>(plist.size());
    const double idf = std::log(1.0 + (n_units - df + 0.5) / (df + 0.5));
    for (const auto& [unit, tf] : plist) {
      const double len = static_cast<double>(index.lengths[unit]);
      const double denom =
          tf + index.params.k1 * (1.0 - index.params.b + index.params.b * len / index.avg_length);
      acc[unit] += idf * (tf * (index.params.k1 + 1.0)) / denom;
    }
  }

  std::vector<ScoredHit> hits;
  hits.reserve(acc.size());
  for (const auto& [unit, score] : acc) {
    if (score > 0.0) hits.push_back(ScoredHit{index.unit_ids[unit], score, {}, {}});
  }
  std::sort(hits.begin(), hits.end(), [](const ScoredHit& a, const ScoredHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.unit_id < b.unit_id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

/// True iff some answer's normalized token sequence occurs contiguously in
/// the normalized token sequence of `text`.
inline bool has_answer(std::string_view text, const std::vector<std::string>& answers) {
  if (answers.empty()) return false;
  std::vector<std::string> tokens = normalize_tokens(text);
  for (const std::string& answer : answers) {
    if (contains_subsequence(tokens, normalize_tokens(answer))) return true;
  }
  return false;
}

// --- store-backed builders --------------------------------------------------

inline Bm25Index bm25_over_passages(const CorpusStore& store, Bm25Params params = {}) {
  std::vector<std::pair<std::string, std::string>> units;
  units.reserve(store.n_passages());
  for (const std::string& id : store.passage_ids()) units.emplace_back(id, store.passage(id).text);
  return build_bm25(units, params, Bm25Field::passage_text);
}

inline Bm25Index bm25_over_abstracts(const CorpusStore& store, Bm25Params params = {}) {
  std::vector<std::pair<std::string, std::string>> units;
  units.reserve(store.n_docs());
  for (const std::string& id : store.doc_ids()) units.emplace_back(id, store.doc(id).abstract);
  return build_bm25(units, params, Bm25Field::doc_abstract);
}

inline Bm25Index bm25_over_fulltext(const CorpusStore& store, Bm25Params params = {}) {
  std::vector<std::pair<std::string, std::string>> units;
  units.reserve(store.n_docs());
  for (const std::string& id : store.doc_ids()) units.emplace_back(id, store.full_text(id));
  return build_bm25(units, params, Bm25Field::doc_fulltext);
}

}  // namespace dhr
